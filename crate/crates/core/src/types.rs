//! Shared domain types: embeddings, the document corpus, queries and ranked output.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Dense index of a document inside its [`Corpus`] (insertion order).
pub type DocIdx = u32;

/// A fixed-dimension vector of finite `f32` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding must have positive dimension"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "embedding component {pos} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.values
    }

    /// Unit-length copy. The zero vector is returned unchanged.
    pub fn normalized(&self) -> Embedding {
        let mut values = self.values.clone();
        normalize_in_place(&mut values);
        Embedding { values }
    }
}

pub(crate) fn normalize_in_place(values: &mut [f32]) {
    let norm = values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
}

/// Inner product of two embeddings.
pub fn similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}

/// Inner product accumulated in `f64`. Callers guarantee equal lengths.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum()
}

/// Euclidean distance, used for document-document geometry during graph construction.
#[inline]
pub fn l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Ordered collection of documents with embeddings and optional text.
///
/// Documents are addressed by [`DocIdx`] (their insertion position); the
/// opaque string id is kept for I/O and for deterministic tie-breaking.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    dim: usize,
    ids: Vec<String>,
    lookup: HashMap<String, DocIdx>,
    vectors: Vec<f32>,
    texts: Vec<Option<String>>,
}

impl Corpus {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            lookup: HashMap::new(),
            vectors: Vec::new(),
            texts: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        id: impl Into<String>,
        embedding: Embedding,
        text: Option<String>,
    ) -> Result<DocIdx> {
        let id = id.into();
        if embedding.dim() != self.dim {
            return Err(Error::invalid(format!(
                "document {id:?} has dimension {} but corpus dimension is {}",
                embedding.dim(),
                self.dim
            )));
        }
        if self.lookup.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate document id {id:?}")));
        }
        if self.ids.len() >= u32::MAX as usize {
            return Err(Error::invalid("corpus too large"));
        }
        let idx = self.ids.len() as DocIdx;
        self.lookup.insert(id.clone(), idx);
        self.ids.push(id);
        self.vectors.extend_from_slice(embedding.as_slice());
        self.texts.push(text);
        Ok(idx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, idx: DocIdx) -> &str {
        &self.ids[idx as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<DocIdx> {
        self.lookup.get(id).copied()
    }

    pub fn vector(&self, idx: DocIdx) -> &[f32] {
        let start = idx as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn embedding(&self, idx: DocIdx) -> Embedding {
        Embedding {
            values: self.vector(idx).to_vec(),
        }
    }

    pub fn text(&self, idx: DocIdx) -> Option<&str> {
        self.texts[idx as usize].as_deref()
    }

    pub fn indices(&self) -> std::ops::Range<DocIdx> {
        0..self.len() as DocIdx
    }

    /// Ascending string-id order, the tie-break used everywhere.
    #[inline]
    pub fn cmp_ids(&self, a: DocIdx, b: DocIdx) -> Ordering {
        self.ids[a as usize].cmp(&self.ids[b as usize])
    }

    /// Scale every document vector to unit length.
    pub fn normalize(&mut self) {
        for chunk in self.vectors.chunks_mut(self.dim) {
            normalize_in_place(chunk);
        }
    }

    /// Copy of the corpus with every embedding replaced, keeping ids and text.
    pub fn with_vectors(&self, embeddings: Vec<Embedding>) -> Result<Corpus> {
        if embeddings.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} embeddings, got {}",
                self.len(),
                embeddings.len()
            )));
        }
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for e in &embeddings {
            if e.dim() != self.dim {
                return Err(Error::invalid("embedding dimension mismatch"));
            }
            vectors.extend_from_slice(e.as_slice());
        }
        Ok(Corpus {
            dim: self.dim,
            ids: self.ids.clone(),
            lookup: self.lookup.clone(),
            vectors,
            texts: self.texts.clone(),
        })
    }

    pub fn embeddings(&self) -> Vec<Embedding> {
        self.indices().map(|i| self.embedding(i)).collect()
    }

    /// Every document ordered by similarity to `query`, best first, ties by id.
    pub fn exhaustive_ranking(&self, query: &[f32]) -> Vec<DocIdx> {
        let scores: Vec<f64> = self.indices().map(|i| dot(query, self.vector(i))).collect();
        let mut order: Vec<DocIdx> = self.indices().collect();
        order.sort_by(|&a, &b| {
            scores[b as usize]
                .total_cmp(&scores[a as usize])
                .then_with(|| self.cmp_ids(a, b))
        });
        order
    }
}

/// A query: its id, the embedding used for retrieval and optional text for text rerankers.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub qid: String,
    pub embedding: Embedding,
    pub text: Option<String>,
}

impl QueryRecord {
    pub fn new(qid: impl Into<String>, embedding: Embedding, text: Option<String>) -> Self {
        Self {
            qid: qid.into(),
            embedding,
            text,
        }
    }
}

/// Duplicate-free ranking returned for one query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedList {
    pub qid: String,
    entries: Vec<DocIdx>,
}

impl RankedList {
    pub fn new(qid: impl Into<String>, entries: Vec<DocIdx>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        if let Some(dup) = entries.iter().find(|d| !seen.insert(**d)) {
            return Err(Error::invalid(format!(
                "ranked list contains document {dup} twice"
            )));
        }
        Ok(Self {
            qid: qid.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[DocIdx] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
