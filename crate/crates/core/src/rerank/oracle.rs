//! Rerankers computed from judgments or embeddings rather than a model.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::qrels::RelevanceJudgments;
use crate::rerank::{Reranker, WindowRequest, WindowResponse};
use crate::types::{dot, Corpus, DocIdx, QueryRecord};

/// Ground-truth reranker: grade descending, then similarity to the query, then id.
///
/// Similarities are taken against the corpus and query embeddings given at
/// construction, so perturbing what the search sees does not change the oracle.
#[derive(Clone, Debug)]
pub struct Oracle {
    corpus: Arc<Corpus>,
    qrels: Arc<RelevanceJudgments>,
    queries: HashMap<String, Vec<f32>>,
    max_doc_norm: f64,
}

impl Oracle {
    pub fn new(corpus: Arc<Corpus>, qrels: Arc<RelevanceJudgments>, queries: &[QueryRecord]) -> Self {
        let max_doc_norm = corpus
            .indices()
            .map(|d| dot(corpus.vector(d), corpus.vector(d)).sqrt())
            .fold(0.0, f64::max);
        let queries = queries
            .iter()
            .map(|q| (q.qid.clone(), q.embedding.as_slice().to_vec()))
            .collect();
        Self {
            corpus,
            qrels,
            queries,
            max_doc_norm,
        }
    }

    fn query_vector<'a>(&'a self, query: &'a QueryRecord) -> &'a [f32] {
        self.queries
            .get(&query.qid)
            .map(Vec::as_slice)
            .unwrap_or(query.embedding.as_slice())
    }

    fn check(&self, request: &WindowRequest<'_>) -> Result<()> {
        if request.corpus.len() != self.corpus.len() {
            return Err(Error::Backend("oracle corpus differs from search corpus".into()));
        }
        Ok(())
    }

    /// Per-query constant exceeding twice the largest possible |similarity|.
    pub fn large(&self, query: &QueryRecord) -> f64 {
        let q = self.query_vector(query);
        2.0 * dot(q, q).sqrt() * self.max_doc_norm + 1.0
    }

    pub fn grade(&self, qid: &str, doc: DocIdx) -> u32 {
        self.qrels.grade(qid, doc)
    }

    pub fn similarity(&self, query: &QueryRecord, doc: DocIdx) -> f64 {
        dot(self.query_vector(query), self.corpus.vector(doc))
    }

    /// `grade * LARGE + similarity`.
    pub fn score(&self, query: &QueryRecord, doc: DocIdx) -> f64 {
        self.grade(&query.qid, doc) as f64 * self.large(query) + self.similarity(query, doc)
    }

    /// Sort `docs` into oracle order.
    pub fn order(&self, query: &QueryRecord, docs: &[DocIdx]) -> Vec<usize> {
        let keys: Vec<(u32, f64)> = docs
            .iter()
            .map(|&d| (self.grade(&query.qid, d), self.similarity(query, d)))
            .collect();
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| {
            keys[b]
                .0
                .cmp(&keys[a].0)
                .then_with(|| keys[b].1.total_cmp(&keys[a].1))
                .then_with(|| self.corpus.cmp_ids(docs[a], docs[b]))
        });
        order
    }
}

impl Reranker for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn rerank(&self, request: &WindowRequest<'_>) -> Result<WindowResponse> {
        self.check(request)?;
        Ok(WindowResponse::from_order(self.order(request.query, request.docs)))
    }
}

/// Oracle score plus gaussian noise that depends only on (seed, qid, doc).
pub struct NoisyOracle {
    oracle: Oracle,
    sigma: f64,
    seed: u64,
}

impl NoisyOracle {
    pub fn new(oracle: Oracle, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("noise sigma must be a finite value >= 0"));
        }
        Ok(Self { oracle, sigma, seed })
    }

    pub fn noise(&self, qid: &str, doc: DocIdx) -> f64 {
        let mut h = Fnv::new();
        h.write(&self.seed.to_le_bytes());
        h.write(qid.as_bytes());
        h.write(&[0xff]);
        h.write(self.oracle.corpus.id(doc).as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h.0);
        let z: f64 = StandardNormal.sample(&mut rng);
        self.sigma * z
    }
}

impl Reranker for NoisyOracle {
    fn name(&self) -> &str {
        "noisy_oracle"
    }

    fn rerank(&self, request: &WindowRequest<'_>) -> Result<WindowResponse> {
        self.oracle.check(request)?;
        let docs = request.docs;
        let q = request.query;
        if self.sigma == 0.0 {
            return Ok(WindowResponse::from_order(self.oracle.order(q, docs)));
        }
        let scores: Vec<f64> = docs
            .iter()
            .map(|&d| self.oracle.score(q, d) + self.noise(&q.qid, d))
            .collect();
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.oracle.corpus.cmp_ids(docs[a], docs[b]))
        });
        Ok(WindowResponse::from_order(order))
    }
}

/// Orders by inner product between the request's query and document embeddings.
pub struct StaticScore;

impl Reranker for StaticScore {
    fn name(&self) -> &str {
        "static_score"
    }

    fn rerank(&self, request: &WindowRequest<'_>) -> Result<WindowResponse> {
        let c = request.corpus;
        let q = request.query.embedding.as_slice();
        let docs = request.docs;
        let scores: Vec<f64> = docs.iter().map(|&d| dot(q, c.vector(d))).collect();
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| c.cmp_ids(docs[a], docs[b]))
        });
        Ok(WindowResponse::from_order(order))
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Kendall rank correlation between two orderings of the same items.
pub fn kendall_tau<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let pos_b: Vec<usize> = a
        .iter()
        .map(|x| b.iter().position(|y| y == x).expect("same items"))
        .collect();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += if pos_b[i] < pos_b[j] { 1 } else { -1 };
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}
