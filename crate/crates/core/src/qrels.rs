//! Graded relevance judgments and the TREC qrels reader.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Corpus, DocIdx};

/// Relevance grades keyed by query id then document. Absent pairs have grade 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelevanceJudgments {
    grades: BTreeMap<String, HashMap<DocIdx, u32>>,
}

impl RelevanceJudgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: impl Into<String>, doc: DocIdx, grade: u32) {
        self.grades.entry(qid.into()).or_default().insert(doc, grade);
    }

    pub fn grade(&self, qid: &str, doc: DocIdx) -> u32 {
        self.grades
            .get(qid)
            .and_then(|m| m.get(&doc))
            .copied()
            .unwrap_or(0)
    }

    /// Documents with a positive grade for `qid`, sorted by index.
    pub fn positives(&self, qid: &str) -> Vec<DocIdx> {
        let mut docs: Vec<DocIdx> = self
            .grades
            .get(qid)
            .map(|m| m.iter().filter(|(_, &g)| g > 0).map(|(&d, _)| d).collect())
            .unwrap_or_default();
        docs.sort_unstable();
        docs
    }

    /// All positive grades for `qid`, highest first.
    pub fn ideal_grades(&self, qid: &str) -> Vec<u32> {
        let mut g: Vec<u32> = self
            .grades
            .get(qid)
            .map(|m| m.values().copied().filter(|&g| g > 0).collect())
            .unwrap_or_default();
        g.sort_unstable_by(|a, b| b.cmp(a));
        g
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    /// Number of stored (qid, doc) pairs, including zero grades.
    pub fn len(&self) -> usize {
        self.grades.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Render as `qid 0 docid grade` lines sorted by qid then doc id.
    pub fn to_trec(&self, corpus: &Corpus) -> String {
        let mut out = String::new();
        for (qid, docs) in &self.grades {
            let mut docs: Vec<_> = docs.iter().collect();
            docs.sort_by(|a, b| corpus.cmp_ids(*a.0, *b.0));
            for (&d, &g) in docs {
                out.push_str(&format!("{qid} 0 {} {g}\n", corpus.id(d)));
            }
        }
        out
    }
}

/// Result of reading a qrels file against a corpus.
#[derive(Clone, Debug)]
pub struct QrelsLoad {
    pub judgments: RelevanceJudgments,
    /// Labels whose document id is not in the corpus.
    pub dropped: usize,
}

pub fn load_qrels(path: impl AsRef<Path>, corpus: &Corpus) -> Result<QrelsLoad> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text, corpus).map_err(|msg| Error::load(path, msg))
}

/// Parse whitespace-separated `qid iteration docid grade` lines.
///
/// Negative grades (TREC uses them for junk documents) are stored as 0.
pub fn parse_qrels(text: &str, corpus: &Corpus) -> std::result::Result<QrelsLoad, String> {
    let mut judgments = RelevanceJudgments::new();
    let mut dropped = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(format!(
                "line {}: expected 4 fields `qid 0 docid grade`, found {}",
                lineno + 1,
                fields.len()
            ));
        }
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| format!("line {}: grade {:?} is not an integer", lineno + 1, fields[3]))?;
        match corpus.index_of(fields[2]) {
            Some(doc) => judgments.insert(fields[0], doc, grade.clamp(0, u32::MAX as i64) as u32),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} relevance labels for documents not in the corpus");
    }
    Ok(QrelsLoad { judgments, dropped })
}
