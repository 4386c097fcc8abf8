//! Proximity graphs over a corpus: Vamana (DiskANN) construction, exact KNN
//! graphs and random regular graphs, plus greedy beam search and persistence.

mod beam;
mod persist;
mod simple;
mod vamana;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use beam::{beam_search_by, greedy_beam_search, BeamResult, Neighbors};
pub use persist::{decode_index, encode_index, load_index, save_index, INDEX_MAGIC, INDEX_VERSION};
pub use simple::{build_knn, build_random};
pub use vamana::{build_diskann, medoid, robust_prune};

use crate::error::{Error, Result};
use crate::types::{Corpus, DocIdx};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Diskann,
    Knn,
    Random,
}

impl GraphKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            GraphKind::Diskann => 0,
            GraphKind::Knn => 1,
            GraphKind::Random => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(GraphKind::Diskann),
            1 => Some(GraphKind::Knn),
            2 => Some(GraphKind::Random),
            _ => None,
        }
    }
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphKind::Diskann => "diskann",
            GraphKind::Knn => "knn",
            GraphKind::Random => "random",
        })
    }
}

impl std::str::FromStr for GraphKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "diskann" | "vamana" => Ok(GraphKind::Diskann),
            "knn" => Ok(GraphKind::Knn),
            "random" => Ok(GraphKind::Random),
            other => Err(format!("unknown graph kind {other:?} (diskann, knn, random)")),
        }
    }
}

/// Directed graph over corpus positions with an out-degree bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphIndex {
    adjacency: Vec<Vec<DocIdx>>,
    degree_bound: usize,
    default_start: DocIdx,
    kind: GraphKind,
}

impl GraphIndex {
    /// Assemble a graph, checking ids, self-loops, duplicate edges and the degree bound.
    pub fn from_parts(
        adjacency: Vec<Vec<DocIdx>>,
        degree_bound: usize,
        default_start: DocIdx,
        kind: GraphKind,
    ) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::invalid("graph has no vertices"));
        }
        if default_start as usize >= n {
            return Err(Error::invalid("default start is not a vertex"));
        }
        for (v, nbrs) in adjacency.iter().enumerate() {
            if nbrs.len() > degree_bound {
                return Err(Error::invalid(format!(
                    "vertex {v} has degree {} above bound {degree_bound}",
                    nbrs.len()
                )));
            }
            let mut sorted = nbrs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != nbrs.len() {
                return Err(Error::invalid(format!("vertex {v} has duplicate edges")));
            }
            if let Some(&bad) = nbrs.iter().find(|&&u| u as usize >= n || u as usize == v) {
                return Err(Error::invalid(format!("vertex {v} has invalid neighbor {bad}")));
            }
        }
        Ok(Self {
            adjacency,
            degree_bound,
            default_start,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, v: DocIdx) -> &[DocIdx] {
        &self.adjacency[v as usize]
    }

    pub fn adjacency(&self) -> &[Vec<DocIdx>] {
        &self.adjacency
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn default_start(&self) -> DocIdx {
        self.default_start
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Fails unless the graph was built over a corpus of the same size.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        if corpus.len() != self.len() {
            return Err(Error::invalid(format!(
                "index has {} vertices but corpus has {} documents",
                self.len(),
                corpus.len()
            )));
        }
        Ok(())
    }

    /// Vertices reachable from the default start, in BFS order.
    pub fn reachable_from_start(&self) -> Vec<DocIdx> {
        let mut seen = vec![false; self.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.default_start]);
        seen[self.default_start as usize] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &u in self.neighbors(v) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    queue.push_back(u);
                }
            }
        }
        order
    }

    pub fn stats(&self) -> GraphStats {
        let degrees: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        let max_degree = degrees.iter().copied().max().unwrap_or(0);
        let min_degree = degrees.iter().copied().min().unwrap_or(0);
        let mean_degree = degrees.iter().sum::<usize>() as f64 / degrees.len().max(1) as f64;
        let reachable = self.reachable_from_start().len();
        GraphStats {
            kind: self.kind,
            vertices: self.len(),
            degree_bound: self.degree_bound,
            max_degree,
            min_degree,
            mean_degree,
            reachable_fraction: reachable as f64 / self.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub kind: GraphKind,
    pub vertices: usize,
    pub degree_bound: usize,
    pub max_degree: usize,
    pub min_degree: usize,
    pub mean_degree: f64,
    pub reachable_fraction: f64,
}

/// Vamana construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    /// Maximum out-degree R.
    pub degree_bound: usize,
    /// Beam width used while inserting points.
    pub build_beam: usize,
    /// Pruning slack; 1.0 keeps only strictly non-dominated edges.
    pub alpha: f64,
    pub seed: u64,
    /// Run an alpha = 1 pass before the alpha pass.
    pub two_pass: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            degree_bound: 32,
            build_beam: 64,
            alpha: 1.2,
            seed: 0,
            two_pass: true,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.degree_bound < 2 {
            return Err(Error::invalid("degree bound R must be at least 2"));
        }
        if self.build_beam < self.degree_bound {
            return Err(Error::invalid("build beam must be at least R"));
        }
        if !(self.alpha >= 1.0) {
            return Err(Error::invalid("alpha must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_parts_rejects_self_loops_and_overflow() {
        assert!(GraphIndex::from_parts(vec![vec![0], vec![]], 2, 0, GraphKind::Knn).is_err());
        assert!(GraphIndex::from_parts(vec![vec![1, 1], vec![]], 2, 0, GraphKind::Knn).is_err());
        assert!(GraphIndex::from_parts(vec![vec![1, 2], vec![0], vec![0]], 1, 0, GraphKind::Knn).is_err());
        assert!(GraphIndex::from_parts(vec![vec![5]], 2, 0, GraphKind::Knn).is_err());
        assert!(GraphIndex::from_parts(vec![vec![1], vec![0]], 2, 0, GraphKind::Knn).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(BuildParams::default().validate().is_ok());
        let p = BuildParams { degree_bound: 1, ..Default::default() };
        assert!(p.validate().is_err());
        let p = BuildParams { build_beam: 8, degree_bound: 16, ..Default::default() };
        assert!(p.validate().is_err());
        let p = BuildParams { alpha: 0.9, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn kind_parse_roundtrip() {
        for k in [GraphKind::Diskann, GraphKind::Knn, GraphKind::Random] {
            assert_eq!(k.to_string().parse::<GraphKind>().unwrap(), k);
            assert_eq!(GraphKind::from_code(k.code()), Some(k));
        }
    }
}
