use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{greedy_beam_search, GraphIndex};
use crate::types::{Corpus, DocIdx};

/// Where a graph search starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStrategy {
    /// The closest documents found by beam search from the index start.
    Exact,
    /// Documents at exhaustive similarity ranks `rank, rank + 1, ...` (1-based).
    Noisy { rank: usize },
    /// The index's default start vertex, whatever the query.
    IndexDefault,
}

impl std::fmt::Display for StartStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartStrategy::Exact => f.write_str("exact"),
            StartStrategy::Noisy { rank } => write!(f, "noisy:{rank}"),
            StartStrategy::IndexDefault => f.write_str("index_default"),
        }
    }
}

impl std::str::FromStr for StartStrategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(StartStrategy::Exact),
            "noisy" => Ok(StartStrategy::Noisy { rank: 1000 }),
            "index_default" | "default" => Ok(StartStrategy::IndexDefault),
            other => match other.strip_prefix("noisy:").map(str::parse::<usize>) {
                Some(Ok(rank)) if rank >= 1 => Ok(StartStrategy::Noisy { rank }),
                _ => Err(format!(
                    "unknown start strategy {other:?} (exact, noisy[:RANK], index_default)"
                )),
            },
        }
    }
}

/// Seed documents for a search. `IndexDefault` always yields the single default start.
pub fn start_points(
    query: &[f32],
    index: &GraphIndex,
    corpus: &Corpus,
    strategy: StartStrategy,
    count: usize,
    search_beam: usize,
) -> Result<Vec<DocIdx>> {
    if count == 0 {
        return Err(Error::invalid("start point count must be at least 1"));
    }
    index.check_corpus(corpus)?;
    match strategy {
        StartStrategy::Exact => Ok(greedy_beam_search(
            index,
            corpus,
            &[index.default_start()],
            query,
            search_beam.max(count),
            count,
        )?
        .top),
        StartStrategy::Noisy { rank } => {
            if rank == 0 || rank + count > corpus.len() {
                return Err(Error::invalid(format!(
                    "noisy start rank {rank} with {count} seeds needs rank + count <= {} documents",
                    corpus.len()
                )));
            }
            if query.len() != corpus.dim() {
                return Err(Error::invalid("query dimension does not match corpus"));
            }
            let ranking = corpus.exhaustive_ranking(query);
            Ok(ranking[rank - 1..rank - 1 + count].to_vec())
        }
        StartStrategy::IndexDefault => Ok(vec![index.default_start()]),
    }
}
