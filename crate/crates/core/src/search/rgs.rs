use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphIndex;
use crate::rerank::Reranker;
use crate::search::{sliding_window_pass, start_points, SearchTrace, Session, StartStrategy, TraceEvent};
use crate::types::{Corpus, DocIdx, QueryRecord};

/// How far back the sliding pass after each expansion reaches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassMode {
    /// Always down to position 0.
    Full,
    /// Down to one half-window before the newly appended documents.
    Tail,
}

impl std::str::FromStr for PassMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(PassMode::Full),
            "tail" => Ok(PassMode::Tail),
            other => Err(format!("unknown pass mode {other:?} (full, tail)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgsParams {
    pub budget: usize,
    /// Length `Ls` the list is cut back to after every expansion.
    pub ls: usize,
    pub window: usize,
    pub seeds: usize,
    pub start: StartStrategy,
    pub pass_mode: PassMode,
    /// Beam width for exact start points.
    pub search_beam: usize,
}

/// 20 up to a budget of 100, 30 up to 300, 50 beyond.
pub fn default_ls(budget: usize) -> usize {
    match budget {
        0..=100 => 20,
        101..=300 => 30,
        _ => 50,
    }
}

impl RgsParams {
    pub fn for_budget(budget: usize) -> Self {
        Self {
            budget,
            ls: default_ls(budget),
            window: 10,
            seeds: (budget / 5).max(1),
            start: StartStrategy::Exact,
            pass_mode: PassMode::Full,
            search_beam: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid("window must be at least 2"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("seeds must be at least 1"));
        }
        if self.budget < self.seeds {
            return Err(Error::invalid(format!(
                "budget must be >= seeds (budget {}, seeds {})",
                self.budget, self.seeds
            )));
        }
        if self.ls < self.window / 2 {
            return Err(Error::invalid("Ls must be at least half the window"));
        }
        Ok(())
    }
}

pub fn rgs_search(
    query: &QueryRecord,
    corpus: &Corpus,
    index: &GraphIndex,
    backend: &dyn Reranker,
    params: &RgsParams,
) -> Result<SearchTrace> {
    params.validate()?;
    let seeds = start_points(
        query.embedding.as_slice(),
        index,
        corpus,
        params.start,
        params.seeds,
        params.search_beam,
    )?;
    rgs_search_with_seeds(query, corpus, index, backend, params, &seeds)
}

/// RGS from explicit seed documents; `params.start` and `params.seeds` are not consulted.
pub fn rgs_search_with_seeds(
    query: &QueryRecord,
    corpus: &Corpus,
    index: &GraphIndex,
    backend: &dyn Reranker,
    params: &RgsParams,
    seeds: &[DocIdx],
) -> Result<SearchTrace> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    index.check_corpus(corpus)?;
    if seeds.is_empty() {
        return Err(Error::invalid("RGS needs at least one seed"));
    }
    let w = params.window;
    let mut session = Session::new(backend, query, corpus, params.budget)?;

    let mut list: Vec<DocIdx> = Vec::with_capacity(params.ls + index.degree_bound());
    let mut listed: HashSet<DocIdx> = HashSet::new();
    for &s in seeds {
        if listed.insert(s) {
            list.push(s);
        }
    }
    session.events.push(TraceEvent::Seeds(list.clone()));
    if sliding_window_pass(&mut session, &mut list, usize::MAX, 0, w)? {
        return session.finish("rgs", &list);
    }
    truncate(&mut session, &mut list, params.ls);

    let mut expanded: HashSet<DocIdx> = HashSet::new();
    while session.ledger.remaining() > 0 {
        let Some(&v) = list.iter().find(|d| !expanded.contains(d)) else {
            break;
        };
        expanded.insert(v);
        let listed: HashSet<DocIdx> = list.iter().copied().collect();
        let appended: Vec<DocIdx> = index
            .neighbors(v)
            .iter()
            .copied()
            .filter(|u| !listed.contains(u))
            .collect();
        session.events.push(TraceEvent::Expand {
            vertex: v,
            appended: appended.clone(),
        });
        if appended.is_empty() {
            continue;
        }
        let old_len = list.len();
        list.extend_from_slice(&appended);
        let stop_at = match params.pass_mode {
            PassMode::Full => 0,
            PassMode::Tail => old_len.saturating_sub(w / 2),
        };
        if sliding_window_pass(&mut session, &mut list, usize::MAX, stop_at, w)? {
            break;
        }
        truncate(&mut session, &mut list, params.ls);
    }
    session.finish("rgs", &list)
}

fn truncate(session: &mut Session<'_>, list: &mut Vec<DocIdx>, ls: usize) {
    if list.len() > ls {
        let cut = list.split_off(ls);
        session.events.push(TraceEvent::Truncated(cut));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ls_defaults() {
        assert_eq!(default_ls(100), 20);
        assert_eq!(default_ls(300), 30);
        assert_eq!(default_ls(500), 50);
        assert_eq!(default_ls(50), 20);
        assert_eq!(default_ls(1000), 50);
        let p = RgsParams::for_budget(300);
        assert_eq!((p.seeds, p.ls, p.window), (60, 30, 10));
    }

    #[test]
    fn validation() {
        let mut p = RgsParams::for_budget(100);
        assert!(p.validate().is_ok());
        p.budget = 0;
        assert!(p.validate().is_err());
        let mut p = RgsParams::for_budget(100);
        p.ls = 4;
        assert!(p.validate().is_err());
    }
}
