use std::collections::{HashSet, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{greedy_beam_search, GraphIndex};
use crate::rerank::Reranker;
use crate::search::{sliding_window_pass, SearchTrace, Session, TraceEvent, TOP_N};
use crate::types::{Corpus, DocIdx, QueryRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RrParams {
    /// Shortlist depth, which is also the budget.
    pub k: usize,
    pub window: usize,
    pub search_beam: usize,
}

impl RrParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            window: 10,
            search_beam: 64,
        }
    }
}

fn shortlist(
    query: &QueryRecord,
    corpus: &Corpus,
    index: &GraphIndex,
    k: usize,
    search_beam: usize,
) -> Result<Vec<DocIdx>> {
    if k == 0 {
        return Err(Error::invalid("shortlist depth must be at least 1"));
    }
    if k > corpus.len() {
        return Err(Error::invalid(format!(
            "shortlist depth {k} exceeds corpus size {}",
            corpus.len()
        )));
    }
    index.check_corpus(corpus)?;
    Ok(greedy_beam_search(
        index,
        corpus,
        &[index.default_start()],
        query.embedding.as_slice(),
        search_beam.max(k),
        k,
    )?
    .top)
}

/// Rerank the ANN top-`k` with one backward sliding-window pass.
pub fn retrieve_and_rerank(
    query: &QueryRecord,
    corpus: &Corpus,
    index: &GraphIndex,
    backend: &dyn Reranker,
    params: &RrParams,
) -> Result<SearchTrace> {
    if params.window < 2 {
        return Err(Error::invalid("window must be at least 2"));
    }
    let mut list = shortlist(query, corpus, index, params.k, params.search_beam)?;
    let mut session = Session::new(backend, query, corpus, params.k)?;
    session.events.push(TraceEvent::Seeds(list.clone()));
    sliding_window_pass(&mut session, &mut list, usize::MAX, 0, params.window)?;
    session.finish("rr", &list)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlideGarParams {
    pub budget: usize,
    pub window: usize,
    pub search_beam: usize,
}

impl SlideGarParams {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            window: 20,
            search_beam: 64,
        }
    }
}

/// SlideGAR: windows of new documents alternate between the ANN shortlist
/// and a FIFO frontier fed by the graph neighbors of each window's top half.
/// A window the preferred source cannot fill is topped up from the other one.
///
/// The shortlist comes from `ann_index`; the frontier uses `corpus_graph`.
/// The best `window / 2` documents so far are kept in a head list, which is
/// merged with the top half of every new window in a rerank of already
/// scanned documents.
pub fn slidegar_search(
    query: &QueryRecord,
    corpus: &Corpus,
    ann_index: &GraphIndex,
    corpus_graph: &GraphIndex,
    backend: &dyn Reranker,
    params: &SlideGarParams,
) -> Result<SearchTrace> {
    if params.window < 2 {
        return Err(Error::invalid("window must be at least 2"));
    }
    corpus_graph.check_corpus(corpus)?;
    let k = params.budget.min(corpus.len());
    let mut pending: VecDeque<DocIdx> = shortlist(query, corpus, ann_index, k, params.search_beam)?.into();
    let mut session = Session::new(backend, query, corpus, params.budget)?;
    session.events.push(TraceEvent::Seeds(pending.iter().copied().collect()));
    let half = (params.window / 2).max(1);

    let mut frontier: VecDeque<DocIdx> = VecDeque::new();
    let mut queued: HashSet<DocIdx> = HashSet::new();
    let mut head: Vec<DocIdx> = Vec::new();
    let mut from_frontier = false;

    while session.ledger.remaining() > 0 {
        let size = params.window.min(session.ledger.remaining());
        let mut window = Vec::with_capacity(size);
        let sources: [bool; 2] = [from_frontier, !from_frontier];
        for use_frontier in sources {
            let src = if use_frontier { &mut frontier } else { &mut pending };
            while window.len() < size {
                let Some(d) = src.pop_front() else { break };
                if !session.ledger.is_scanned(d) && !window.contains(&d) {
                    window.push(d);
                }
            }
        }
        if window.is_empty() {
            break;
        }
        from_frontier = !from_frontier;

        let Some(order) = session.rerank(&window)? else { break };
        let top: Vec<DocIdx> = order.iter().copied().take(half).collect();

        let mut added = Vec::new();
        for &d in &top {
            for &u in corpus_graph.neighbors(d) {
                if !session.ledger.is_scanned(u) && queued.insert(u) {
                    frontier.push_back(u);
                    added.push(u);
                }
            }
        }
        if !added.is_empty() {
            session.events.push(TraceEvent::Frontier(added));
        }

        if head.is_empty() {
            head = top;
        } else {
            let mut merged = head.clone();
            merged.extend(top);
            head = match session.rerank(&merged)? {
                Some(o) => o.into_iter().take(half.max(TOP_N)).collect(),
                None => break,
            };
        }
    }
    session.finish("slidegar", &head)
}

/// Control: rerank `budget` documents drawn uniformly at random.
pub fn random_scan(
    query: &QueryRecord,
    corpus: &Corpus,
    backend: &dyn Reranker,
    budget: usize,
    window: usize,
    seed: u64,
) -> Result<SearchTrace> {
    if window < 2 {
        return Err(Error::invalid("window must be at least 2"));
    }
    let n = corpus.len();
    if budget == 0 || budget > n {
        return Err(Error::invalid(format!("random scan budget must be in 1..={n}")));
    }
    let mut h: u64 = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in query.qid.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let mut list: Vec<DocIdx> = sample(&mut rng, n, budget).into_iter().map(|i| i as DocIdx).collect();
    let mut session = Session::new(backend, query, corpus, budget)?;
    session.events.push(TraceEvent::Seeds(list.clone()));
    sliding_window_pass(&mut session, &mut list, usize::MAX, 0, window)?;
    session.finish("random", &list)
}
