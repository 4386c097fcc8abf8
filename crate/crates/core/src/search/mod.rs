//! Budgeted retrieval strategies: reranker-guided graph search (RGS),
//! retrieve-and-rerank (RR), SlideGAR and a random-scan control.

mod baselines;
mod rgs;
mod start;

use serde_json::json;

pub use baselines::{random_scan, retrieve_and_rerank, slidegar_search, RrParams, SlideGarParams};
pub use rgs::{default_ls, rgs_search, rgs_search_with_seeds, PassMode, RgsParams};
pub use start::{start_points, StartStrategy};

use crate::budget::{budget_gate, Admission, BudgetLedger};
use crate::error::Result;
use crate::rerank::{rerank_window, Fallback, Reranker};
use crate::types::{Corpus, DocIdx, QueryRecord, RankedList};

pub const TOP_N: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub enum TraceEvent {
    Seeds(Vec<DocIdx>),
    Window {
        input: Vec<DocIdx>,
        output: Vec<DocIdx>,
        new_docs: usize,
        /// Length of the requested window when only a prefix was admitted.
        truncated_from: Option<usize>,
        fallback: Option<Fallback>,
    },
    /// A window that would have scanned new documents with no budget left.
    Rejected(Vec<DocIdx>),
    Expand { vertex: DocIdx, appended: Vec<DocIdx> },
    /// Unscanned documents removed from the list once the budget ran out.
    Dropped(Vec<DocIdx>),
    /// Documents cut from the tail of the list by the `Ls` truncation.
    Truncated(Vec<DocIdx>),
    Frontier(Vec<DocIdx>),
}

#[derive(Clone, Debug)]
pub struct SearchTrace {
    pub qid: String,
    pub method: String,
    pub events: Vec<TraceEvent>,
    pub ledger: BudgetLedger,
    pub exhausted: bool,
    pub result: RankedList,
}

impl SearchTrace {
    pub fn top(&self) -> &[DocIdx] {
        self.result.entries()
    }

    pub fn scanned(&self) -> &[DocIdx] {
        self.ledger.scan_order()
    }

    pub fn fallbacks(&self) -> usize {
        self.windows().filter(|(_, f)| f.is_some()).count()
    }

    /// Windows whose backend call failed, as opposed to returning a bad order.
    pub fn backend_failures(&self) -> usize {
        self.windows()
            .filter(|(_, f)| matches!(f, Some(Fallback::Backend(_))))
            .count()
    }

    fn windows(&self) -> impl Iterator<Item = (&Vec<DocIdx>, &Option<Fallback>)> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Window { input, fallback, .. } => Some((input, fallback)),
            _ => None,
        })
    }

    /// One JSON object per line: every event, then a summary line.
    pub fn to_json_lines(&self, corpus: &Corpus) -> String {
        let ids = |docs: &[DocIdx]| -> Vec<&str> { docs.iter().map(|&d| corpus.id(d)).collect() };
        let mut out = String::new();
        for e in &self.events {
            let v = match e {
                TraceEvent::Seeds(d) => json!({"event": "seeds", "docs": ids(d)}),
                TraceEvent::Window { input, output, new_docs, truncated_from, fallback } => json!({
                    "event": "window",
                    "input": ids(input),
                    "output": ids(output),
                    "new_docs": new_docs,
                    "truncated_from": truncated_from,
                    "fallback": fallback,
                }),
                TraceEvent::Rejected(d) => json!({"event": "rejected", "docs": ids(d)}),
                TraceEvent::Expand { vertex, appended } => json!({
                    "event": "expand",
                    "vertex": corpus.id(*vertex),
                    "appended": ids(appended),
                }),
                TraceEvent::Dropped(d) => json!({"event": "dropped", "docs": ids(d)}),
                TraceEvent::Truncated(d) => json!({"event": "truncated", "docs": ids(d)}),
                TraceEvent::Frontier(d) => json!({"event": "frontier", "docs": ids(d)}),
            };
            out.push_str(&format!("{{\"qid\":{},\"method\":{},", json!(self.qid), json!(self.method)));
            out.push_str(&v.to_string()[1..]);
            out.push('\n');
        }
        let summary = json!({
            "qid": self.qid,
            "method": self.method,
            "event": "final",
            "budget": self.ledger.budget(),
            "scanned": ids(self.scanned()),
            "doc_views": self.ledger.doc_views,
            "calls": self.ledger.calls,
            "tokens_in": self.ledger.tokens_in,
            "tokens_out": self.ledger.tokens_out,
            "exhausted": self.exhausted,
            "result": ids(self.top()),
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Per-query state shared by all strategies: ledger, event log and reranker access.
pub(crate) struct Session<'a> {
    backend: &'a dyn Reranker,
    query: &'a QueryRecord,
    corpus: &'a Corpus,
    pub(crate) ledger: BudgetLedger,
    pub(crate) events: Vec<TraceEvent>,
    pub(crate) exhausted: bool,
}

impl<'a> Session<'a> {
    pub(crate) fn new(
        backend: &'a dyn Reranker,
        query: &'a QueryRecord,
        corpus: &'a Corpus,
        budget: usize,
    ) -> Result<Self> {
        Ok(Self {
            backend,
            query,
            corpus,
            ledger: BudgetLedger::new(budget)?,
            events: Vec::new(),
            exhausted: false,
        })
    }

    /// Rerank as much of `window` as the budget admits. `None` means rejected.
    pub(crate) fn rerank(&mut self, window: &[DocIdx]) -> Result<Option<Vec<DocIdx>>> {
        let admitted = match budget_gate(&self.ledger, window) {
            Admission::Full => window.len(),
            Admission::Truncated(m) if m > 0 => {
                self.exhausted = true;
                m
            }
            Admission::Truncated(_) | Admission::Reject => {
                self.exhausted = true;
                self.events.push(TraceEvent::Rejected(window.to_vec()));
                return Ok(None);
            }
        };
        let part = &window[..admitted];
        let out = rerank_window(self.backend, self.query, self.corpus, part, &mut self.ledger)?;
        self.events.push(TraceEvent::Window {
            input: part.to_vec(),
            output: out.order.clone(),
            new_docs: out.new_docs,
            truncated_from: (admitted < window.len()).then_some(window.len()),
            fallback: out.fallback,
        });
        Ok(Some(out.order))
    }

    pub(crate) fn drop_unscanned(&mut self, list: &mut Vec<DocIdx>) {
        let dropped: Vec<DocIdx> = list.iter().copied().filter(|&d| !self.ledger.is_scanned(d)).collect();
        if !dropped.is_empty() {
            list.retain(|&d| self.ledger.is_scanned(d));
            self.events.push(TraceEvent::Dropped(dropped));
        }
    }

    pub(crate) fn finish(self, method: &str, list: &[DocIdx]) -> Result<SearchTrace> {
        let top: Vec<DocIdx> = list.iter().copied().take(TOP_N).collect();
        Ok(SearchTrace {
            qid: self.query.qid.clone(),
            method: method.to_string(),
            events: self.events,
            ledger: self.ledger,
            exhausted: self.exhausted,
            result: RankedList::new(self.query.qid.clone(), top)?,
        })
    }
}

/// One backward sliding-window pass over `list`.
///
/// Windows are `list[max(0, i - w) .. i]` for `i = from, from - w/2, ...`, ending
/// with the first window that starts at or before `stop_at`. When the budget
/// only admits part of a window, that part is reranked, every unscanned
/// document leaves the list and the pass continues over what remains. A
/// rejected window also removes unscanned documents and ends the pass.
/// Returns whether the budget ran out during the pass.
pub(crate) fn sliding_window_pass(
    session: &mut Session<'_>,
    list: &mut Vec<DocIdx>,
    from: usize,
    stop_at: usize,
    w: usize,
) -> Result<bool> {
    let step = (w / 2).max(1);
    let mut stop_at = stop_at;
    let mut i = from.min(list.len());
    let mut exhausted = false;
    while i > 0 {
        let mut start = i.saturating_sub(w);
        let window = list[start..i].to_vec();
        let Some(order) = session.rerank(&window)? else {
            session.drop_unscanned(list);
            return Ok(true);
        };
        list[start..start + order.len()].copy_from_slice(&order);
        if order.len() < window.len() {
            exhausted = true;
            let unscanned_before = |end: usize, l: &[DocIdx]| {
                l[..end.min(l.len())].iter().filter(|&&d| !session.ledger.is_scanned(d)).count()
            };
            let shift_start = unscanned_before(start, list);
            let shift_stop = unscanned_before(stop_at, list);
            session.drop_unscanned(list);
            start -= shift_start;
            stop_at -= shift_stop;
            if start <= stop_at {
                break;
            }
            i = (start + w - step).min(list.len());
            continue;
        }
        if start <= stop_at {
            break;
        }
        i -= step;
    }
    Ok(exhausted)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::qrels::RelevanceJudgments;
    use crate::rerank::Oracle;
    use crate::types::Embedding;
    use std::sync::Arc;

    /// Corpus of `n` docs where the oracle order is simply ascending doc index
    /// reversed: doc `n-1` is best. Grades are all 0 and similarity is `i`.
    pub(crate) fn ladder(n: usize) -> (Arc<Corpus>, QueryRecord, Oracle) {
        let mut c = Corpus::new(2);
        for i in 0..n {
            c.push(format!("d{i:04}"), Embedding::new(vec![i as f32, 1.0]).unwrap(), None).unwrap();
        }
        let c = Arc::new(c);
        let q = QueryRecord::new("q", Embedding::new(vec![1.0, 0.0]).unwrap(), None);
        let o = Oracle::new(c.clone(), Arc::new(RelevanceJudgments::new()), &[q.clone()]);
        (c, q, o)
    }

    #[test]
    fn single_window_sorts() {
        let (c, q, o) = ladder(10);
        let mut s = Session::new(&o, &q, &c, 100).unwrap();
        let mut a: Vec<DocIdx> = (0..10).collect();
        assert!(!sliding_window_pass(&mut s, &mut a, 10, 0, 10).unwrap());
        assert_eq!(a, (0..10).rev().collect::<Vec<_>>());
        assert_eq!(s.ledger.calls, 1);
    }

    #[test]
    fn best_bubbles_to_front_over_thirty() {
        let (c, q, o) = ladder(30);
        let mut s = Session::new(&o, &q, &c, 100).unwrap();
        let mut a: Vec<DocIdx> = (0..30).collect();
        sliding_window_pass(&mut s, &mut a, 30, 0, 10).unwrap();
        assert_eq!(a[0], 29);
        // windows [20,30) [15,25) [10,20) [5,15) [0,10)
        assert_eq!(s.ledger.calls, 5);
        // the best w/2 reach the front in order
        assert_eq!(&a[..5], &[29, 28, 27, 26, 25]);
    }

    #[test]
    fn zero_remaining_leaves_scanned_list_unchanged() {
        let (c, q, o) = ladder(20);
        let mut s = Session::new(&o, &q, &c, 5).unwrap();
        s.ledger.charge_window(&[0, 1, 2, 3, 4]).unwrap();
        let mut a: Vec<DocIdx> = vec![0, 1, 2, 3, 4, 10, 11];
        let before = a.clone();
        assert!(sliding_window_pass(&mut s, &mut a, 7, 0, 10).unwrap());
        assert_eq!(a, before[..5].to_vec());
        let mut b: Vec<DocIdx> = vec![4, 3, 2, 1, 0];
        assert!(!sliding_window_pass(&mut s, &mut b, 0, 0, 10).unwrap());
        assert_eq!(b, vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn truncation_drops_unscanned_and_finishes_free() {
        let (c, q, o) = ladder(40);
        let mut s = Session::new(&o, &q, &c, 13).unwrap();
        let mut a: Vec<DocIdx> = (0..10).collect();
        sliding_window_pass(&mut s, &mut a, 10, 0, 10).unwrap();
        a.extend(20..30);
        assert!(sliding_window_pass(&mut s, &mut a, 20, 0, 10).unwrap());
        assert_eq!(s.ledger.scanned_count(), 13);
        assert_eq!(a.len(), 13);
        assert!(a.iter().all(|&d| s.ledger.is_scanned(d)));
        assert_eq!(a[0], 22);
    }

    #[test]
    fn trace_lines_are_json() {
        let (c, q, o) = ladder(12);
        let mut s = Session::new(&o, &q, &c, 100).unwrap();
        let mut a: Vec<DocIdx> = (0..12).collect();
        sliding_window_pass(&mut s, &mut a, 12, 0, 10).unwrap();
        let t = s.finish("test", &a).unwrap();
        let text = t.to_json_lines(&c);
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["event"], "window");
        assert_eq!(lines[2]["event"], "final");
        assert_eq!(lines[2]["result"][0], "d0011");
        assert_eq!(t.top().len(), 10);
    }
}
