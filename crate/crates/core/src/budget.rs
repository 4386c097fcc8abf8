//! Reranker budget accounting.
//!
//! A document is *scanned* the first time it appears in any reranker window.
//! Only scanned documents count against `budget_k`; showing an already scanned
//! document to the reranker again is free against the budget but still counted
//! in `doc_views`, `calls` and token totals.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::DocIdx;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BudgetLedger {
    budget_k: usize,
    #[serde(skip)]
    scanned: HashSet<DocIdx>,
    /// Scanned documents in first-seen order.
    scan_order: Vec<DocIdx>,
    pub doc_views: u64,
    pub calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl BudgetLedger {
    pub fn new(budget_k: usize) -> Result<Self> {
        if budget_k == 0 {
            return Err(Error::invalid("budget must be positive"));
        }
        Ok(Self {
            budget_k,
            scanned: HashSet::new(),
            scan_order: Vec::new(),
            doc_views: 0,
            calls: 0,
            tokens_in: 0,
            tokens_out: 0,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget_k
    }

    pub fn remaining(&self) -> usize {
        self.budget_k - self.scanned.len()
    }

    pub fn scanned_count(&self) -> usize {
        self.scanned.len()
    }

    pub fn is_scanned(&self, doc: DocIdx) -> bool {
        self.scanned.contains(&doc)
    }

    pub fn scanned(&self) -> &HashSet<DocIdx> {
        &self.scanned
    }

    pub fn scan_order(&self) -> &[DocIdx] {
        &self.scan_order
    }

    /// Distinct documents in `window` that have not been scanned yet.
    pub fn new_docs(&self, window: &[DocIdx]) -> usize {
        let mut fresh = HashSet::new();
        window
            .iter()
            .filter(|d| !self.scanned.contains(d) && fresh.insert(**d))
            .count()
    }

    /// Charge one reranker call over `window`. Either the whole window is
    /// charged or, if its unscanned documents do not fit, nothing changes.
    pub fn charge_window(&mut self, window: &[DocIdx]) -> Result<usize> {
        let fresh = self.new_docs(window);
        if fresh > self.remaining() {
            return Err(Error::BudgetExceeded {
                requested: fresh,
                remaining: self.remaining(),
            });
        }
        for &d in window {
            if self.scanned.insert(d) {
                self.scan_order.push(d);
            }
        }
        self.doc_views += window.len() as u64;
        self.calls += 1;
        Ok(fresh)
    }

    pub fn record_tokens(&mut self, tokens_in: u64, tokens_out: u64) {
        self.tokens_in += tokens_in;
        self.tokens_out += tokens_out;
    }
}

/// Outcome of [`budget_gate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Admission {
    /// Every unscanned document in the window fits (possibly none).
    Full,
    /// Only this many leading documents of the window may be reranked.
    Truncated(usize),
    /// The window introduces unscanned documents and no budget is left.
    Reject,
}

/// Decide how much of `window` may be sent to the reranker.
///
/// Admits the longest prefix whose unscanned documents fit in the remaining budget.
pub fn budget_gate(ledger: &BudgetLedger, window: &[DocIdx]) -> Admission {
    let remaining = ledger.remaining();
    let total_new = ledger.new_docs(window);
    if total_new <= remaining {
        return Admission::Full;
    }
    if remaining == 0 {
        return Admission::Reject;
    }
    let mut fresh = HashSet::new();
    let mut prefix = 0;
    for &d in window {
        if !ledger.is_scanned(d) && !fresh.contains(&d) {
            if fresh.len() == remaining {
                break;
            }
            fresh.insert(d);
        }
        prefix += 1;
    }
    Admission::Truncated(prefix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ledger_with(budget: usize, scanned: impl IntoIterator<Item = DocIdx>) -> BudgetLedger {
        let mut l = BudgetLedger::new(budget).unwrap();
        let docs: Vec<_> = scanned.into_iter().collect();
        l.charge_window(&docs).unwrap();
        l
    }

    #[test]
    fn gate_truncates_to_remaining() {
        let l = ledger_with(100, 0..95);
        let window: Vec<DocIdx> = (1000..1010).collect();
        assert_eq!(budget_gate(&l, &window), Admission::Truncated(5));
    }

    #[test]
    fn gate_admits_rescans() {
        let l = ledger_with(10, 0..10);
        assert_eq!(budget_gate(&l, &[3, 4, 5]), Admission::Full);
    }

    #[test]
    fn gate_rejects_when_exhausted() {
        let l = ledger_with(10, 0..10);
        assert_eq!(budget_gate(&l, &[3, 99]), Admission::Reject);
    }

    #[test]
    fn truncated_prefix_keeps_trailing_rescans() {
        let l = ledger_with(10, 0..8);
        // two slots left: 50, 51 fit, 3 is free, 52 does not fit
        assert_eq!(budget_gate(&l, &[50, 51, 3, 52, 53]), Admission::Truncated(3));
    }

    #[test]
    fn overcharge_is_atomic() {
        let mut l = ledger_with(5, 0..4);
        let before = l.clone();
        assert!(l.charge_window(&[10, 11]).is_err());
        assert_eq!(l, before);
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(BudgetLedger::new(0).is_err());
    }

    proptest! {
        #[test]
        fn admitted_charges_respect_budget(
            budget in 1usize..60,
            windows in proptest::collection::vec(proptest::collection::vec(0u32..120, 1..12), 1..40),
        ) {
            let mut l = BudgetLedger::new(budget).unwrap();
            for w in windows {
                let admitted: &[DocIdx] = match budget_gate(&l, &w) {
                    Admission::Full => &w,
                    Admission::Truncated(m) => &w[..m],
                    Admission::Reject => continue,
                };
                l.charge_window(admitted).unwrap();
                prop_assert!(l.scanned_count() <= budget);
                prop_assert!(l.doc_views >= l.scanned_count() as u64);
                prop_assert!(l.calls >= 1);
            }
        }

        #[test]
        fn charges_never_exceed_budget(
            budget in 1usize..40,
            windows in proptest::collection::vec(proptest::collection::vec(0u32..80, 1..12), 1..40),
        ) {
            let mut l = BudgetLedger::new(budget).unwrap();
            for w in windows {
                let before = l.clone();
                if l.charge_window(&w).is_err() {
                    prop_assert_eq!(&l, &before);
                }
                prop_assert!(l.scanned_count() <= budget);
            }
        }
    }
}
