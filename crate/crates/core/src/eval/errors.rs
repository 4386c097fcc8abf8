use serde::Serialize;

use crate::qrels::RelevanceJudgments;
use crate::search::SearchTrace;

/// Pooled fate of positively judged documents across a set of searches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ErrorBreakdown {
    pub positives: usize,
    pub returned: usize,
    pub seen_not_selected: usize,
    pub never_seen: usize,
}

impl ErrorBreakdown {
    /// `(returned, seen_not_selected, never_seen)` as fractions of all positives.
    pub fn fractions(&self) -> Option<(f64, f64, f64)> {
        if self.positives == 0 {
            return None;
        }
        let n = self.positives as f64;
        Some((
            self.returned as f64 / n,
            self.seen_not_selected as f64 / n,
            self.never_seen as f64 / n,
        ))
    }

    pub fn add(&mut self, other: &ErrorBreakdown) {
        self.positives += other.positives;
        self.returned += other.returned;
        self.seen_not_selected += other.seen_not_selected;
        self.never_seen += other.never_seen;
    }
}

/// Classify every positive of each trace's query as returned (in the final
/// top 10), seen but not selected (scanned), or never seen.
pub fn error_analysis<'a>(
    traces: impl IntoIterator<Item = &'a SearchTrace>,
    qrels: &RelevanceJudgments,
) -> ErrorBreakdown {
    let mut out = ErrorBreakdown::default();
    for t in traces {
        out.add(&classify(t, qrels));
    }
    out
}

pub fn classify(trace: &SearchTrace, qrels: &RelevanceJudgments) -> ErrorBreakdown {
    let mut b = ErrorBreakdown::default();
    for d in qrels.positives(&trace.qid) {
        b.positives += 1;
        if trace.top().contains(&d) {
            b.returned += 1;
        } else if trace.ledger.is_scanned(d) {
            b.seen_not_selected += 1;
        } else {
            b.never_seen += 1;
        }
    }
    b
}
