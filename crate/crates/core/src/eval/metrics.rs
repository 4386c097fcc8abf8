use crate::qrels::RelevanceJudgments;
use crate::types::DocIdx;

pub const NDCG_DEPTH: usize = 10;

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .take(NDCG_DEPTH)
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@10 with gain `2^grade - 1` and discount `log2(rank + 1)`; 0 when the
/// query has no positive judgment.
pub fn ndcg_at_10(ranked: &[DocIdx], qrels: &RelevanceJudgments, qid: &str) -> f64 {
    let ideal = dcg(qrels.ideal_grades(qid).into_iter());
    if ideal == 0.0 {
        return 0.0;
    }
    dcg(ranked.iter().map(|&d| qrels.grade(qid, d))) / ideal
}
