use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::GraphIndex;
use crate::types::{dot, Corpus, DocIdx};

/// Read access to out-neighbor lists.
pub trait Neighbors {
    fn neighbors_of(&self, v: DocIdx) -> &[DocIdx];
}

impl Neighbors for GraphIndex {
    fn neighbors_of(&self, v: DocIdx) -> &[DocIdx] {
        self.neighbors(v)
    }
}

impl Neighbors for [Vec<DocIdx>] {
    fn neighbors_of(&self, v: DocIdx) -> &[DocIdx] {
        &self[v as usize]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamResult {
    /// Up to `k` visited vertices, best first.
    pub top: Vec<DocIdx>,
    /// Every expanded vertex, in expansion order.
    pub visited: Vec<DocIdx>,
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    doc: DocIdx,
    expanded: bool,
}

/// Greedy best-first search keeping a beam of `beam` candidates, ranking by
/// inner product with `target`.
pub fn greedy_beam_search(
    graph: &GraphIndex,
    corpus: &Corpus,
    start: &[DocIdx],
    target: &[f32],
    beam: usize,
    k: usize,
) -> Result<BeamResult> {
    if target.len() != corpus.dim() {
        return Err(Error::invalid(format!(
            "target has dimension {} but corpus has {}",
            target.len(),
            corpus.dim()
        )));
    }
    beam_search_by(graph, corpus, start, |d| dot(target, corpus.vector(d)), beam, k)
}

/// Beam search with an arbitrary "higher is better" score. Ties go to the
/// smaller document id, so results are deterministic.
pub fn beam_search_by<G, F>(
    graph: &G,
    corpus: &Corpus,
    start: &[DocIdx],
    score: F,
    beam: usize,
    k: usize,
) -> Result<BeamResult>
where
    G: Neighbors + ?Sized,
    F: Fn(DocIdx) -> f64,
{
    if start.is_empty() {
        return Err(Error::invalid("beam search needs at least one start vertex"));
    }
    if k == 0 || beam < k {
        return Err(Error::invalid(format!(
            "beam search needs beam >= k >= 1 (beam {beam}, k {k})"
        )));
    }
    let order = |a: &Candidate, b: &Candidate| -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then_with(|| corpus.cmp_ids(a.doc, b.doc))
    };

    let mut seen: HashSet<DocIdx> = HashSet::with_capacity(beam * 8);
    let mut list: Vec<Candidate> = Vec::with_capacity(beam + 1);
    for &s in start {
        if seen.insert(s) {
            list.push(Candidate {
                score: score(s),
                doc: s,
                expanded: false,
            });
        }
    }
    list.sort_by(order);
    list.truncate(beam);

    let mut visited: Vec<Candidate> = Vec::new();
    while let Some(pos) = list.iter().position(|c| !c.expanded) {
        list[pos].expanded = true;
        let current = list[pos];
        visited.push(current);
        for &u in graph.neighbors_of(current.doc) {
            if !seen.insert(u) {
                continue;
            }
            let cand = Candidate {
                score: score(u),
                doc: u,
                expanded: false,
            };
            if list.len() >= beam && order(&cand, list.last().unwrap()) != Ordering::Less {
                continue;
            }
            let at = list.partition_point(|x| order(x, &cand) == Ordering::Less);
            list.insert(at, cand);
            if list.len() > beam {
                list.pop();
            }
        }
    }

    let expansion_order: Vec<DocIdx> = visited.iter().map(|c| c.doc).collect();
    visited.sort_by(order);
    Ok(BeamResult {
        top: visited.iter().take(k).map(|c| c.doc).collect(),
        visited: expansion_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;
    use crate::types::Embedding;

    fn corpus(points: &[[f32; 2]]) -> Corpus {
        let mut c = Corpus::new(2);
        for (i, p) in points.iter().enumerate() {
            c.push(format!("d{i}"), Embedding::new(p.to_vec()).unwrap(), None)
                .unwrap();
        }
        c
    }

    fn complete(n: usize) -> GraphIndex {
        let adj = (0..n as u32)
            .map(|v| (0..n as u32).filter(|&u| u != v).collect())
            .collect();
        GraphIndex::from_parts(adj, n - 1, 0, GraphKind::Knn).unwrap()
    }

    #[test]
    fn exact_hit_on_complete_graph() {
        let c = corpus(&[[1.0, 0.0], [0.0, 1.0], [0.7, 0.7], [-1.0, 0.0], [0.0, -1.0]]);
        let g = complete(5);
        let r = greedy_beam_search(&g, &c, &[0], &[0.7, 0.7], 3, 1).unwrap();
        assert_eq!(r.top, vec![2]);
    }

    #[test]
    fn beam_of_one_from_true_nn() {
        let c = corpus(&[[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]]);
        let g = complete(3);
        let r = greedy_beam_search(&g, &c, &[1], &[0.0, 1.0], 1, 1).unwrap();
        assert_eq!(r.top, vec![1]);
    }

    #[test]
    fn empty_start_is_invalid() {
        let c = corpus(&[[1.0, 0.0], [0.0, 1.0]]);
        let g = complete(2);
        assert!(greedy_beam_search(&g, &c, &[], &[1.0, 0.0], 2, 1).is_err());
        assert!(greedy_beam_search(&g, &c, &[0], &[1.0, 0.0], 1, 2).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let c = corpus(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        let g = complete(3);
        let r = greedy_beam_search(&g, &c, &[2], &[1.0, 0.0], 3, 3).unwrap();
        assert_eq!(r.top, vec![0, 1, 2]);
    }
}
