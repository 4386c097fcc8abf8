//! Exact KNN graphs and random regular graphs.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{medoid, GraphIndex, GraphKind};
use crate::types::{l2, Corpus, DocIdx};

/// Each vertex points to its `k` nearest neighbors by exhaustive L2 scan, ties by id.
pub fn build_knn(corpus: &Corpus, k: usize) -> Result<GraphIndex> {
    let n = corpus.len();
    if k >= n {
        return Err(Error::invalid(format!("knn degree {k} must be below corpus size {n}")));
    }
    let adjacency: Vec<Vec<DocIdx>> = (0..n as DocIdx)
        .into_par_iter()
        .map(|v| {
            let origin = corpus.vector(v);
            let mut dists: Vec<(f64, DocIdx)> = corpus
                .indices()
                .filter(|&u| u != v)
                .map(|u| (l2(origin, corpus.vector(u)), u))
                .collect();
            let cmp = |a: &(f64, DocIdx), b: &(f64, DocIdx)| {
                a.0.total_cmp(&b.0).then_with(|| corpus.cmp_ids(a.1, b.1))
            };
            if k > 0 && k < dists.len() {
                dists.select_nth_unstable_by(k - 1, cmp);
                dists.truncate(k);
            }
            dists.sort_by(cmp);
            dists.into_iter().map(|(_, u)| u).collect()
        })
        .collect();
    GraphIndex::from_parts(adjacency, k, medoid(corpus, 0), GraphKind::Knn)
}

/// Each vertex gets exactly `degree` distinct uniformly random out-neighbors.
pub fn build_random(corpus: &Corpus, degree: usize, seed: u64) -> Result<GraphIndex> {
    let n = corpus.len();
    if degree >= n {
        return Err(Error::invalid(format!(
            "random degree {degree} must be below corpus size {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adjacency: Vec<Vec<DocIdx>> = (0..n)
        .map(|v| {
            // sample from the n - 1 other vertices, then skip over v
            sample(&mut rng, n - 1, degree)
                .into_iter()
                .map(|u| if u >= v { u + 1 } else { u } as DocIdx)
                .collect()
        })
        .collect();
    GraphIndex::from_parts(adjacency, degree, medoid(corpus, seed), GraphKind::Random)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Embedding;
    use std::collections::BTreeMap;

    fn corpus(points: &[Vec<f32>]) -> Corpus {
        let mut c = Corpus::new(points[0].len());
        for (i, p) in points.iter().enumerate() {
            c.push(format!("d{i:04}"), Embedding::new(p.clone()).unwrap(), None)
                .unwrap();
        }
        c
    }

    fn random_corpus(n: usize, dim: usize, seed: u64) -> Corpus {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        corpus(&pts)
    }

    #[test]
    fn collinear_middle_picks_nearer_endpoint() {
        let c = corpus(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]]);
        let g = build_knn(&c, 1).unwrap();
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn square_corners_link_to_adjacent_corners() {
        let c = corpus(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]);
        let g = build_knn(&c, 2).unwrap();
        for v in 0..4u32 {
            let mut got = g.neighbors(v).to_vec();
            got.sort_unstable();
            let mut want = vec![(v + 1) % 4, (v + 3) % 4];
            want.sort_unstable();
            assert_eq!(got, want, "vertex {v}");
        }
    }

    #[test]
    fn knn_matches_brute_force() {
        let c = random_corpus(500, 16, 3);
        let g = build_knn(&c, 10).unwrap();
        for v in 0..500u32 {
            let mut all: Vec<(f64, String, u32)> = (0..500u32)
                .filter(|&u| u != v)
                .map(|u| {
                    let d: f64 = c
                        .vector(v)
                        .iter()
                        .zip(c.vector(u))
                        .map(|(a, b)| ((*a as f64) - (*b as f64)).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    (d, c.id(u).to_string(), u)
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<u32> = all[..10].iter().map(|x| x.2).collect();
            assert_eq!(g.neighbors(v), want.as_slice());
        }
    }

    #[test]
    fn knn_degree_too_large() {
        let c = random_corpus(5, 4, 1);
        assert!(build_knn(&c, 5).is_err());
        assert!(build_random(&c, 5, 0).is_err());
    }

    #[test]
    fn random_three_nodes_is_complete() {
        let c = random_corpus(3, 4, 1);
        let g = build_random(&c, 2, 9).unwrap();
        for v in 0..3u32 {
            let mut got = g.neighbors(v).to_vec();
            got.sort_unstable();
            let want: Vec<u32> = (0..3).filter(|&u| u != v).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn random_is_seeded_and_regular() {
        let c = random_corpus(1000, 8, 2);
        let a = build_random(&c, 16, 5).unwrap();
        let b = build_random(&c, 16, 5).unwrap();
        assert_eq!(a, b);
        let mut hist = BTreeMap::new();
        for v in 0..1000u32 {
            *hist.entry(a.neighbors(v).len()).or_insert(0usize) += 1;
        }
        assert_eq!(hist, BTreeMap::from([(16, 1000)]));
        let other = build_random(&c, 16, 6).unwrap();
        assert_ne!(a, other);
    }
}
