//! Vamana graph construction.
//!
//! Points are inserted one at a time in a seeded random order (medoid first).
//! Each insertion runs a beam search toward the new point, keeps a pruned
//! subset of the visited vertices as out-neighbors, and adds the reverse edges,
//! re-pruning any vertex that overflows the degree bound. The default schedule
//! runs a pass with alpha = 1 followed by a pass with the configured alpha.
//!
//! Construction is sequential; the graph is a pure function of the corpus and
//! `BuildParams`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{beam_search_by, BuildParams, GraphIndex, GraphKind};
use crate::types::{l2, Corpus, DocIdx};

const MEDOID_SAMPLE: usize = 1000;

/// Select at most `r` out-neighbors for `p` from `candidates`.
///
/// Candidates are taken nearest first; each kept neighbor `n` removes every
/// remaining candidate `c` with `alpha * d(n, c) <= d(p, c)`.
pub fn robust_prune(
    p: DocIdx,
    candidates: &[DocIdx],
    alpha: f64,
    r: usize,
    corpus: &Corpus,
) -> Vec<DocIdx> {
    let origin = corpus.vector(p);
    let mut pool: Vec<(f64, DocIdx)> = candidates
        .iter()
        .filter(|&&c| c != p)
        .map(|&c| (l2(origin, corpus.vector(c)), c))
        .collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| corpus.cmp_ids(a.1, b.1)));
    pool.dedup_by_key(|x| x.1);

    let mut kept = Vec::with_capacity(r);
    let mut next = 0;
    // `pool[next..]` holds the survivors, still in distance order.
    while next < pool.len() && kept.len() < r {
        let (_, chosen) = pool[next];
        kept.push(chosen);
        next += 1;
        let chosen_vec = corpus.vector(chosen);
        let mut write = next;
        for read in next..pool.len() {
            let (d_pc, c) = pool[read];
            if alpha * l2(chosen_vec, corpus.vector(c)) > d_pc {
                pool[write] = pool[read];
                write += 1;
            }
        }
        pool.truncate(write);
    }
    kept
}

/// Approximate medoid: the member of a uniform sample (up to 1000 points)
/// with the smallest total distance to the rest of the sample.
pub fn medoid(corpus: &Corpus, seed: u64) -> DocIdx {
    let n = corpus.len();
    let sample: Vec<DocIdx> = if n <= MEDOID_SAMPLE {
        corpus.indices().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d65_646f_6964);
        let mut s: Vec<DocIdx> = rand::seq::index::sample(&mut rng, n, MEDOID_SAMPLE)
            .into_iter()
            .map(|i| i as DocIdx)
            .collect();
        s.sort_unstable();
        s
    };
    let totals: Vec<(f64, DocIdx)> = {
        use rayon::prelude::*;
        sample
            .par_iter()
            .map(|&a| {
                let va = corpus.vector(a);
                let total = sample.iter().map(|&b| l2(va, corpus.vector(b))).sum::<f64>();
                (total, a)
            })
            .collect()
    };
    totals
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| corpus.cmp_ids(a.1, b.1)))
        .map(|(_, d)| d)
        .expect("nonempty corpus")
}

pub fn build_diskann(corpus: &Corpus, params: &BuildParams) -> Result<GraphIndex> {
    params.validate()?;
    let n = corpus.len();
    if n < 2 {
        return Err(Error::invalid("DiskANN build needs at least 2 documents"));
    }
    let r = params.degree_bound;
    let start = medoid(corpus, params.seed);

    let mut order: Vec<DocIdx> = corpus.indices().filter(|&d| d != start).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    order.shuffle(&mut rng);
    order.insert(0, start);

    let mut adjacency: Vec<Vec<DocIdx>> = vec![Vec::new(); n];
    let passes: Vec<f64> = if params.two_pass && params.alpha > 1.0 {
        vec![1.0, params.alpha]
    } else {
        vec![params.alpha]
    };

    for alpha in passes {
        for &p in &order {
            insert_point(corpus, &mut adjacency, start, p, alpha, r, params.build_beam)?;
        }
    }
    GraphIndex::from_parts(adjacency, r, start, GraphKind::Diskann)
}

fn insert_point(
    corpus: &Corpus,
    adjacency: &mut [Vec<DocIdx>],
    start: DocIdx,
    p: DocIdx,
    alpha: f64,
    r: usize,
    beam: usize,
) -> Result<()> {
    let target = corpus.vector(p);
    let mut candidates = beam_search_by(
        &adjacency[..],
        corpus,
        &[start],
        |d| -l2(target, corpus.vector(d)),
        beam,
        1,
    )?
    .visited;
    candidates.extend_from_slice(&adjacency[p as usize]);
    let chosen = robust_prune(p, &candidates, alpha, r, corpus);
    adjacency[p as usize] = chosen.clone();

    for n in chosen {
        let nbrs = &mut adjacency[n as usize];
        if nbrs.contains(&p) {
            continue;
        }
        if nbrs.len() < r {
            nbrs.push(p);
        } else {
            let mut cands = nbrs.clone();
            cands.push(p);
            adjacency[n as usize] = robust_prune(n, &cands, alpha, r, corpus);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Embedding;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_corpus(n: usize, dim: usize, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Corpus::new(dim);
        for i in 0..n {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            c.push(format!("d{i:05}"), Embedding::new(v).unwrap(), None).unwrap();
        }
        c
    }

    fn euclid(a: &[f32], b: &[f32]) -> f64 {
        let mut s = 0.0f64;
        for i in 0..a.len() {
            let d = a[i] as f64 - b[i] as f64;
            s += d * d;
        }
        s.sqrt()
    }

    // Textbook formulation: repeatedly pick the closest remaining candidate,
    // then delete everything it dominates.
    fn reference_prune(p: DocIdx, cands: &[DocIdx], alpha: f64, r: usize, c: &Corpus) -> Vec<DocIdx> {
        let mut v: Vec<DocIdx> = cands.iter().copied().filter(|&x| x != p).collect();
        v.sort();
        v.dedup();
        let mut out = Vec::new();
        while !v.is_empty() && out.len() < r {
            let mut best = 0;
            for i in 1..v.len() {
                let di = euclid(c.vector(p), c.vector(v[i]));
                let db = euclid(c.vector(p), c.vector(v[best]));
                if di < db || (di == db && c.id(v[i]) < c.id(v[best])) {
                    best = i;
                }
            }
            let chosen = v.remove(best);
            out.push(chosen);
            v.retain(|&x| alpha * euclid(c.vector(chosen), c.vector(x)) > euclid(c.vector(p), c.vector(x)));
        }
        out
    }

    #[test]
    fn single_candidate_kept() {
        let c = random_corpus(2, 4, 0);
        assert_eq!(robust_prune(0, &[1], 1.2, 4, &c), vec![1]);
        assert!(robust_prune(0, &[], 1.2, 4, &c).is_empty());
    }

    #[test]
    fn identical_candidates_collapse_to_one() {
        let mut c = Corpus::new(2);
        c.push("p", Embedding::new(vec![0.0, 0.0]).unwrap(), None).unwrap();
        for i in 0..6 {
            c.push(format!("c{i}"), Embedding::new(vec![1.0, 1.0]).unwrap(), None).unwrap();
        }
        let kept = robust_prune(0, &[1, 2, 3, 4, 5, 6], 1.2, 4, &c);
        assert_eq!(kept, vec![1]);
    }

    #[test]
    fn prune_matches_reference() {
        for seed in 0..20 {
            let c = random_corpus(51, 8, seed);
            let cands: Vec<DocIdx> = (1..51).collect();
            assert_eq!(
                robust_prune(0, &cands, 1.2, 8, &c),
                reference_prune(0, &cands, 1.2, 8, &c),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn two_docs_link_each_other() {
        let c = random_corpus(2, 4, 1);
        let g = build_diskann(&c, &BuildParams::default()).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn single_doc_rejected() {
        let c = random_corpus(1, 4, 1);
        assert!(build_diskann(&c, &BuildParams::default()).is_err());
    }

    #[test]
    fn rebuild_is_identical() {
        let c = random_corpus(400, 16, 2);
        let p = BuildParams { degree_bound: 12, build_beam: 24, ..Default::default() };
        assert_eq!(build_diskann(&c, &p).unwrap(), build_diskann(&c, &p).unwrap());
    }

    #[test]
    fn medoid_of_small_line() {
        let mut c = Corpus::new(1);
        for (i, x) in [0.0f32, 1.0, 2.0, 3.0, 10.0].iter().enumerate() {
            c.push(format!("d{i}"), Embedding::new(vec![*x]).unwrap(), None).unwrap();
        }
        assert_eq!(medoid(&c, 0), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn degree_bound_and_prune_subset(
            n in 3usize..120,
            dim in 2usize..10,
            r in 2usize..10,
            extra in 0usize..10,
            alpha in 1.0f64..1.6,
            seed in any::<u64>(),
        ) {
            let c = random_corpus(n, dim, seed);
            let p = BuildParams { degree_bound: r, build_beam: r + extra, alpha, seed, two_pass: true };
            let g = build_diskann(&c, &p).unwrap();
            for v in c.indices() {
                prop_assert!(g.neighbors(v).len() <= r);
            }
            let cands: Vec<DocIdx> = (1..n as DocIdx).collect();
            let kept = robust_prune(0, &cands, alpha, r, &c);
            prop_assert!(kept.iter().all(|k| cands.contains(k)));
            let nearest = *cands
                .iter()
                .min_by(|&&a, &&b| {
                    l2(c.vector(0), c.vector(a))
                        .total_cmp(&l2(c.vector(0), c.vector(b)))
                        .then_with(|| c.cmp_ids(a, b))
                })
                .unwrap();
            prop_assert_eq!(kept[0], nearest);
        }
    }
}
