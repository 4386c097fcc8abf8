use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Embedding, QueryRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbTarget {
    Query,
    Document,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub target: PerturbTarget,
    pub weight: f64,
    pub seed: u64,
    pub renormalize: bool,
}

impl std::str::FromStr for Perturbation {
    type Err = String;
    /// `query:0.5` or `document:1.0`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (t, w) = s
            .split_once(':')
            .ok_or_else(|| format!("perturbation {s:?} should look like query:0.5"))?;
        let target = match t {
            "query" | "q" => PerturbTarget::Query,
            "document" | "doc" | "d" => PerturbTarget::Document,
            other => return Err(format!("unknown perturbation target {other:?}")),
        };
        let weight: f64 = w.parse().map_err(|_| format!("bad perturbation weight {w:?}"))?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(format!("perturbation weight {weight} outside [0, 1]"));
        }
        Ok(Perturbation {
            target,
            weight,
            seed: 0,
            renormalize: false,
        })
    }
}

/// Seeded uniformly random cyclic permutation (Sattolo), so no element maps to itself.
pub fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

/// Replace each `e_i` by `(1 - w) e_i + w e_pi(i)` for a seeded derangement `pi`.
pub fn perturb(embeddings: &[Embedding], weight: f64, seed: u64, renormalize: bool) -> Result<Vec<Embedding>> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::invalid(format!("mixing weight {weight} outside [0, 1]")));
    }
    if embeddings.len() < 2 {
        return Err(Error::invalid("perturbation needs at least two embeddings"));
    }
    let dim = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(Error::invalid("embeddings differ in dimension"));
    }
    let pi = derangement(embeddings.len(), seed);
    embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mixed = if weight == 0.0 {
                e.clone()
            } else if weight == 1.0 {
                embeddings[pi[i]].clone()
            } else {
                let other = embeddings[pi[i]].as_slice();
                let v = e
                    .as_slice()
                    .iter()
                    .zip(other)
                    .map(|(&a, &b)| ((1.0 - weight) * a as f64 + weight * b as f64) as f32)
                    .collect();
                Embedding::new(v)?
            };
            Ok(if renormalize { mixed.normalized() } else { mixed })
        })
        .collect()
}

pub fn perturb_queries(queries: &[QueryRecord], p: &Perturbation) -> Result<Vec<QueryRecord>> {
    let mixed = perturb(
        &queries.iter().map(|q| q.embedding.clone()).collect::<Vec<_>>(),
        p.weight,
        p.seed,
        p.renormalize,
    )?;
    Ok(queries
        .iter()
        .zip(mixed)
        .map(|(q, e)| QueryRecord::new(q.qid.clone(), e, q.text.clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs() -> Vec<Embedding> {
        (0..5)
            .map(|i| Embedding::new(vec![i as f32 + 0.5, 1.0 - i as f32, 0.25]).unwrap())
            .collect()
    }

    #[test]
    fn zero_is_identity_bitwise() {
        let e = vecs();
        let p = perturb(&e, 0.0, 3, false).unwrap();
        for (a, b) in e.iter().zip(&p) {
            let bits = |x: &Embedding| x.as_slice().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn one_is_relabeling() {
        let e = vecs();
        let p = perturb(&e, 1.0, 3, false).unwrap();
        let pi = derangement(5, 3);
        for i in 0..5 {
            assert_eq!(p[i], e[pi[i]]);
            assert_ne!(pi[i], i);
        }
    }

    #[test]
    fn half_is_midpoint_for_two() {
        let e = vec![Embedding::new(vec![1.0, 0.0]).unwrap(), Embedding::new(vec![0.0, 3.0]).unwrap()];
        let p = perturb(&e, 0.5, 9, false).unwrap();
        assert_eq!(p[0].as_slice(), &[0.5, 1.5]);
        assert_eq!(p[1].as_slice(), &[0.5, 1.5]);
        let n = perturb(&e, 0.5, 9, true).unwrap();
        let norm: f32 = n[0].as_slice().iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let e = vecs();
        assert!(perturb(&e[..1], 0.5, 0, false).is_err());
        assert!(perturb(&e, 1.5, 0, false).is_err());
        assert!("query:2".parse::<Perturbation>().is_err());
        assert_eq!("document:0.25".parse::<Perturbation>().unwrap().target, PerturbTarget::Document);
    }

    #[test]
    fn derangements_have_no_fixed_points() {
        for seed in 0..50 {
            for n in 2..20 {
                let p = derangement(n, seed);
                assert!(p.iter().enumerate().all(|(i, &j)| i != j));
                let mut s = p.clone();
                s.sort_unstable();
                assert_eq!(s, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
