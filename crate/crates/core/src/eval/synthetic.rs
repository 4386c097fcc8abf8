//! Planted-cluster synthetic data.
//!
//! Background documents form gaussian clusters around random unit topic
//! centers. Each query owns a tight group of relevant documents around a point
//! inside one topic. The query vector starts at that point and is pushed
//! partly toward the topic center until at least `planted_rank_offset` other
//! documents outrank every relevant one. Optional "sibling" documents (grade 0)
//! sit between a relevant document and the query, just above everything else in
//! similarity, so the nearest shortlist neighborhood touches the relevant group
//! in document space while containing no positive.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qrels::RelevanceJudgments;
use crate::types::{Corpus, Embedding, QueryRecord};

/// Angle between a query's push direction and its topic center, so queries
/// sharing a topic do not collapse onto the same point.
const DRIFT_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    pub queries: usize,
    pub relevant_per_query: usize,
    pub cluster_spread: f64,
    pub planted_rank_offset: usize,
    /// Defaults to 5 when the offset is positive and 0 otherwise.
    pub siblings_per_query: Option<usize>,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n: 5000,
            dim: 64,
            clusters: 10,
            queries: 100,
            relevant_per_query: 10,
            cluster_spread: 0.5,
            planted_rank_offset: 200,
            siblings_per_query: None,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    pub fn siblings(&self) -> usize {
        self.siblings_per_query
            .unwrap_or(if self.planted_rank_offset > 0 { 5 } else { 0 })
    }

    fn background(&self) -> Option<usize> {
        self.n
            .checked_sub(self.queries * (self.relevant_per_query + self.siblings()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim < 2 || self.clusters == 0 || self.queries == 0 || self.relevant_per_query == 0 {
            return Err(Error::invalid("n, clusters, queries and relevant_per_query must be positive; dim at least 2"));
        }
        if !(self.cluster_spread > 0.0) || !self.cluster_spread.is_finite() {
            return Err(Error::invalid("cluster_spread must be positive"));
        }
        let background = match self.background() {
            Some(b) if b >= self.clusters => b,
            _ => {
                return Err(Error::invalid(format!(
                    "n = {} is too small for {} queries with {} relevant and {} sibling documents each",
                    self.n,
                    self.queries,
                    self.relevant_per_query,
                    self.siblings()
                )))
            }
        };
        if self.relevant_per_query > background / self.clusters {
            return Err(Error::invalid("relevant_per_query exceeds the cluster size"));
        }
        if self.planted_rank_offset + self.relevant_per_query > self.n {
            return Err(Error::invalid(format!(
                "rank offset {} is infeasible for {} documents",
                self.planted_rank_offset, self.n
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub queries: Vec<QueryRecord>,
    pub qrels: RelevanceJudgments,
    /// Per query, the 0-based exhaustive rank of its best relevant document.
    pub relevant_ranks: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Background,
    Relevant(usize),
    Sibling,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    let s = scale / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        })
        .collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn add(a: &[f64], b: &[f64], k: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + k * y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

pub fn gen_synthetic(params: &SyntheticParams) -> Result<SyntheticData> {
    params.validate()?;
    let p = params;
    let dim = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let centers: Vec<Vec<f64>> = (0..p.clusters).map(|_| unit(gaussian(&mut rng, dim, 1.0))).collect();

    let mut docs: Vec<(Vec<f64>, Role)> = Vec::with_capacity(p.n);
    let background = p.background().expect("validated");
    for i in 0..background {
        let t = &centers[i % p.clusters];
        docs.push((round(&unit(add(t, &gaussian(&mut rng, dim, p.cluster_spread), 1.0))), Role::Background));
    }

    let mut query_vecs = Vec::with_capacity(p.queries);
    let mut groups = Vec::with_capacity(p.queries);
    for qi in 0..p.queries {
        let t = &centers[rng.random_range(0..p.clusters)];
        let c = unit(add(t, &gaussian(&mut rng, dim, p.cluster_spread), 1.0));
        let first_rel = docs.len();
        for _ in 0..p.relevant_per_query {
            let r = round(&unit(add(&c, &gaussian(&mut rng, dim, p.cluster_spread / 4.0), 1.0)));
            docs.push((r, Role::Relevant(qi)));
        }
        let q = if p.planted_rank_offset == 0 {
            c.clone()
        } else {
            let toward = unit(add(t, &c, -dot(t, &c)));
            let mut side = gaussian(&mut rng, dim, 1.0);
            let sc = dot(&side, &c);
            side = add(&side, &c, -sc);
            let st = dot(&side, &toward);
            let side = unit(add(&side, &toward, -st));
            let (sin, cos) = DRIFT_ANGLE.sin_cos();
            let u: Vec<f64> = toward.iter().zip(&side).map(|(a, b)| cos * a + sin * b).collect();
            let lambda = displacement(&docs, first_rel, p.relevant_per_query, &c, &u, p.planted_rank_offset)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "rank offset {} is infeasible for query {qi}",
                        p.planted_rank_offset
                    ))
                })?;
            unit(add(&c, &u, lambda))
        };
        query_vecs.push(round(&q));
        groups.push(first_rel);
    }

    // siblings go in once every query is placed, so each clears the final ceiling
    for (qi, q) in query_vecs.iter().enumerate() {
        let ceiling = docs.iter().map(|(d, _)| dot(d, q)).fold(f64::MIN, f64::max);
        let target = ceiling + 0.1 * (1.0 - ceiling).max(1e-6);
        for s in 0..p.siblings() {
            let base = docs[groups[qi] + s % p.relevant_per_query].0.clone();
            let rho = dot(&base, q);
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while sibling_sim(rho, hi) < target && hi < 1e6 {
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sibling_sim(rho, mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            docs.push((round(&unit(add(&base, q, hi))), Role::Sibling));
        }
    }

    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng);
    let width = p.n.to_string().len().max(5);
    let qwidth = p.queries.to_string().len().max(3);
    let mut corpus = Corpus::new(dim);
    let mut qrels = RelevanceJudgments::new();
    for (pos, &i) in order.iter().enumerate() {
        let (v, role) = &docs[i];
        let emb = Embedding::new(v.iter().map(|&x| x as f32).collect())?;
        let idx = corpus.push(format!("d{:0width$}", pos + 1), emb, None)?;
        if let Role::Relevant(qi) = role {
            qrels.insert(format!("q{:0qwidth$}", qi + 1), idx, 1);
        }
    }
    let queries: Vec<QueryRecord> = query_vecs
        .iter()
        .enumerate()
        .map(|(qi, v)| {
            let e = Embedding::new(v.iter().map(|&x| x as f32).collect())?;
            Ok(QueryRecord::new(format!("q{:0qwidth$}", qi + 1), e, None))
        })
        .collect::<Result<_>>()?;

    let mut relevant_ranks = Vec::with_capacity(queries.len());
    for q in &queries {
        let ranking = corpus.exhaustive_ranking(q.embedding.as_slice());
        let best = ranking
            .iter()
            .position(|&d| qrels.grade(&q.qid, d) > 0)
            .expect("every query has relevant documents");
        if best < p.planted_rank_offset {
            return Err(Error::invalid(format!(
                "query {} has a relevant document at rank {best}, below offset {}",
                q.qid, p.planted_rank_offset
            )));
        }
        relevant_ranks.push(best);
    }
    Ok(SyntheticData {
        corpus,
        queries,
        qrels,
        relevant_ranks,
    })
}

fn sibling_sim(rho: f64, kappa: f64) -> f64 {
    (rho + kappa) / (1.0 + kappa * kappa + 2.0 * kappa * rho).sqrt()
}

/// Smallest push `lambda` along `u` (found by doubling then bisection) that
/// leaves at least `offset` other documents above the best relevant one.
fn displacement(
    docs: &[(Vec<f64>, Role)],
    first_rel: usize,
    count: usize,
    c: &[f64],
    u: &[f64],
    offset: usize,
) -> Option<f64> {
    // similarity to normalize(c + lambda u) ranks like a + lambda b
    let ab: Vec<(f64, f64)> = docs.iter().map(|(d, _)| (dot(d, c), dot(d, u))).collect();
    let rank = |lambda: f64| {
        let best = ab[first_rel..first_rel + count]
            .iter()
            .map(|(a, b)| a + lambda * b)
            .fold(f64::MIN, f64::max);
        ab.iter()
            .enumerate()
            .filter(|(i, (a, b))| !(first_rel..first_rel + count).contains(i) && a + lambda * b >= best)
            .count()
    };
    if rank(0.0) >= offset {
        return Some(0.0);
    }
    let mut hi = 0.05;
    while rank(hi) < offset {
        hi *= 2.0;
        if hi > 1e4 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if rank(mid) >= offset {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // leave a little room for float rounding of the stored vectors
    let mut lambda = hi * 1.02 + 1e-6;
    while rank(lambda) < offset + offset / 50 {
        lambda *= 1.05;
        if lambda > 1e4 {
            return None;
        }
    }
    Some(lambda)
}
