//! Competing information types.
//!
//! Each vertex carries weights `w[u][n]` per parent `u` and type `n`. Given
//! the labels of its parents, a vertex's expectation for type `n` is the sum
//! of `w[u][n]` over parents labelled `n`. Under the partial linear model the
//! vertex takes type `n` with probability equal to that expectation; under
//! the competitive threshold model it activates when the summed expectations
//! reach a uniform threshold and takes the type with the largest expectation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Network};
use crate::par::map_ordered;

use super::substream;

pub const MAX_EXACT_MULTI_VERTICES: usize = 10;
pub const MAX_EXACT_MULTI_TYPES: usize = 3;

/// Per-vertex label: 0 inactive, `n` for type `n` (1-based).
pub type MultiState = Vec<u8>;

/// Label vector to probability.
pub type MultiDistribution = BTreeMap<MultiState, f64>;

/// Type attribution for the competitive threshold model when several types
/// share the largest expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// The tied type with the smallest index wins.
    LowestTypeIndex,
    /// The tied type holding the single largest active parent weight wins,
    /// falling back to the smallest index.
    HighestWeight,
}

impl std::str::FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest-type-index" => Ok(TieRule::LowestTypeIndex),
            "highest-weight" => Ok(TieRule::HighestWeight),
            other => Err(Error::Invalid(format!("unknown tie rule {other:?}"))),
        }
    }
}

/// Multi-type weights extracted from a network. Every vertex with parents
/// must carry a plmmi model and all such models share one type count.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModel {
    n_types: usize,
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    /// `weights[v][i][n]`: weight of the `i`-th parent of `v` for type `n`.
    weights: Vec<Vec<Vec<f64>>>,
    topo: Vec<usize>,
}

impl MultiModel {
    pub fn from_network(net: &Network) -> Result<Self> {
        let mut n_types = None;
        let mut weights = Vec::with_capacity(net.vertex_count());
        for v in 0..net.vertex_count() {
            let invalid = |reason: String| Error::InvalidModel { vertex: net.name(v).to_string(), reason };
            match net.spec(v) {
                ModelSpec::Plmmi { n_types: n, w } => {
                    match n_types {
                        None => n_types = Some(*n),
                        Some(m) if m != *n => return Err(invalid(format!("{n} types, expected {m}"))),
                        _ => {}
                    }
                    weights.push(w.clone());
                }
                _ if net.parents(v).is_empty() => {
                    if net.table(v).is_spontaneous() {
                        return Err(invalid("spontaneous activation is not defined for typed labels".into()));
                    }
                    weights.push(Vec::new());
                }
                other => return Err(invalid(format!("expected a plmmi model, found {}", other.kind()))),
            }
        }
        let n_types = n_types.unwrap_or(1);
        if n_types > usize::from(u8::MAX) {
            return Err(Error::Invalid(format!("{n_types} types (max {})", u8::MAX)));
        }
        Ok(MultiModel {
            n_types,
            names: net.names().to_vec(),
            parents: (0..net.vertex_count()).map(|v| net.parents(v).to_vec()).collect(),
            weights,
            topo: net.topo_order().to_vec(),
        })
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    /// Initial labels from per-type seed sets (`seeds[n - 1]` holds type `n`).
    pub fn seed_labels(&self, seeds: &[Vec<usize>]) -> Result<MultiState> {
        if seeds.len() > self.n_types {
            return Err(Error::Invalid(format!("{} seed sets for {} types", seeds.len(), self.n_types)));
        }
        let mut labels = vec![0u8; self.vertex_count()];
        for (n, set) in seeds.iter().enumerate() {
            for &v in set {
                let slot = labels.get_mut(v).ok_or_else(|| Error::UnknownVertex(format!("#{v}")))?;
                if *slot != 0 && usize::from(*slot) != n + 1 {
                    return Err(Error::OverlappingSeeds(self.names[v].clone()));
                }
                *slot = (n + 1) as u8;
            }
        }
        Ok(labels)
    }

    /// Per-type expectations of `v` under the current labels. Parents are
    /// summed in bit order, matching the single-type linear table.
    pub fn expectations(&self, v: usize, labels: &[u8]) -> Vec<f64> {
        let mut e = vec![0.0; self.n_types];
        for (&u, w) in self.parents[v].iter().zip(&self.weights[v]) {
            if labels[u] != 0 {
                let n = usize::from(labels[u]) - 1;
                e[n] += w[n];
            }
        }
        e
    }

    /// Winning type (0-based) of the threshold model among the maximal expectations.
    fn cltm_winner(&self, v: usize, labels: &[u8], e: &[f64], rule: TieRule) -> usize {
        let best = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied = (0..e.len()).filter(|&n| e[n] == best);
        match rule {
            TieRule::LowestTypeIndex => tied.min().expect("at least one type"),
            TieRule::HighestWeight => {
                let top = |n: usize| {
                    self.parents[v]
                        .iter()
                        .zip(&self.weights[v])
                        .filter(|(&u, _)| usize::from(labels[u]) == n + 1)
                        .map(|(_, w)| w[n])
                        .fold(0.0, f64::max)
                };
                // max_by keeps the last maximum, so scan in descending index order
                tied.rev()
                    .max_by(|&a, &b| top(a).total_cmp(&top(b)))
                    .expect("at least one type")
            }
        }
    }
}

/// Label for a uniform `u` under the partial linear model: consecutive
/// intervals of lengths `e[0], e[1], ...` from 0, then the inactive remainder.
fn plmmi_label(e: &[f64], u: f64) -> u8 {
    let mut edge = 0.0;
    for (n, &en) in e.iter().enumerate() {
        edge += en;
        if u < edge {
            return (n + 1) as u8;
        }
    }
    0
}

/// One partial-linear run drawing from `rng`; one uniform per unseeded vertex.
pub fn simulate_multi_with<R: Rng>(model: &MultiModel, labels: &[u8], rng: &mut R) -> MultiState {
    let mut labels = labels.to_vec();
    for &v in &model.topo {
        if labels[v] == 0 {
            let e = model.expectations(v, &labels);
            let u: f64 = rng.gen();
            labels[v] = plmmi_label(&e, u);
        }
    }
    labels
}

/// One competitive-threshold run: threshold `1 - U` lies in `(0, 1]` and the
/// vertex activates when the summed expectations reach it.
pub fn simulate_cltm_with<R: Rng>(model: &MultiModel, labels: &[u8], rule: TieRule, rng: &mut R) -> MultiState {
    let mut labels = labels.to_vec();
    for &v in &model.topo {
        if labels[v] == 0 {
            let e = model.expectations(v, &labels);
            let threshold = 1.0 - rng.gen::<f64>();
            if e.iter().sum::<f64>() >= threshold {
                labels[v] = (model.cltm_winner(v, &labels, &e, rule) + 1) as u8;
            }
        }
    }
    labels
}

/// Partial-linear run from `substream(rng_seed, 0, 0)`.
pub fn simulate_multi(model: &MultiModel, seeds: &[Vec<usize>], rng_seed: u64) -> Result<MultiState> {
    let labels = model.seed_labels(seeds)?;
    Ok(simulate_multi_with(model, &labels, &mut substream(rng_seed, 0, 0)))
}

/// Competitive-threshold run from `substream(rng_seed, 0, 0)`.
pub fn simulate_cltm(model: &MultiModel, seeds: &[Vec<usize>], rng_seed: u64, rule: TieRule) -> Result<MultiState> {
    let labels = model.seed_labels(seeds)?;
    Ok(simulate_cltm_with(model, &labels, rule, &mut substream(rng_seed, 0, 0)))
}

/// Monte Carlo summary of the partial linear model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiSpreadEstimate {
    /// `mean[n]`: expected number of vertices labelled type `n + 1`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
    pub rng_seed: u64,
    pub workers: usize,
}

/// Per-type spreads over `samples` runs, split across workers as in
/// [`super::estimate_spread`].
pub fn estimate_multi_spread(
    model: &MultiModel,
    seeds: &[Vec<usize>],
    samples: usize,
    rng_seed: u64,
    workers: usize,
) -> Result<MultiSpreadEstimate> {
    if samples == 0 {
        return Err(Error::Invalid("samples must be at least 1".into()));
    }
    let labels = model.seed_labels(seeds)?;
    let n_types = model.n_types;
    let workers = workers.clamp(1, samples);
    let shares: Vec<(u32, usize)> = (0..workers)
        .map(|i| (i as u32, samples / workers + usize::from(i < samples % workers)))
        .collect();
    let partial = map_ordered(&shares, workers, |&(worker, share)| {
        let mut rng = substream(rng_seed, worker, 0);
        let mut sum = vec![0u64; n_types];
        let mut sum_sq = vec![0u128; n_types];
        for _ in 0..share {
            let state = simulate_multi_with(model, &labels, &mut rng);
            let mut counts = vec![0u64; n_types];
            for &l in state.iter().filter(|&&l| l != 0) {
                counts[usize::from(l) - 1] += 1;
            }
            for n in 0..n_types {
                sum[n] += counts[n];
                sum_sq[n] += u128::from(counts[n] * counts[n]);
            }
        }
        (sum, sum_sq)
    });
    let mut sum = vec![0u64; n_types];
    let mut sum_sq = vec![0u128; n_types];
    for (s, q) in partial {
        for n in 0..n_types {
            sum[n] += s[n];
            sum_sq[n] += q[n];
        }
    }
    let count = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|&s| s as f64 / count).collect();
    let stderr = (0..n_types)
        .map(|n| {
            if samples < 2 {
                return 0.0;
            }
            let var = (sum_sq[n] as f64 - count * mean[n] * mean[n]) / (count - 1.0);
            (var.max(0.0) / count).sqrt()
        })
        .collect();
    Ok(MultiSpreadEstimate { mean, stderr, samples, rng_seed, workers })
}

/// Enumerates the topological sweep; `branches` lists `(label, probability)`
/// for an unseeded vertex given the labels so far.
fn enumerate<F>(model: &MultiModel, seeds: &[Vec<usize>], branches: F) -> Result<MultiDistribution>
where
    F: Fn(usize, &[u8]) -> Vec<(u8, f64)>,
{
    if model.vertex_count() > MAX_EXACT_MULTI_VERTICES || model.n_types > MAX_EXACT_MULTI_TYPES {
        return Err(Error::TooLarge(format!(
            "{} vertices, {} types (max {MAX_EXACT_MULTI_VERTICES}, {MAX_EXACT_MULTI_TYPES})",
            model.vertex_count(),
            model.n_types
        )));
    }
    let start = model.seed_labels(seeds)?;
    let mut out = MultiDistribution::new();
    let mut stack = vec![(0usize, start, 1.0)];
    while let Some((pos, labels, prob)) = stack.pop() {
        let Some(&v) = model.topo.get(pos) else {
            *out.entry(labels).or_insert(0.0) += prob;
            continue;
        };
        if labels[v] != 0 {
            stack.push((pos + 1, labels, prob));
            continue;
        }
        for (label, p) in branches(v, &labels) {
            if p > 0.0 {
                let mut next = labels.clone();
                next[v] = label;
                stack.push((pos + 1, next, prob * p));
            }
        }
    }
    Ok(out)
}

/// Exact label distribution of the partial linear model.
pub fn exact_multi_distribution(model: &MultiModel, seeds: &[Vec<usize>]) -> Result<MultiDistribution> {
    enumerate(model, seeds, |v, labels| {
        let e = model.expectations(v, labels);
        let total: f64 = e.iter().sum();
        let mut b: Vec<(u8, f64)> = e.iter().enumerate().map(|(n, &p)| ((n + 1) as u8, p)).collect();
        b.push((0, (1.0 - total).max(0.0)));
        b
    })
}

/// Exact label distribution of the competitive threshold model.
pub fn exact_cltm_distribution(model: &MultiModel, seeds: &[Vec<usize>], rule: TieRule) -> Result<MultiDistribution> {
    enumerate(model, seeds, |v, labels| {
        let e = model.expectations(v, labels);
        let total = e.iter().sum::<f64>().min(1.0);
        let winner = (model.cltm_winner(v, labels, &e, rule) + 1) as u8;
        vec![(winner, total), (0, 1.0 - total)]
    })
}

/// Expected number of vertices labelled `label` (1-based type).
pub fn type_spread(dist: &MultiDistribution, label: u8) -> f64 {
    dist.iter()
        .map(|(state, p)| p * state.iter().filter(|&&l| l == label).count() as f64)
        .sum()
}

/// Total-variation distance `1/2 sum |p - q|` over the union of supports.
pub fn total_variation(p: &MultiDistribution, q: &MultiDistribution) -> f64 {
    let mut sum = 0.0;
    for (state, &x) in p {
        sum += (x - q.get(state).copied().unwrap_or(0.0)).abs();
    }
    for (state, &y) in q {
        if !p.contains_key(state) {
            sum += y;
        }
    }
    sum / 2.0
}
