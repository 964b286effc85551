//! Greedy seed selection and an exhaustive optimum for small instances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Network;
use crate::simulate::{estimate_spread, exact_spread};

/// Largest network accepted by [`brute_force_opt`].
pub const MAX_BRUTE_FORCE_VERTICES: usize = 14;
/// Largest number of candidate seed sets accepted by [`brute_force_opt`].
pub const MAX_BRUTE_FORCE_SETS: u64 = 1_000_000;

/// How spreads are evaluated during selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    Exact,
    /// Every evaluation reuses `rng_seed`, so candidates are compared on
    /// common random numbers and the selection is deterministic.
    MonteCarlo { samples: usize, rng_seed: u64, workers: usize },
}

impl Estimator {
    /// Spread of `seeds` with its standard error (zero when exact).
    pub fn evaluate(&self, net: &Network, seeds: &[usize]) -> Result<(f64, f64)> {
        match *self {
            Estimator::Exact => Ok((exact_spread(net, seeds)?, 0.0)),
            Estimator::MonteCarlo { samples, rng_seed, workers } => {
                let est = estimate_spread(net, seeds, samples, rng_seed, workers)?;
                Ok((est.mean, est.stderr))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyTrace {
    pub chosen: Vec<usize>,
    pub marginal_gains: Vec<f64>,
    /// Number of spread evaluations, including the empty set.
    pub evaluations: usize,
    /// Estimated spread of the chosen set.
    pub spread: f64,
    /// Largest standard error of any recorded gain (zero when exact).
    pub pooled_stderr: f64,
}

/// Heap entry ordered by gain, then by lower vertex id.
struct Candidate {
    gain: f64,
    vertex: usize,
    /// Selection round in which `gain` was computed.
    round: usize,
    spread: f64,
    stderr: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Selects `budget` seeds one at a time by largest marginal gain, ties to the
/// lowest vertex id. With `lazy`, stale gains act as upper bounds and are
/// recomputed only when they reach the head of the queue.
pub fn greedy_select(net: &Network, budget: usize, estimator: &Estimator, lazy: bool) -> Result<GreedyTrace> {
    let n = net.vertex_count();
    if budget == 0 || budget > n {
        return Err(Error::Budget { budget, max: n });
    }
    let (mut current, mut current_se) = estimator.evaluate(net, &[])?;
    let mut trace = GreedyTrace {
        chosen: Vec::with_capacity(budget),
        marginal_gains: Vec::with_capacity(budget),
        evaluations: 1,
        spread: current,
        pooled_stderr: 0.0,
    };
    let evaluate = |chosen: &[usize], v: usize, base: f64, round: usize| -> Result<Candidate> {
        let mut seeds = chosen.to_vec();
        seeds.push(v);
        let (spread, stderr) = estimator.evaluate(net, &seeds)?;
        Ok(Candidate { gain: spread - base, vertex: v, round, spread, stderr })
    };

    let mut heap = BinaryHeap::with_capacity(n);
    for v in 0..n {
        heap.push(evaluate(&[], v, current, 0)?);
    }
    trace.evaluations += n;
    for round in 0..budget {
        let best = if lazy {
            loop {
                let head = heap.pop().expect("budget does not exceed vertex count");
                if head.round == round {
                    break head;
                }
                heap.push(evaluate(&trace.chosen, head.vertex, current, round)?);
                trace.evaluations += 1;
            }
        } else {
            if round > 0 {
                let stale: Vec<Candidate> = heap.drain().collect();
                for c in stale {
                    heap.push(evaluate(&trace.chosen, c.vertex, current, round)?);
                }
                trace.evaluations += heap.len();
            }
            heap.pop().expect("budget does not exceed vertex count")
        };
        let se = (best.stderr.powi(2) + current_se.powi(2)).sqrt();
        trace.pooled_stderr = trace.pooled_stderr.max(se);
        trace.chosen.push(best.vertex);
        trace.marginal_gains.push(best.gain);
        current = best.spread;
        current_se = best.stderr;
    }
    trace.spread = current;
    Ok(trace)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

/// Exhaustive maximum of the exact spread over all `budget`-subsets. Among
/// equal spreads the lexicographically smallest set is returned.
pub fn brute_force_opt(net: &Network, budget: usize) -> Result<(Vec<usize>, f64)> {
    let n = net.vertex_count();
    if budget > n {
        return Err(Error::Budget { budget, max: n });
    }
    if n > MAX_BRUTE_FORCE_VERTICES {
        return Err(Error::TooLarge(format!("{n} vertices (max {MAX_BRUTE_FORCE_VERTICES})")));
    }
    let sets = binomial(n, budget);
    if sets > MAX_BRUTE_FORCE_SETS {
        return Err(Error::TooLarge(format!("{sets} candidate sets (max {MAX_BRUTE_FORCE_SETS})")));
    }
    let mut combo: Vec<usize> = (0..budget).collect();
    let mut best = (combo.clone(), exact_spread(net, &combo)?);
    loop {
        // advance to the next combination in lexicographic order
        let Some(i) = (0..budget).rev().find(|&i| combo[i] < n - budget + i) else {
            return Ok(best);
        };
        combo[i] += 1;
        for j in i + 1..budget {
            combo[j] = combo[j - 1] + 1;
        }
        let spread = exact_spread(net, &combo)?;
        if spread > best.1 {
            best = (combo.clone(), spread);
        }
    }
}
