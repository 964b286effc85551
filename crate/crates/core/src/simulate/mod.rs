//! Propagation engines.
//!
//! Every engine sweeps the vertices in topological order. Seeds are active
//! before the sweep starts; each other vertex consumes exactly one uniform
//! variate from the stream, whatever its activation probability, so two
//! engines fed the same stream stay aligned vertex by vertex.
//!
//! Random streams come from ChaCha8 ([`substream`]): the base seed keys the
//! generator and `(worker << 32) | lane` selects the stream, so substreams are
//! independent and can be derived without coordination.

mod blueprint;
mod exact;
mod multi;

pub use blueprint::{
    blueprint_outcome_distribution, live_outcome_distribution, propagate_blueprint, propagate_live,
    sample_blueprint, sample_blueprint_seeded, sample_live_pattern, Blueprint, MAX_BLUEPRINT_ENTRIES,
};
pub use exact::{
    exact_distribution, exact_distribution_rational, exact_spread, exact_spread_rational, spread_of,
    Distribution, MAX_EXACT_VERTICES,
};
pub use multi::{
    estimate_multi_spread, exact_cltm_distribution, exact_multi_distribution, simulate_cltm, simulate_cltm_with, simulate_multi,
    simulate_multi_with, total_variation,
    type_spread, MultiDistribution, MultiModel, MultiSpreadEstimate, MultiState, TieRule, MAX_EXACT_MULTI_TYPES,
    MAX_EXACT_MULTI_VERTICES,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Network;
use crate::par::map_ordered;

/// Independent stream `(worker, lane)` of the generator keyed by `base_seed`.
pub fn substream(base_seed: u64, worker: u32, lane: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream((u64::from(worker) << 32) | u64::from(lane));
    rng
}

/// Membership mask from a list of vertex indices.
pub fn seed_mask(net: &Network, seeds: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; net.vertex_count()];
    for &s in seeds {
        *mask
            .get_mut(s)
            .ok_or_else(|| Error::UnknownVertex(format!("#{s}")))? = true;
    }
    Ok(mask)
}

/// One run of the sequential sampler; returns the activation mask.
pub fn simulate_with<R: Rng>(net: &Network, seeds: &[bool], rng: &mut R) -> Vec<bool> {
    let mut active = seeds.to_vec();
    for &v in net.topo_order() {
        if active[v] {
            continue;
        }
        let state = net.parent_state(v, |u| active[u]);
        let u: f64 = rng.gen();
        active[v] = u < net.table(v).get(state);
    }
    active
}

/// One run from `rng_seed`; returns the sorted activated vertex indices.
pub fn simulate_once(net: &Network, seeds: &[usize], rng_seed: u64) -> Result<Vec<usize>> {
    let mask = seed_mask(net, seeds)?;
    let mut rng = substream(rng_seed, 0, 0);
    let active = simulate_with(net, &mask, &mut rng);
    Ok((0..active.len()).filter(|&v| active[v]).collect())
}

/// Monte Carlo estimate of the expected number of activated vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub rng_seed: u64,
    pub workers: usize,
}

/// Averages `samples` runs. Worker `i` of `workers` draws its share of the
/// budget (`samples / workers`, plus one for the first `samples % workers`
/// workers) from `substream(rng_seed, i, 0)`; the sums are exact integers, so
/// the result depends only on `(rng_seed, workers)`.
pub fn estimate_spread(
    net: &Network,
    seeds: &[usize],
    samples: usize,
    rng_seed: u64,
    workers: usize,
) -> Result<SpreadEstimate> {
    if samples == 0 {
        return Err(Error::Invalid("samples must be at least 1".into()));
    }
    let mask = seed_mask(net, seeds)?;
    let workers = workers.clamp(1, samples);
    let shares: Vec<(u32, usize)> = (0..workers)
        .map(|i| (i as u32, samples / workers + usize::from(i < samples % workers)))
        .collect();
    let partial = map_ordered(&shares, workers, |&(worker, share)| {
        let mut rng = substream(rng_seed, worker, 0);
        let (mut sum, mut sum_sq) = (0u64, 0u128);
        for _ in 0..share {
            let count = simulate_with(net, &mask, &mut rng).iter().filter(|&&a| a).count() as u64;
            sum += count;
            sum_sq += u128::from(count * count);
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partial
        .into_iter()
        .fold((0u64, 0u128), |(a, b), (c, d)| (a + c, b + d));
    let n = samples as f64;
    let mean = sum as f64 / n;
    let stderr = if samples > 1 {
        let var = (sum_sq as f64 - n * mean * mean) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(SpreadEstimate { mean, stderr, samples, rng_seed, workers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(p: f64) -> Network {
        Network::from_tables(
            vec!["u".into(), "v".into()],
            vec![vec![], vec![0]],
            vec![vec![0.0], vec![0.0, p]],
        )
        .unwrap()
    }

    #[test]
    fn all_seeded() {
        let net = chain(0.3);
        assert_eq!(simulate_once(&net, &[0, 1], 1).unwrap(), vec![0, 1]);
        let est = estimate_spread(&net, &[0, 1], 100, 3, 2).unwrap();
        assert_eq!(est.mean, 2.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn certain_edge() {
        assert_eq!(simulate_once(&chain(1.0), &[0], 9).unwrap(), vec![0, 1]);
        assert_eq!(simulate_once(&chain(1.0), &[], 9).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn unknown_seed() {
        assert!(matches!(simulate_once(&chain(0.5), &[2], 0), Err(Error::UnknownVertex(_))));
        assert!(estimate_spread(&chain(0.5), &[0], 0, 0, 1).is_err());
    }

    #[test]
    fn half_edge_frequency() {
        let net = chain(0.5);
        let mask = seed_mask(&net, &[0]).unwrap();
        let mut rng = substream(7, 0, 0);
        let runs = 100_000;
        let hits = (0..runs).filter(|_| simulate_with(&net, &mask, &mut rng)[1]).count();
        let sigma = (0.25 / runs as f64).sqrt();
        assert!((hits as f64 / runs as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn chain_spread() {
        let est = estimate_spread(&chain(0.3), &[0], 100_000, 11, 3).unwrap();
        assert!((est.mean - 1.3).abs() < 3.0 * est.stderr, "{est:?}");
        assert_eq!(est.samples, 100_000);
    }

    #[test]
    fn reproducible() {
        let net = chain(0.4);
        let a = estimate_spread(&net, &[0], 5000, 42, 4).unwrap();
        let b = estimate_spread(&net, &[0], 5000, 42, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(simulate_once(&net, &[0], 5).unwrap(), simulate_once(&net, &[0], 5).unwrap());
    }

    #[test]
    fn substreams_differ() {
        let mut a = substream(1, 0, 0);
        let mut b = substream(1, 1, 0);
        let mut c = substream(1, 0, 1);
        let (x, y, z): (u64, u64, u64) = (a.gen(), b.gen(), c.gen());
        assert!(x != y && y != z && x != z);
    }
}
