use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::Network;

use super::seed_mask;

/// Largest network accepted by the exact enumerators.
pub const MAX_EXACT_VERTICES: usize = 20;

/// Outcome distribution: activated-set bitmask (bit `v` = vertex `v`) to probability.
pub type Distribution<P = f64> = BTreeMap<u32, P>;

/// Depth-first expansion of the topological sweep. Each leaf is one outcome
/// and its weight is the product of the per-vertex conditional probabilities.
fn enumerate<P, F>(net: &Network, seeds: &[usize], to_prob: F) -> Result<Distribution<P>>
where
    P: Clone + Zero + One + std::ops::Sub<Output = P> + std::ops::Mul<Output = P>,
    F: Fn(f64) -> P,
{
    let n = net.vertex_count();
    if n > MAX_EXACT_VERTICES {
        return Err(Error::TooLarge(format!("{n} vertices (max {MAX_EXACT_VERTICES})")));
    }
    let mask = seed_mask(net, seeds)?;
    let start: u32 = (0..n).filter(|&v| mask[v]).fold(0, |m, v| m | 1 << v);
    let order = net.topo_order();

    let mut out = Distribution::new();
    let mut stack = vec![(0usize, start, P::one())];
    while let Some((pos, set, prob)) = stack.pop() {
        if pos == order.len() {
            let slot = out.entry(set).or_insert_with(P::zero);
            *slot = slot.clone() + prob;
            continue;
        }
        let v = order[pos];
        if set >> v & 1 == 1 {
            stack.push((pos + 1, set, prob));
            continue;
        }
        let p = net.table(v).get(net.parent_state(v, |u| set >> u & 1 == 1));
        if p < 1.0 {
            stack.push((pos + 1, set, prob.clone() * (P::one() - to_prob(p))));
        }
        if p > 0.0 {
            stack.push((pos + 1, set | 1 << v, prob * to_prob(p)));
        }
    }
    Ok(out)
}

/// Exact `P(T | S)` over all reachable outcomes `T`.
pub fn exact_distribution(net: &Network, seeds: &[usize]) -> Result<Distribution> {
    enumerate(net, seeds, |p| p)
}

/// As [`exact_distribution`], in exact rational arithmetic. Table entries are
/// converted exactly from their binary floating-point values.
pub fn exact_distribution_rational(net: &Network, seeds: &[usize]) -> Result<Distribution<BigRational>> {
    enumerate(net, seeds, |p| BigRational::from_float(p).expect("table entries are finite"))
}

/// Expected outcome size of a distribution.
pub fn spread_of(dist: &Distribution) -> f64 {
    dist.iter().map(|(set, p)| p * f64::from(set.count_ones())).sum()
}

/// Exact expected number of activated vertices.
pub fn exact_spread(net: &Network, seeds: &[usize]) -> Result<f64> {
    Ok(spread_of(&exact_distribution(net, seeds)?))
}

pub fn exact_spread_rational(net: &Network, seeds: &[usize]) -> Result<BigRational> {
    let dist = exact_distribution_rational(net, seeds)?;
    Ok(dist
        .into_iter()
        .fold(BigRational::zero(), |acc, (set, p)| acc + p * BigRational::from_integer(set.count_ones().into())))
}
