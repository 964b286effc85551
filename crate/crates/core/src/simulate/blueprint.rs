//! Seed-independent randomness: blueprints and live connection patterns.
//!
//! A blueprint fixes, for every vertex, a deterministic response to each
//! parent state; drawing every response independently with the table's
//! probability reproduces the sequential sampler. A live pattern is the
//! coarser object available for certified vertices: one set of live parent
//! edges, drawn from the certificate's coefficients.

use rand::Rng;

use crate::certify::CoverageCertificate;
use crate::error::{Error, Result};
use crate::lattice::ConnectionPattern;
use crate::model::Network;

use super::exact::{Distribution, MAX_EXACT_VERTICES};
use super::{seed_mask, substream};

/// Cap on `sum_v 2^|parents(v)|` for exhaustive blueprint enumeration.
pub const MAX_BLUEPRINT_ENTRIES: usize = 20;

/// One deterministic response rule per vertex: `responses[v][s]` says whether
/// `v` activates when its parents are in state `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blueprint {
    pub responses: Vec<Vec<bool>>,
}

pub fn sample_blueprint<R: Rng>(net: &Network, rng: &mut R) -> Blueprint {
    let responses = (0..net.vertex_count())
        .map(|v| net.table(v).as_slice().iter().map(|&p| rng.gen::<f64>() < p).collect())
        .collect();
    Blueprint { responses }
}

/// Deterministic sweep applying each vertex's response rule.
pub fn propagate_blueprint(bp: &Blueprint, net: &Network, seeds: &[usize]) -> Result<Vec<bool>> {
    if bp.responses.len() != net.vertex_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} response vectors for {} vertices",
            bp.responses.len(),
            net.vertex_count()
        )));
    }
    for (v, r) in bp.responses.iter().enumerate() {
        if r.len() != 1 << net.parents(v).len() {
            return Err(Error::ShapeMismatch(format!("vertex {:?} has {} responses", net.name(v), r.len())));
        }
    }
    let mut active = seed_mask(net, seeds)?;
    for &v in net.topo_order() {
        if !active[v] {
            active[v] = bp.responses[v][net.parent_state(v, |u| active[u])];
        }
    }
    Ok(active)
}

fn mask_bits(active: &[bool]) -> u32 {
    active.iter().enumerate().fold(0, |m, (v, &a)| if a { m | 1 << v } else { m })
}

/// Outcome distribution induced by the blueprint measure, by summing the
/// probability of every blueprint with the same outcome.
pub fn blueprint_outcome_distribution(net: &Network, seeds: &[usize]) -> Result<Distribution> {
    let entries = net.table_entries();
    if entries > MAX_BLUEPRINT_ENTRIES || net.vertex_count() > MAX_EXACT_VERTICES {
        return Err(Error::TooLarge(format!("{entries} table entries (max {MAX_BLUEPRINT_ENTRIES})")));
    }
    // flat index -> (vertex, state)
    let slots: Vec<(usize, usize)> = (0..net.vertex_count())
        .flat_map(|v| (0..1usize << net.parents(v).len()).map(move |s| (v, s)))
        .collect();
    let mut out = Distribution::new();
    for code in 0u32..1 << entries {
        let mut prob = 1.0;
        let mut responses: Vec<Vec<bool>> =
            (0..net.vertex_count()).map(|v| vec![false; 1 << net.parents(v).len()]).collect();
        for (i, &(v, s)) in slots.iter().enumerate() {
            let on = code >> i & 1 == 1;
            let p = net.table(v).get(s);
            prob *= if on { p } else { 1.0 - p };
            responses[v][s] = on;
        }
        if prob == 0.0 {
            continue;
        }
        let active = propagate_blueprint(&Blueprint { responses }, net, seeds)?;
        *out.entry(mask_bits(&active)).or_insert(0.0) += prob;
    }
    Ok(out)
}

/// Draws one live pattern per vertex from its certificate's coefficients.
pub fn sample_live_pattern<R: Rng>(certs: &[CoverageCertificate], rng: &mut R) -> Result<Vec<ConnectionPattern>> {
    certs
        .iter()
        .enumerate()
        .map(|(v, c)| {
            let b = c.b.as_ref().ok_or_else(|| Error::Infeasible(format!("#{v}")))?;
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (pattern, &mass) in b.as_slice().iter().enumerate() {
                if mass <= 0.0 {
                    continue;
                }
                last = pattern;
                acc += mass;
                if u < acc {
                    return Ok(ConnectionPattern(pattern as u32));
                }
            }
            // rounding left u above the running total
            Ok(ConnectionPattern(last as u32))
        })
        .collect()
}

/// Live-edge propagation: a vertex activates iff a live parent is active.
pub fn propagate_live(net: &Network, patterns: &[ConnectionPattern], seeds: &[usize]) -> Result<Vec<bool>> {
    if patterns.len() != net.vertex_count() {
        return Err(Error::ShapeMismatch(format!("{} patterns for {} vertices", patterns.len(), net.vertex_count())));
    }
    let mut active = seed_mask(net, seeds)?;
    for &v in net.topo_order() {
        if !active[v] {
            let state = net.parent_state(v, |u| active[u]) as u32;
            active[v] = patterns[v].0 & state != 0;
        }
    }
    Ok(active)
}

/// Exact outcome distribution under live-pattern semantics with patterns drawn
/// from the certificates. Enumerates the product of the supports.
pub fn live_outcome_distribution(net: &Network, certs: &[CoverageCertificate], seeds: &[usize]) -> Result<Distribution> {
    let supports: Vec<Vec<(u32, f64)>> = certs
        .iter()
        .enumerate()
        .map(|(v, c)| {
            let b = c.b.as_ref().ok_or_else(|| Error::Infeasible(net.name(v).to_string()))?;
            Ok(b.as_slice()
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > 0.0)
                .map(|(p, &m)| (p as u32, m))
                .collect())
        })
        .collect::<Result<_>>()?;
    let combos: f64 = supports.iter().map(|s| s.len() as f64).product();
    if combos > 1e6 {
        return Err(Error::TooLarge(format!("{combos} pattern combinations")));
    }
    let mut out = Distribution::new();
    let mut idx = vec![0usize; supports.len()];
    loop {
        let patterns: Vec<ConnectionPattern> =
            idx.iter().zip(&supports).map(|(&i, s)| ConnectionPattern(s[i].0)).collect();
        let prob: f64 = idx.iter().zip(&supports).map(|(&i, s)| s[i].1).product();
        let active = propagate_live(net, &patterns, seeds)?;
        *out.entry(mask_bits(&active)).or_insert(0.0) += prob;
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(out);
            }
            idx[pos] += 1;
            if idx[pos] < supports[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Blueprint drawn from `substream(rng_seed, 0, 1)`.
pub fn sample_blueprint_seeded(net: &Network, rng_seed: u64) -> Blueprint {
    sample_blueprint(net, &mut substream(rng_seed, 0, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify_model, DEFAULT_FEAS_TOL};
    use crate::model::{ic_table, lt_coefficients, lt_table};
    use crate::simulate::exact_distribution;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn certain_response() {
        let net = Network::from_tables(names(2), vec![vec![], vec![0]], vec![vec![0.0], vec![0.0, 1.0]]).unwrap();
        for seed in 0..20 {
            let bp = sample_blueprint_seeded(&net, seed);
            assert_eq!(bp.responses[1], vec![false, true]);
        }
        assert!(sample_blueprint_seeded(&Network::empty(), 0).responses.is_empty());
    }

    #[test]
    fn response_marginals() {
        let table = [0.0, 0.5, 0.5, 0.75];
        let net = Network::from_tables(
            names(3),
            vec![vec![], vec![], vec![0, 1]],
            vec![vec![0.0], vec![0.0], table.to_vec()],
        )
        .unwrap();
        let mut rng = substream(3, 0, 0);
        let runs = 100_000;
        let mut hits = [0usize; 4];
        for _ in 0..runs {
            let bp = sample_blueprint(&net, &mut rng);
            for (h, &r) in hits.iter_mut().zip(&bp.responses[2]) {
                *h += usize::from(r);
            }
        }
        for (h, p) in hits.iter().zip(table) {
            let sigma = (p * (1.0 - p) / runs as f64).sqrt();
            assert!((*h as f64 / runs as f64 - p).abs() <= 3.0 * sigma + 1e-12);
        }
    }

    #[test]
    fn blueprint_shape_checked() {
        let net = Network::from_tables(names(2), vec![vec![], vec![0]], vec![vec![0.0], vec![0.0, 1.0]]).unwrap();
        let bad = Blueprint { responses: vec![vec![false], vec![false]] };
        assert!(matches!(propagate_blueprint(&bad, &net, &[0]), Err(Error::ShapeMismatch(_))));
        let bad = Blueprint { responses: vec![vec![false]] };
        assert!(propagate_blueprint(&bad, &net, &[0]).is_err());
    }

    #[test]
    fn no_seeds_no_activation() {
        let net = Network::from_tables(
            names(3),
            vec![vec![], vec![0], vec![0, 1]],
            vec![vec![0.0], vec![0.0, 0.9], vec![0.0, 0.2, 0.3, 0.4]],
        )
        .unwrap();
        let bp = sample_blueprint_seeded(&net, 1);
        assert!(propagate_blueprint(&bp, &net, &[]).unwrap().iter().all(|a| !a));
    }

    #[test]
    fn full_patterns_give_reachability() {
        let net = Network::from_tables(
            names(4),
            vec![vec![], vec![0], vec![], vec![1, 2]],
            vec![vec![0.0], vec![0.0, 0.5], vec![0.0], ic_table(&[0.5, 0.5]).unwrap().as_slice().to_vec()],
        )
        .unwrap();
        let full: Vec<_> = (0..4).map(|v| ConnectionPattern((1u32 << net.parents(v).len()) - 1)).collect();
        assert_eq!(propagate_live(&net, &full, &[0]).unwrap(), vec![true, true, false, true]);
        assert_eq!(propagate_live(&net, &full, &[2]).unwrap(), vec![false, false, true, true]);
    }

    #[test]
    fn blueprint_measure_matches_sequential() {
        let net = Network::from_tables(
            names(4),
            vec![vec![], vec![0], vec![0], vec![1, 2]],
            vec![vec![0.0], vec![0.0, 0.3], vec![0.0, 0.6], vec![0.0, 0.1, 0.2, 0.9]],
        )
        .unwrap();
        for seeds in [vec![], vec![0], vec![1], vec![1, 2]] {
            let a = blueprint_outcome_distribution(&net, &seeds).unwrap();
            let b = exact_distribution(&net, &seeds).unwrap();
            let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
            for k in keys {
                let (x, y) = (a.get(k).copied().unwrap_or(0.0), b.get(k).copied().unwrap_or(0.0));
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lt_pattern_frequencies() {
        let w = [0.3, 0.4];
        let net = Network::from_tables(
            names(3),
            vec![vec![], vec![], vec![0, 1]],
            vec![vec![0.0], vec![0.0], lt_table(&w).unwrap().as_slice().to_vec()],
        )
        .unwrap();
        let certs = certify_model(&net, DEFAULT_FEAS_TOL).unwrap().vertices;
        let expect = lt_coefficients(&w).unwrap();
        let mut rng = substream(5, 0, 0);
        let runs = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..runs {
            counts[sample_live_pattern(&certs, &mut rng).unwrap()[2].0 as usize] += 1;
        }
        for (c, &p) in counts.iter().zip(expect.as_slice()) {
            let sigma = (p * (1.0 - p) / runs as f64).sqrt();
            assert!((*c as f64 / runs as f64 - p).abs() <= 3.0 * sigma + 1e-12, "{counts:?}");
        }
    }

    #[test]
    fn ic_patterns_are_independent_flips() {
        let p = [0.2, 0.7];
        let net = Network::from_tables(
            names(3),
            vec![vec![], vec![], vec![0, 1]],
            vec![vec![0.0], vec![0.0], ic_table(&p).unwrap().as_slice().to_vec()],
        )
        .unwrap();
        let certs = certify_model(&net, DEFAULT_FEAS_TOL).unwrap().vertices;
        let mut rng = substream(6, 0, 0);
        let runs = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..runs {
            counts[sample_live_pattern(&certs, &mut rng).unwrap()[2].0 as usize] += 1;
        }
        let product = [(1.0 - p[0]) * (1.0 - p[1]), p[0] * (1.0 - p[1]), (1.0 - p[0]) * p[1], p[0] * p[1]];
        for (c, q) in counts.iter().zip(product) {
            let sigma = (q * (1.0 - q) / runs as f64).sqrt();
            assert!((*c as f64 / runs as f64 - q).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn empty_pattern_never_fires() {
        let net = Network::from_tables(names(2), vec![vec![], vec![0]], vec![vec![0.0], vec![0.0, 0.0]]).unwrap();
        let certs = certify_model(&net, DEFAULT_FEAS_TOL).unwrap().vertices;
        let mut rng = substream(1, 0, 0);
        for _ in 0..100 {
            let pats = sample_live_pattern(&certs, &mut rng).unwrap();
            assert_eq!(pats[1], ConnectionPattern(0));
            assert!(!propagate_live(&net, &pats, &[0]).unwrap()[1]);
        }
    }

    #[test]
    fn live_patterns_reproduce_sequential() {
        let net = Network::from_tables(
            names(4),
            vec![vec![], vec![0], vec![0], vec![1, 2]],
            vec![
                vec![0.0],
                vec![0.0, 0.3],
                vec![0.0, 0.6],
                ic_table(&[0.4, 0.5]).unwrap().as_slice().to_vec(),
            ],
        )
        .unwrap();
        let certs = certify_model(&net, DEFAULT_FEAS_TOL).unwrap().vertices;
        for seeds in [vec![0], vec![1], vec![0, 2]] {
            let a = live_outcome_distribution(&net, &certs, &seeds).unwrap();
            let b = exact_distribution(&net, &seeds).unwrap();
            for (k, p) in &b {
                assert!((a.get(k).copied().unwrap_or(0.0) - p).abs() < 1e-12);
            }
            assert!((a.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_certificates_rejected() {
        let net = Network::from_tables(
            names(3),
            vec![vec![], vec![], vec![0, 1]],
            vec![vec![0.0], vec![0.0], vec![0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let certs = certify_model(&net, DEFAULT_FEAS_TOL).unwrap().vertices;
        assert!(matches!(sample_live_pattern(&certs, &mut substream(0, 0, 0)), Err(Error::Infeasible(_))));
    }
}
