//! Exact coverage certification of activation tables.
//!
//! A table `a` is a coverage table when `a = M b` for some probability vector
//! `b`: the vertex then behaves like "sample a set of live parent edges from
//! `b`, activate iff an active parent is live", which makes spread submodular.
//! Assuming `sum(b) = 1`, `(M b)[s] = 1 - sum_{c ⊆ !s} b[c]`, so the subset sums
//! of `b` are pinned to `1 - a[!t]` and `b` itself is their Möbius inverse. The
//! candidate is therefore unique and certification needs no search.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{
    apply_connection, enumerate_submodularity_triples, mobius_in_place, ConnectionPattern, LatticeVector,
    ParentState, MAX_PARENTS, MAX_TRIPLE_PARENTS,
};
use crate::model::{ActivationTable, Network};
use crate::par::map_ordered;

/// Default feasibility tolerance.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;

/// Why a table has no coverage representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// The unique candidate puts negative mass `value` on `pattern`.
    NegativeCoefficient { pattern: ConnectionPattern, value: f64 },
    /// `a[∅] > 0`: the candidate's mass falls short of one by `-value`.
    SpontaneousActivation { pattern: ConnectionPattern, value: f64 },
}

impl Witness {
    pub fn pattern(&self) -> ConnectionPattern {
        match *self {
            Witness::NegativeCoefficient { pattern, .. } | Witness::SpontaneousActivation { pattern, .. } => {
                pattern
            }
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Witness::NegativeCoefficient { value, .. } | Witness::SpontaneousActivation { value, .. } => value,
        }
    }
}

/// Result of certifying one table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCertificate {
    pub feasible: bool,
    /// Representing probability vector, present iff feasible.
    pub b: Option<LatticeVector>,
    /// Present iff infeasible.
    pub witness: Option<Witness>,
    /// Max abs error of `M b - a` (of the raw candidate when infeasible).
    pub residual: f64,
    /// The unclamped inclusion–exclusion solution.
    #[serde(skip)]
    pub candidate: LatticeVector,
}

/// Certifies a single activation table.
pub fn certify_vertex(a: &ActivationTable, eps: f64) -> Result<CoverageCertificate> {
    let k = a.k();
    if k > MAX_PARENTS {
        return Err(Error::ParentCount(k, MAX_PARENTS));
    }
    let n = 1usize << k;
    let full = n - 1;
    let mut g: Vec<f64> = (0..n).map(|t| 1.0 - a.get(full & !t)).collect();
    mobius_in_place(&mut g);
    let candidate = LatticeVector::new(g)?;

    let (worst, min_coef) = candidate
        .as_slice()
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, x)| if x < best.1 { (i, x) } else { best });

    let spontaneous = a.get(0);
    if min_coef < -eps {
        let residual = apply_connection(&candidate, k)?.max_abs_diff(a.values());
        return Ok(CoverageCertificate {
            feasible: false,
            b: None,
            witness: Some(Witness::NegativeCoefficient {
                pattern: ConnectionPattern(worst as u32),
                value: min_coef,
            }),
            residual,
            candidate,
        });
    }
    if spontaneous > eps {
        let residual = apply_connection(&candidate, k)?.max_abs_diff(a.values());
        return Ok(CoverageCertificate {
            feasible: false,
            b: None,
            witness: Some(Witness::SpontaneousActivation {
                pattern: ConnectionPattern(0),
                value: -spontaneous,
            }),
            residual,
            candidate,
        });
    }

    let mut b: Vec<f64> = candidate.as_slice().iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = b.iter().sum();
    if total > 0.0 {
        b.iter_mut().for_each(|x| *x /= total);
    }
    let b = LatticeVector::new(b)?;
    let residual = apply_connection(&b, k)?.max_abs_diff(a.values());
    Ok(CoverageCertificate { feasible: true, b: Some(b), witness: None, residual, candidate })
}

/// Exact certification over rationals. Returns the unique candidate `b`;
/// the table is a coverage table iff every entry is nonnegative and `a[∅] = 0`.
pub fn certify_exact(a: &[BigRational]) -> Result<(bool, Vec<BigRational>)> {
    if !a.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(a.len()));
    }
    let full = a.len() - 1;
    let mut g: Vec<BigRational> = (0..a.len()).map(|t| BigRational::one() - &a[full & !t]).collect();
    mobius_in_place(&mut g);
    let feasible = a[0].is_zero() && g.iter().all(|x| !x.is_negative());
    Ok((feasible, g))
}

/// Per-vertex certificates for a whole network.
#[derive(Debug, Clone, Serialize)]
pub struct ModelCertificate {
    pub feasible: bool,
    pub vertices: Vec<CoverageCertificate>,
}

impl ModelCertificate {
    /// Indices of vertices whose certificate is infeasible.
    pub fn infeasible(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| !self.vertices[v].feasible).collect()
    }
}

pub fn certify_model(net: &Network, eps: f64) -> Result<ModelCertificate> {
    certify_model_with(net, eps, 1)
}

/// As [`certify_model`], spreading vertices over `workers` threads.
pub fn certify_model_with(net: &Network, eps: f64, workers: usize) -> Result<ModelCertificate> {
    let vertices = map_ordered(net.tables(), workers, |t| certify_vertex(t, eps))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let feasible = vertices.iter().all(|c| c.feasible);
    Ok(ModelCertificate { feasible, vertices })
}

/// Which per-vertex property a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Nonnegative,
    Monotone,
    Submodular,
}

/// A failing instance. For submodularity, `margin = (a[S+u] - a[S]) - (a[T+u] - a[T])`;
/// for monotonicity `S = T` and `margin = a[S+u] - a[S]`; for nonnegativity `margin = a[S]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub property: Property,
    pub smaller: ParentState,
    pub larger: ParentState,
    pub parent: Option<usize>,
    pub margin: f64,
}

/// Direct check of the activation expectation as a set function of active parents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectCheckReport {
    pub nonnegative: bool,
    pub monotone: bool,
    pub submodular: bool,
    pub violations: Vec<Violation>,
}

impl DirectCheckReport {
    pub fn passes(&self) -> bool {
        self.nonnegative && self.monotone && self.submodular
    }
}

/// Checks nonnegativity, monotonicity and diminishing returns of `s -> a[s]`.
pub fn direct_check(a: &ActivationTable, eps: f64) -> Result<DirectCheckReport> {
    let k = a.k();
    if k > MAX_TRIPLE_PARENTS {
        return Err(Error::ParentCount(k, MAX_TRIPLE_PARENTS));
    }
    let n = 1usize << k;
    let mut violations = Vec::new();
    for s in 0..n {
        if a.get(s) < -eps {
            violations.push(Violation {
                property: Property::Nonnegative,
                smaller: ParentState(s as u32),
                larger: ParentState(s as u32),
                parent: None,
                margin: a.get(s),
            });
        }
    }
    // Single-element steps suffice for monotonicity.
    for s in 0..n {
        for u in (0..k).filter(|u| s >> u & 1 == 0) {
            let step = a.get(s | 1 << u) - a.get(s);
            if step < -eps {
                violations.push(Violation {
                    property: Property::Monotone,
                    smaller: ParentState(s as u32),
                    larger: ParentState(s as u32),
                    parent: Some(u),
                    margin: step,
                });
            }
        }
    }
    for t in enumerate_submodularity_triples(k)? {
        let (s, l, u) = (t.smaller.0 as usize, t.larger.0 as usize, t.parent);
        let margin = (a.get(s | 1 << u) - a.get(s)) - (a.get(l | 1 << u) - a.get(l));
        if margin < -eps {
            violations.push(Violation {
                property: Property::Submodular,
                smaller: t.smaller,
                larger: t.larger,
                parent: Some(u),
                margin,
            });
        }
    }
    let has = |p: Property| violations.iter().any(|v| v.property == p);
    Ok(DirectCheckReport {
        nonnegative: !has(Property::Nonnegative),
        monotone: !has(Property::Monotone),
        submodular: !has(Property::Submodular),
        violations,
    })
}

/// A table on which the direct per-vertex check and coverage certification disagree.
#[derive(Debug, Clone, Serialize)]
pub struct Divergence {
    pub table: ActivationTable,
    pub witness: Witness,
    /// `"candidate"` for the built-in family, `"random"` for sampled tables, `"grid"` for grid sweeps.
    pub origin: &'static str,
}

/// Outcome of probing whether the per-vertex check implies coverage.
#[derive(Debug, Clone, Serialize)]
pub struct FalsificationReport {
    pub k: usize,
    pub rng_seed: u64,
    pub tested: usize,
    pub passing_direct_check: usize,
    pub divergences: Vec<Divergence>,
}

/// Random monotone table with `a[∅] = 0`: uniform draws, made monotone by
/// propagating maxima up the lattice one bit at a time, then scaled so the
/// full state maps to one.
pub fn random_monotone_table<R: Rng>(k: usize, rng: &mut R) -> ActivationTable {
    let n = 1usize << k;
    let mut a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    a[0] = 0.0;
    for bit in 0..k {
        for s in 0..n {
            if s >> bit & 1 == 1 {
                a[s] = a[s].max(a[s ^ 1 << bit]);
            }
        }
    }
    let top = a[n - 1];
    if top > 0.0 {
        a.iter_mut().for_each(|x| *x = (*x / top).min(1.0));
    }
    ActivationTable::new(a).expect("entries lie in [0, 1]")
}

/// Threshold-cardinality family `a[s] = min(|s|, r) / r`.
pub fn capped_cardinality_table(k: usize, r: usize) -> ActivationTable {
    let n = 1usize << k;
    let a = (0..n)
        .map(|s| (s.count_ones() as usize).min(r) as f64 / r as f64)
        .collect();
    ActivationTable::new(a).expect("entries lie in [0, 1]")
}

/// Searches for tables that pass [`direct_check`] but fail [`certify_vertex`].
/// Tests the capped-cardinality family for every cap, then `samples` random
/// monotone tables. Deterministic in `rng_seed`.
pub fn falsify_equivalence(k: usize, samples: usize, rng_seed: u64) -> Result<FalsificationReport> {
    if !(2..=6).contains(&k) {
        return Err(Error::Invalid(format!("falsification harness needs 2 <= k <= 6, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let candidates = (1..=k).map(|r| (capped_cardinality_table(k, r), "candidate"));
    let random: Vec<_> = (0..samples).map(|_| (random_monotone_table(k, &mut rng), "random")).collect();
    let mut report = FalsificationReport { k, rng_seed, tested: 0, passing_direct_check: 0, divergences: vec![] };
    for (table, origin) in candidates.chain(random) {
        report.tested += 1;
        if !direct_check(&table, DEFAULT_FEAS_TOL)?.passes() {
            continue;
        }
        report.passing_direct_check += 1;
        let cert = certify_vertex(&table, DEFAULT_FEAS_TOL)?;
        if let Some(witness) = cert.witness {
            report.divergences.push(Divergence { table, witness, origin });
        }
    }
    Ok(report)
}

/// Exhaustive version of [`falsify_equivalence`] over tables with `a[∅] = 0`
/// and every other entry on the grid `{0, 1/steps, ..., 1}`.
pub fn falsify_grid(k: usize, steps: usize) -> Result<FalsificationReport> {
    let free = (1usize << k) - 1;
    let count = (steps as f64 + 1.0).powi(free as i32);
    if k == 0 || steps == 0 || count > 1e7 {
        return Err(Error::TooLarge(format!("grid of {count} tables")));
    }
    let mut digits = vec![0usize; free];
    let mut report = FalsificationReport { k, rng_seed: 0, tested: 0, passing_direct_check: 0, divergences: vec![] };
    loop {
        let mut a = Vec::with_capacity(free + 1);
        a.push(0.0);
        a.extend(digits.iter().map(|&d| d as f64 / steps as f64));
        let table = ActivationTable::new(a)?;
        report.tested += 1;
        if direct_check(&table, DEFAULT_FEAS_TOL)?.passes() {
            report.passing_direct_check += 1;
            if let Some(witness) = certify_vertex(&table, DEFAULT_FEAS_TOL)?.witness {
                report.divergences.push(Divergence { table, witness, origin: "grid" });
            }
        }
        // odometer
        let mut i = 0;
        loop {
            if i == free {
                return Ok(report);
            }
            digits[i] += 1;
            if digits[i] <= steps {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
