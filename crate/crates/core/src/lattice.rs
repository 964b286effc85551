//! Subset-lattice kernels over the parent set of a single vertex.
//!
//! A vertex with `k` ordered parents has `2^k` parent activation states and
//! `2^k` connection patterns, both encoded as bitmasks: bit `m` refers to the
//! `m`-th parent. Every vector indexed by states or patterns is a
//! [`LatticeVector`] of length `2^k`.
//!
//! The connection matrix `M` has `M[s][c] = 1` iff state `s` and pattern `c`
//! share a set bit. It is never needed in dense form by the algorithms: the
//! product `M b` reduces to one subset-sum (zeta) transform, and inverting it
//! is a Möbius transform. Both run in `O(k 2^k)`.

use std::ops::{AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of parents of a single vertex.
pub const MAX_PARENTS: usize = 20;
/// Largest `k` for which [`connection_matrix`] materializes `M`.
pub const MAX_DENSE_PARENTS: usize = 12;
/// Largest `k` accepted by [`enumerate_submodularity_triples`].
pub const MAX_TRIPLE_PARENTS: usize = 12;

/// Activation state of a vertex's parents; bit `m` set means parent `m` is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParentState(pub u32);

/// Set of parents whose edge to the child is live; bit `m` set means parent `m` is connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConnectionPattern(pub u32);

impl ParentState {
    pub fn contains(self, parent: usize) -> bool {
        self.0 >> parent & 1 == 1
    }

    pub fn with(self, parent: usize) -> Self {
        ParentState(self.0 | 1 << parent)
    }

    pub fn is_subset_of(self, other: ParentState) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Parent indices contained in the state, ascending.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |m| bits >> m & 1 == 1)
    }
}

impl ConnectionPattern {
    /// True when some active parent is connected, i.e. `M[state][self] = 1`.
    pub fn fires(self, state: ParentState) -> bool {
        self.0 & state.0 != 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        ParentState(self.0).members()
    }
}

/// Real vector indexed by parent states (or connection patterns) of one vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeVector(Vec<f64>);

impl LatticeVector {
    /// Wraps `values`, which must have power-of-two length.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(values.len()));
        }
        let k = values.len().trailing_zeros() as usize;
        if k > MAX_PARENTS {
            return Err(Error::ParentCount(k, MAX_PARENTS));
        }
        Ok(LatticeVector(values))
    }

    pub fn zeros(k: usize) -> Self {
        LatticeVector(vec![0.0; 1 << k])
    }

    /// Unit vector at `index`.
    pub fn indicator(k: usize, index: usize) -> Self {
        let mut v = Self::zeros(k);
        v.0[index] = 1.0;
        v
    }

    /// Number of parents, `log2(len)`.
    pub fn parent_count(&self) -> usize {
        self.0.len().trailing_zeros() as usize
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &LatticeVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for LatticeVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for LatticeVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<LatticeVector> for Vec<f64> {
    fn from(v: LatticeVector) -> Self {
        v.0
    }
}

/// One quantifier instance of the diminishing-returns inequality restricted to
/// a parent set: `S ⊆ T ⊆ [k] \ {u}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub smaller: ParentState,
    pub larger: ParentState,
    pub parent: usize,
}

fn check_len(len: usize, k: usize) -> Result<()> {
    if k > MAX_PARENTS {
        return Err(Error::ParentCount(k, MAX_PARENTS));
    }
    if len != 1 << k {
        return Err(Error::LengthMismatch { k, expected: 1 << k, found: len });
    }
    Ok(())
}

/// Dense connection matrix, `2^k x 2^k`, row = parent state, column = pattern.
pub fn connection_matrix(k: usize) -> Result<Vec<Vec<u8>>> {
    if !(1..=MAX_DENSE_PARENTS).contains(&k) {
        return Err(Error::ParentCount(k, MAX_DENSE_PARENTS));
    }
    let n = 1usize << k;
    Ok((0..n)
        .map(|s| (0..n).map(|c| u8::from(s & c != 0)).collect())
        .collect())
}

// In-place butterflies over bit positions. `T` is f64 in the kernels and an
// exact rational type in the oracles.

/// In place: `x[t] <- sum_{c ⊆ t} x[c]`.
pub fn zeta_in_place<T: Clone + AddAssign>(x: &mut [T]) {
    debug_assert!(x.len().is_power_of_two());
    let mut half = 1;
    while half < x.len() {
        for block in x.chunks_exact_mut(half * 2) {
            let (lo, hi) = block.split_at_mut(half);
            for (l, h) in lo.iter().zip(hi) {
                *h += l.clone();
            }
        }
        half *= 2;
    }
}

/// In place inverse of [`zeta_in_place`].
pub fn mobius_in_place<T: Clone + SubAssign>(x: &mut [T]) {
    debug_assert!(x.len().is_power_of_two());
    let mut half = 1;
    while half < x.len() {
        for block in x.chunks_exact_mut(half * 2) {
            let (lo, hi) = block.split_at_mut(half);
            for (l, h) in lo.iter().zip(hi) {
                *h -= l.clone();
            }
        }
        half *= 2;
    }
}

/// `M b` over any additive group, without materializing `M`.
pub fn apply_connection_in<T>(b: &[T]) -> Vec<T>
where
    T: Clone + AddAssign + Sub<Output = T>,
{
    let mut z = b.to_vec();
    zeta_in_place(&mut z);
    let full = z.len() - 1;
    // (Mb)[s] = sum(b) - sum_{c ⊆ !s} b[c]; z[full] is the total so s = ∅ cancels exactly.
    (0..z.len())
        .map(|s| z[full].clone() - z[full & !s].clone())
        .collect()
}

/// Subset sums: `g[t] = sum_{c ⊆ t} x[c]`.
pub fn zeta_transform(x: &LatticeVector, k: usize) -> Result<LatticeVector> {
    check_len(x.len(), k)?;
    let mut out = x.0.clone();
    zeta_in_place(&mut out);
    Ok(LatticeVector(out))
}

/// Inclusion–exclusion inverse of [`zeta_transform`].
pub fn mobius_transform(g: &LatticeVector, k: usize) -> Result<LatticeVector> {
    check_len(g.len(), k)?;
    let mut out = g.0.clone();
    mobius_in_place(&mut out);
    Ok(LatticeVector(out))
}

/// `M b` for the connection matrix of `k` parents.
pub fn apply_connection(b: &LatticeVector, k: usize) -> Result<LatticeVector> {
    check_len(b.len(), k)?;
    Ok(LatticeVector(apply_connection_in(&b.0)))
}

/// Every `(S, T, u)` with `S ⊆ T ⊆ [k] \ {u}`; there are `k 3^(k-1)` of them.
pub fn enumerate_submodularity_triples(k: usize) -> Result<Vec<Triple>> {
    if k > MAX_TRIPLE_PARENTS {
        return Err(Error::ParentCount(k, MAX_TRIPLE_PARENTS));
    }
    let full = (1u32 << k) - 1;
    let mut out = Vec::with_capacity(if k == 0 { 0 } else { k * 3usize.pow(k as u32 - 1) });
    for u in 0..k {
        let rest = full & !(1 << u);
        // T ranges over subsets of rest, S over subsets of T.
        let mut t = rest;
        loop {
            let mut s = t;
            loop {
                out.push(Triple {
                    smaller: ParentState(s),
                    larger: ParentState(t),
                    parent: u,
                });
                if s == 0 {
                    break;
                }
                s = (s - 1) & t;
            }
            if t == 0 {
                break;
            }
            t = (t - 1) & rest;
        }
    }
    Ok(out)
}
