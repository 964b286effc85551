//! Nearest coverage table in squared Euclidean distance.
//!
//! The set of coverage tables `C = { M b : b in simplex }` is a convex
//! polytope, so every table has a unique nearest point in `C`. We solve for it
//! in coefficient space: minimize `|M b - a|^2` over the probability simplex.
//! The Gram matrix of `M` is badly conditioned at ten or more parents, so a
//! single table is first solved by a minimum-norm-point active set method
//! with exact Gram entries, then finished by accelerated projected gradient,
//! which also checks the stopping rule. Joint multi-type projections use the
//! gradient method alone.

use serde::Serialize;

use crate::certify::{certify_vertex, DEFAULT_FEAS_TOL};
use crate::error::{Error, Result};
use crate::lattice::{apply_connection_in, zeta_in_place, LatticeVector};
use crate::model::{ActivationTable, Network};
use crate::par::map_ordered;

/// Largest parent count accepted by the projection solvers.
pub const MAX_PROJECT_PARENTS: usize = 14;

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Stop when the gradient-mapping norm drops to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the per-iteration objective sequence.
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: 50_000, record_trace: false }
    }
}

/// Euclidean projection onto `{x >= 0, sum x = 1}` (sort and threshold).
///
/// Entries are visited in decreasing order through a heap, so only the kept
/// entries plus one are ever ordered.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    use std::collections::BinaryHeap;

    struct Key(f64);
    impl PartialEq for Key {
        fn eq(&self, other: &Self) -> bool {
            self.cmp(other).is_eq()
        }
    }
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Key {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }

    if v.is_empty() {
        return vec![];
    }
    let mut heap: BinaryHeap<Key> = v.iter().map(|&x| Key(x)).collect();
    let mut cumsum = 0.0;
    let mut theta = f64::NEG_INFINITY;
    let mut kept = 0usize;
    while let Some(Key(x)) = heap.pop() {
        let t = (cumsum + x - 1.0) / (kept + 1) as f64;
        if x - t <= 0.0 {
            break;
        }
        cumsum += x;
        kept += 1;
        theta = t;
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Linear map `A` with adjoint, for least squares over the simplex.
trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, r: &[f64]) -> Vec<f64>;
}

/// The connection matrix itself; it is symmetric.
struct Connection {
    k: usize,
}

impl LinearMap for Connection {
    fn dim(&self) -> usize {
        1 << self.k
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        apply_connection_in(x)
    }
    fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        apply_connection_in(r)
    }
}

/// `n_types` stacked tables over `k` parents, each the image of a block of
/// the variable vector.
struct Stacked {
    k: usize,
    n_types: usize,
    support: Support,
}

impl Stacked {
    fn block(&self) -> usize {
        match self.support {
            Support::Singletons => self.k,
            Support::AllPatterns => 1 << self.k,
        }
    }
}

impl LinearMap for Stacked {
    fn dim(&self) -> usize {
        match self.support {
            Support::Singletons => self.n_types * self.k + 1,
            Support::AllPatterns => self.n_types << self.k,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = 1usize << self.k;
        let mut out = Vec::with_capacity(self.n_types * n);
        for t in 0..self.n_types {
            let blk = &x[t * self.block()..(t + 1) * self.block()];
            match self.support {
                Support::Singletons => {
                    let mut a = vec![0.0; n];
                    for (i, &w) in blk.iter().enumerate() {
                        let bit = 1 << i;
                        for s in 0..bit {
                            a[s | bit] = a[s] + w;
                        }
                    }
                    out.extend(a);
                }
                Support::AllPatterns => out.extend(apply_connection_in(blk)),
            }
        }
        out
    }

    fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        let n = 1usize << self.k;
        let mut out = Vec::with_capacity(self.dim());
        for t in 0..self.n_types {
            let rt = &r[t * n..(t + 1) * n];
            match self.support {
                Support::Singletons => {
                    for i in 0..self.k {
                        out.push((0..n).filter(|s| s >> i & 1 == 1).map(|s| rt[s]).sum());
                    }
                }
                Support::AllPatterns => out.extend(apply_connection_in(rt)),
            }
        }
        if self.support == Support::Singletons {
            // slack coordinate does not reach any table
            out.push(0.0);
        }
        out
    }
}

struct Solution {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn residual(op: &dyn LinearMap, x: &[f64], target: &[f64]) -> Vec<f64> {
    op.apply(x).iter().zip(target).map(|(ax, t)| ax - t).collect()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum()
}

fn step(x: &[f64], g: &[f64], lip: f64) -> Vec<f64> {
    let moved: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi / lip).collect();
    project_simplex(&moved)
}

/// Upper estimate of the largest eigenvalue of `A^T A` by 50 rounds of power
/// iteration from the all-ones vector, inflated by 1%.
fn spectral_bound(op: &dyn LinearMap, dim: usize) -> f64 {
    let mut x = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut rayleigh = 0.0;
    for _ in 0..50 {
        let y = op.adjoint(&op.apply(&x));
        rayleigh = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let norm = norm_sq(&y).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        x = y.into_iter().map(|v| v / norm).collect();
    }
    (rayleigh * 1.01).max(f64::MIN_POSITIVE)
}

/// Objective change `f(x + d) - f(x)` for the move `x -> to`, computed as
/// `|A d|^2 + 2 <r, A d>` so that it stays accurate when both values agree to
/// more digits than a float holds. Returns the change, its rounding scale and `A d`.
fn change(op: &dyn LinearMap, x: &[f64], to: &[f64], r: &[f64]) -> (f64, f64, Vec<f64>) {
    let d: Vec<f64> = to.iter().zip(x).map(|(a, b)| a - b).collect();
    let ad = op.apply(&d);
    let quad = norm_sq(&ad);
    let cross: f64 = r.iter().zip(&ad).map(|(a, b)| a * b).sum();
    let scale = quad + 2.0 * r.iter().zip(&ad).map(|(a, b)| (a * b).abs()).sum::<f64>();
    (quad + 2.0 * cross, 1e-13 * scale, ad)
}

/// Accelerated projected gradient with adaptive restart. The objective never
/// increases: when the momentum step would raise it, momentum is reset and a
/// plain projected step is taken instead, doubling the Lipschitz estimate
/// until that step descends. Past sixteen times the spectral estimate a failed
/// descent is rounding, and the iterate stays put.
fn solve(op: &dyn LinearMap, target: &[f64], opts: &SolverOptions, start: Option<Vec<f64>>) -> Solution {
    let dim = op.dim();
    // gradient is 2 A^T (A x - a), Lipschitz constant 2 lambda_max(A^T A)
    let lip0 = 2.0 * spectral_bound(op, dim);
    let mut lip = lip0;
    let mut x = start.unwrap_or_else(|| vec![1.0 / dim as f64; dim]);
    let mut r = residual(op, &x, target);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(norm_sq(&r));
    }
    let grad = |r: &[f64]| -> Vec<f64> { op.adjoint(r).into_iter().map(|g| 2.0 * g).collect() };
    let mut gx = grad(&r);
    for it in 1..=opts.max_iter {
        let ry = residual(op, &y, target);
        let mut x_new = step(&y, &grad(&ry), lip);
        // lip |y - x_new| is the gradient mapping at y; cheap convergence hint
        let hint = lip * y.iter().zip(&x_new).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let (mut delta, mut noise, mut ad) = change(op, &x, &x_new, &r);
        if delta > noise {
            t = 1.0;
            loop {
                x_new = step(&x, &gx, lip);
                (delta, noise, ad) = change(op, &x, &x_new, &r);
                if delta <= noise || lip >= 16.0 * lip0 {
                    break;
                }
                lip *= 2.0;
            }
            if delta > noise {
                x_new = x.clone();
                ad.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = x_new;
        t = t_next;
        if it % 64 == 0 {
            r = residual(op, &x, target);
        } else {
            r.iter_mut().zip(&ad).for_each(|(ri, di)| *ri += di);
        }
        if opts.record_trace {
            trace.push(norm_sq(&r));
        }
        gx = grad(&r);
        if hint <= opts.tol * 10.0 || it % 16 == 0 {
            r = residual(op, &x, target);
            gx = grad(&r);
            // gradient-mapping norm at x, measured at the spectral estimate so
            // that a backtracked step size does not change the stopping rule
            let px = step(&x, &gx, lip0);
            let gm = lip0 * x.iter().zip(&px).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if gm <= opts.tol {
                return Solution { x, iterations: it, converged: true, trace };
            }
        }
    }
    Solution { x, iterations: opts.max_iter, converged: false, trace }
}

/// Sums over supersets: `out[c] = sum of x[t] for t containing c`.
fn superset_sums(x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    let mut bit = 1;
    while bit < out.len() {
        for c in 0..out.len() {
            if c & bit == 0 {
                out[c] += out[c | bit];
            }
        }
        bit <<= 1;
    }
    out
}

/// Cholesky factor of the Gram matrix of the up-set indicators `p_c`
/// (`p_c[t] = [t contains c]`) for the patterns in `set`. Entries are exact:
/// `<p_c, p_d> = 2^(k - |c or d|)`. `cols[j]` holds column `j` of the upper
/// factor `R` with `K = R^T R`.
struct Gram {
    k: usize,
    set: Vec<usize>,
    cols: Vec<Vec<f64>>,
}

impl Gram {
    fn entry(&self, c: usize, d: usize) -> f64 {
        (1u64 << (self.k - (c | d).count_ones() as usize)) as f64
    }

    /// Appends pattern `c`; refuses when the new pivot is lost to rounding.
    fn push(&mut self, c: usize) -> bool {
        let mut y: Vec<f64> = self.set.iter().map(|&d| self.entry(c, d)).collect();
        for j in 0..y.len() {
            let col = &self.cols[j];
            let dot: f64 = col[..j].iter().zip(&y[..j]).map(|(a, b)| a * b).sum();
            y[j] = (y[j] - dot) / col[j];
        }
        let pivot = self.entry(c, c) - norm_sq(&y);
        if pivot <= 1e-13 * self.entry(c, c) {
            return false;
        }
        y.push(pivot.sqrt());
        self.cols.push(y);
        self.set.push(c);
        true
    }

    /// Drops position `j` and restores the triangle with Givens rotations.
    fn remove(&mut self, j: usize) {
        self.set.remove(j);
        self.cols.remove(j);
        for i in j..self.cols.len() {
            let (a, b) = (self.cols[i][i], self.cols[i][i + 1]);
            let r = a.hypot(b);
            let (cs, sn) = (a / r, b / r);
            for col in &mut self.cols[i..] {
                let (x, y) = (col[i], col[i + 1]);
                col[i] = cs * x + sn * y;
                col[i + 1] = cs * y - sn * x;
            }
            self.cols[i].truncate(i + 1);
        }
    }

    fn solve_factored(&self, rhs: &[f64]) -> Vec<f64> {
        let m = rhs.len();
        let mut y = rhs.to_vec();
        for j in 0..m {
            let col = &self.cols[j];
            let dot: f64 = col[..j].iter().zip(&y[..j]).map(|(a, b)| a * b).sum();
            y[j] = (y[j] - dot) / col[j];
        }
        for j in (0..m).rev() {
            y[j] /= self.cols[j][j];
            let yj = y[j];
            for (yi, r) in y[..j].iter_mut().zip(&self.cols[j][..j]) {
                *yi -= r * yj;
            }
        }
        y
    }

    /// Solves `K x = rhs` with two rounds of refinement against the exact entries.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.solve_factored(rhs);
        for _ in 0..2 {
            let res: Vec<f64> = self
                .set
                .iter()
                .zip(rhs)
                .map(|(&c, r)| r - self.set.iter().zip(&x).map(|(&d, xd)| self.entry(c, d) * xd).sum::<f64>())
                .collect();
            let dx = self.solve_factored(&res);
            x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
        }
        x
    }
}

/// Minimum-norm-point active set method for `min |Z b - g0|^2` over the
/// simplex, where `Z` sums over subsets. Each major step adds the pattern
/// with the most negative gradient; minor steps move toward the affine
/// minimizer on the current support and drop patterns that reach zero.
/// Returns the coefficients and the number of affine solves used.
fn active_set(k: usize, g0: &[f64], budget: usize, trace: &mut Option<&mut Vec<f64>>) -> (Vec<f64>, usize) {
    let n = 1usize << k;
    let h = superset_sums(g0);
    let mut gram = Gram { k, set: vec![], cols: vec![] };
    let start = (0..n)
        .min_by(|&c, &d| {
            let cost = |c: usize| gram.entry(c, c) - 2.0 * h[c];
            cost(c).total_cmp(&cost(d))
        })
        .expect("lattice is non-empty");
    gram.push(start);
    let mut lambda = vec![1.0];
    let scatter = |set: &[usize], lambda: &[f64]| {
        let mut b = vec![0.0; n];
        for (&c, &l) in set.iter().zip(lambda) {
            b[c] = l;
        }
        b
    };
    let mut best = (scatter(&gram.set, &lambda), f64::INFINITY);
    let mut steps = 0;
    loop {
        let b = scatter(&gram.set, &lambda);
        let mut r = b.clone();
        zeta_in_place(&mut r);
        r.iter_mut().zip(g0).for_each(|(x, g)| *x -= g);
        let obj = norm_sq(&r);
        if obj >= best.1 {
            break;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(obj);
        }
        best = (b, obj);
        let s = superset_sums(&r);
        let (entering, s_min) =
            s.iter().copied().enumerate().min_by(|x, y| x.1.total_cmp(&y.1)).expect("lattice is non-empty");
        let gap: f64 = gram.set.iter().zip(&lambda).map(|(&c, l)| l * s[c]).sum::<f64>() - s_min;
        if gap <= 1e-15 * n as f64 || steps >= budget || gram.set.contains(&entering) || !gram.push(entering) {
            break;
        }
        lambda.push(0.0);
        while steps < budget {
            steps += 1;
            let hs: Vec<f64> = gram.set.iter().map(|&c| h[c]).collect();
            let u = gram.solve(&hs);
            let w = gram.solve(&vec![1.0; hs.len()]);
            let mu = (u.iter().sum::<f64>() - 1.0) / w.iter().sum::<f64>();
            let alpha: Vec<f64> = u.iter().zip(&w).map(|(u, w)| u - mu * w).collect();
            if alpha.iter().all(|&a| a > 0.0) {
                lambda = alpha;
                break;
            }
            let (blocking, theta) = lambda
                .iter()
                .zip(&alpha)
                .enumerate()
                .filter(|(_, (_, &a))| a <= 0.0)
                .map(|(i, (&l, &a))| (i, l / (l - a)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("some coefficient is non-positive");
            lambda.iter_mut().zip(&alpha).for_each(|(l, a)| *l += theta * (a - *l));
            lambda[blocking] = 0.0;
            for i in (0..lambda.len()).rev() {
                if lambda[i] <= 0.0 {
                    lambda.remove(i);
                    gram.remove(i);
                }
            }
        }
    }
    (best.0, steps)
}

/// Projection of one table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub a_star: ActivationTable,
    pub b_star: LatticeVector,
    /// `|a - a_star|^2`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl ProjectionResult {
    /// Largest entrywise change made to the table.
    pub fn max_entry_delta(&self, original: &ActivationTable) -> f64 {
        self.a_star.values().max_abs_diff(original.values())
    }
}

fn table_from_image(image: Vec<f64>) -> ActivationTable {
    let mut a: Vec<f64> = image.into_iter().map(|x| x.clamp(0.0, 1.0)).collect();
    a[0] = 0.0;
    ActivationTable::new(a).expect("clamped image is a valid table")
}

/// Nearest coverage table to `a`. Tables that already certify are returned unchanged.
pub fn project_vertex(a: &ActivationTable, opts: &SolverOptions) -> Result<ProjectionResult> {
    let k = a.k();
    if k > MAX_PROJECT_PARENTS {
        return Err(Error::ParentCount(k, MAX_PROJECT_PARENTS));
    }
    let cert = certify_vertex(a, DEFAULT_FEAS_TOL)?;
    if let Some(b) = cert.b {
        return Ok(ProjectionResult {
            a_star: a.clone(),
            b_star: b,
            objective: 0.0,
            iterations: 0,
            converged: true,
            trace: if opts.record_trace { vec![0.0] } else { vec![] },
        });
    }
    // in subset-sum form the table is `1 - g[complement]`, so `|M b - a|` equals
    // `|Z b - g0|` on the simplex
    let full = (1usize << k) - 1;
    let g0: Vec<f64> = (0..=full).map(|t| 1.0 - a.get(full ^ t)).collect();
    let mut trace = Vec::new();
    let (start, steps) = active_set(k, &g0, opts.max_iter, &mut opts.record_trace.then_some(&mut trace));
    let polish = SolverOptions { max_iter: opts.max_iter - steps, ..*opts };
    let mut sol = solve(&Connection { k }, a.as_slice(), &polish, Some(start));
    sol.iterations += steps;
    trace.append(&mut sol.trace);
    sol.trace = trace;
    let a_star = table_from_image(apply_connection_in(&sol.x));
    let objective = a_star
        .as_slice()
        .iter()
        .zip(a.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(ProjectionResult {
        a_star,
        b_star: LatticeVector::new(sol.x)?,
        objective,
        iterations: sol.iterations,
        converged: sol.converged,
        trace: sol.trace,
    })
}

/// Network after per-vertex projection.
#[derive(Debug, Clone)]
pub struct ProjectedNetwork {
    pub network: Network,
    pub results: Vec<ProjectionResult>,
    /// Some vertex hit `max_iter`; its table is the best iterate found.
    pub partial: bool,
}

/// Projects every vertex independently. Vertices that already certify keep
/// their original model untouched.
pub fn project_model(net: &Network, opts: &SolverOptions, workers: usize) -> Result<ProjectedNetwork> {
    let results = map_ordered(net.tables(), workers, |t| project_vertex(t, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut network = net.clone();
    for (v, r) in results.iter().enumerate() {
        if r.iterations > 0 {
            network = network.with_table(v, r.a_star.clone())?;
        }
    }
    let partial = results.iter().any(|r| !r.converged);
    Ok(ProjectedNetwork { network, results, partial })
}

/// Which connection patterns the per-type coefficient vectors may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// One-parent patterns only, plus a shared slack coordinate on the empty pattern.
    Singletons,
    /// Every pattern; the empty patterns absorb the slack.
    AllPatterns,
}

/// Joint projection of several per-type tables.
#[derive(Debug, Clone, Serialize)]
pub struct MultiProjection {
    /// Per type, a full-length coefficient vector (zero off the support; the
    /// slack is reported separately under singleton support).
    pub b: Vec<LatticeVector>,
    pub slack: f64,
    pub a_star: Vec<ActivationTable>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projects `tables[n]` (the activation probability by type `n` as a function
/// of which parents carry type `n`) onto coverage tables whose coefficient
/// masses, summed over all types, total one.
pub fn project_multi(tables: &[ActivationTable], opts: &SolverOptions, support: Support) -> Result<MultiProjection> {
    let first = tables.first().ok_or_else(|| Error::Invalid("need at least one table".into()))?;
    let k = first.k();
    if k > MAX_PROJECT_PARENTS {
        return Err(Error::ParentCount(k, MAX_PROJECT_PARENTS));
    }
    if let Some(t) = tables.iter().find(|t| t.k() != k) {
        return Err(Error::LengthMismatch { k, expected: 1 << k, found: t.as_slice().len() });
    }
    let n_types = tables.len();
    let op = Stacked { k, n_types, support };
    let target: Vec<f64> = tables.iter().flat_map(|t| t.as_slice().iter().copied()).collect();
    let dim = op.dim();
    let sol = solve(&op, &target, opts, None);

    let n = 1usize << k;
    let image = op.apply(&sol.x);
    let a_star: Vec<ActivationTable> = image.chunks(n).map(|c| table_from_image(c.to_vec())).collect();
    let objective = a_star
        .iter()
        .zip(tables)
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q) * (p - q)))
        .sum();
    let (b, slack) = match support {
        Support::Singletons => {
            let b = (0..n_types)
                .map(|t| {
                    let mut full = LatticeVector::zeros(k);
                    for i in 0..k {
                        full[1 << i] = sol.x[t * k + i];
                    }
                    full
                })
                .collect();
            (b, sol.x[dim - 1])
        }
        Support::AllPatterns => {
            let b = sol
                .x
                .chunks(n)
                .map(|c| LatticeVector::new(c.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            (b, 0.0)
        }
    };
    Ok(MultiProjection { b, slack, a_star, objective, iterations: sol.iterations, converged: sol.converged })
}
