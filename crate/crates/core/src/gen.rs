//! Random instances for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::certify::random_monotone_table;
use crate::lattice::{apply_connection, LatticeVector};
use crate::model::{ActivationTable, LoadOptions, ModelSpec, Network};

/// Model family drawn for a vertex with parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Ic,
    Lt,
    /// Table `Mb` for a random point `b` of the simplex.
    Coverage,
    /// Random monotone table; usually not a coverage table.
    Monotone,
    /// Fires only when every parent is active.
    And,
}

/// Random point of the probability simplex of dimension `len`. Each
/// coordinate is dropped with probability `sparsity` (at least one survives).
pub fn random_simplex_point<R: Rng>(len: usize, sparsity: f64, rng: &mut R) -> Vec<f64> {
    let keep = rng.gen_range(0..len);
    let mut x: Vec<f64> = (0..len)
        .map(|i| if i != keep && rng.gen::<f64>() < sparsity { 0.0 } else { -(1.0 - rng.gen::<f64>()).ln() })
        .collect();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

/// Coverage table with no spontaneous activation, returned with its coefficients.
pub fn random_coverage_table<R: Rng>(k: usize, rng: &mut R) -> (ActivationTable, LatticeVector) {
    let sparsity = rng.gen_range(0.0..0.8);
    let b = LatticeVector::new(random_simplex_point(1 << k, sparsity, rng)).expect("power-of-two length");
    let a = apply_connection(&b, k).expect("k within range");
    let a = ActivationTable::new(a.into_vec().into_iter().map(|x| x.clamp(0.0, 1.0)).collect())
        .expect("entries clamped to [0, 1]");
    (a, b)
}

/// Nonnegative weights with total at most 1: the first `len` coordinates of a
/// random simplex point of dimension `len + 1`.
pub fn random_weights<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut w = random_simplex_point(len + 1, 0.0, rng);
    w.pop();
    w
}

fn and_table(k: usize) -> Vec<f64> {
    let mut a = vec![0.0; 1 << k];
    a[(1 << k) - 1] = 1.0;
    a
}

/// Parent lists of a random DAG on `n` vertices in index order. Each earlier
/// vertex becomes a parent with probability `edge_prob`, up to `max_parents`.
pub fn random_parents<R: Rng>(n: usize, max_parents: usize, edge_prob: f64, rng: &mut R) -> Vec<Vec<usize>> {
    (0..n)
        .map(|v| {
            let mut earlier: Vec<usize> = (0..v).collect();
            earlier.shuffle(rng);
            let mut ps: Vec<usize> =
                earlier.into_iter().filter(|_| rng.gen::<f64>() < edge_prob).take(max_parents).collect();
            ps.sort_unstable();
            ps
        })
        .collect()
}

pub fn vertex_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// Random DAG whose vertices with parents draw a family uniformly from `kinds`.
pub fn random_network<R: Rng>(
    n: usize,
    max_parents: usize,
    edge_prob: f64,
    kinds: &[VertexKind],
    rng: &mut R,
) -> Network {
    let parents = random_parents(n, max_parents, edge_prob, rng);
    let specs = parents
        .iter()
        .map(|ps| {
            let k = ps.len();
            if k == 0 {
                return ModelSpec::Table { a: vec![0.0], spontaneous: false };
            }
            match *kinds.choose(rng).expect("at least one kind") {
                VertexKind::Ic => ModelSpec::Ic { p: (0..k).map(|_| rng.gen()).collect() },
                VertexKind::Lt => ModelSpec::Lt { w: random_weights(k, rng) },
                VertexKind::Coverage => {
                    ModelSpec::Table { a: random_coverage_table(k, rng).0.as_slice().to_vec(), spontaneous: false }
                }
                VertexKind::Monotone => {
                    ModelSpec::Table { a: random_monotone_table(k, rng).as_slice().to_vec(), spontaneous: false }
                }
                VertexKind::And => ModelSpec::Table { a: and_table(k), spontaneous: false },
            }
        })
        .collect();
    Network::new(vertex_names(n), parents, specs, LoadOptions::default()).expect("generated network is valid")
}

/// Random multi-type DAG: every vertex with parents gets plmmi weights whose
/// total over parents and types is at most 1.
pub fn random_plmmi_network<R: Rng>(
    n: usize,
    n_types: usize,
    max_parents: usize,
    edge_prob: f64,
    rng: &mut R,
) -> Network {
    let parents = random_parents(n, max_parents, edge_prob, rng);
    let specs = parents
        .iter()
        .map(|ps| {
            if ps.is_empty() {
                return ModelSpec::Table { a: vec![0.0], spontaneous: false };
            }
            let flat = random_weights(ps.len() * n_types, rng);
            ModelSpec::Plmmi { n_types, w: flat.chunks(n_types).map(<[f64]>::to_vec).collect() }
        })
        .collect();
    Network::new(vertex_names(n), parents, specs, LoadOptions::default()).expect("generated network is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify_model, certify_vertex, DEFAULT_FEAS_TOL};
    use crate::simulate::substream;

    #[test]
    fn simplex_points() {
        let mut rng = substream(1, 0, 0);
        for len in [1, 2, 8, 64] {
            let x = random_simplex_point(len, 0.5, &mut rng);
            assert!(x.iter().all(|&v| v >= 0.0));
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let w = random_weights(5, &mut rng);
        assert!(w.len() == 5 && w.iter().sum::<f64>() <= 1.0);
    }

    #[test]
    fn coverage_tables_certify() {
        let mut rng = substream(2, 0, 0);
        for k in 1..=6 {
            let (a, b) = random_coverage_table(k, &mut rng);
            let cert = certify_vertex(&a, DEFAULT_FEAS_TOL).unwrap();
            assert!(cert.feasible);
            assert!(cert.b.unwrap().max_abs_diff(&b) < 1e-10);
        }
    }

    #[test]
    fn networks_are_acyclic_and_bounded() {
        let mut rng = substream(3, 0, 0);
        let all = [VertexKind::Ic, VertexKind::Lt, VertexKind::Coverage, VertexKind::Monotone, VertexKind::And];
        for _ in 0..20 {
            let net = random_network(12, 3, 0.5, &all, &mut rng);
            for v in 0..12 {
                assert!(net.parents(v).len() <= 3);
                assert!(net.parents(v).iter().all(|&u| u < v));
            }
        }
        let certified = random_network(10, 4, 0.6, &[VertexKind::Ic, VertexKind::Lt, VertexKind::Coverage], &mut rng);
        assert!(certify_model(&certified, DEFAULT_FEAS_TOL).unwrap().feasible);
        let multi = random_plmmi_network(6, 2, 3, 0.6, &mut rng);
        assert!(crate::simulate::MultiModel::from_network(&multi).is_ok());
    }
}
