use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use submodiff::certify::{certify_vertex, DEFAULT_FEAS_TOL};
use submodiff::lattice::{apply_connection_in, mobius_in_place, zeta_in_place};
use submodiff::model::ActivationTable;
use submodiff::project::{project_simplex, project_vertex, SolverOptions};

fn lattice_vector(max_k: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1..=max_k).prop_flat_map(|k| (Just(k), prop::collection::vec(-2.0f64..2.0, 1 << k)))
}

fn simplex_point(max_k: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1..=max_k).prop_flat_map(|k| {
        (Just(k), prop::collection::vec(0.0f64..1.0, 1 << k)).prop_map(|(k, w)| {
            let total: f64 = w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            (k, w.into_iter().map(|x| x / total).collect())
        })
    })
}

proptest! {
    #[test]
    fn mobius_inverts_zeta((_, x) in lattice_vector(8)) {
        let mut y = x.clone();
        zeta_in_place(&mut y);
        mobius_in_place(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn simplex_projection_lands_on_simplex(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
        let p = project_simplex(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // the projection of a simplex point is itself
        let again = project_simplex(&p);
        for (a, b) in p.iter().zip(&again) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixtures_of_coverage_certify((k, b) in simplex_point(6)) {
        let mut a = apply_connection_in(&b);
        a[0] = 0.0;
        let cert = certify_vertex(&ActivationTable::new(a).unwrap(), DEFAULT_FEAS_TOL).unwrap();
        prop_assert!(cert.feasible);
        let recovered = cert.b.unwrap();
        for (c, &mass) in b.iter().enumerate().skip(1) {
            assert_abs_diff_eq!(recovered.as_slice()[c], mass, epsilon = 1e-9 * (1 << k) as f64);
        }
    }

    #[test]
    fn projection_certifies_and_is_idempotent((_, raw) in lattice_vector(7)) {
        let mut a: Vec<f64> = raw.iter().map(|x| x.abs().min(1.0)).collect();
        a[0] = 0.0;
        let opts = SolverOptions::default();
        let r = project_vertex(&ActivationTable::new(a).unwrap(), &opts).unwrap();
        prop_assert!(r.converged);
        prop_assert!(certify_vertex(&r.a_star, 1e-6).unwrap().feasible);
        let again = project_vertex(&r.a_star, &opts).unwrap();
        prop_assert!(again.a_star.values().max_abs_diff(r.a_star.values()) <= 1e-6);
    }
}
