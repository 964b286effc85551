//! Browser bindings. Every entry point takes and returns JSON text so the page
//! can show the same reports the command-line tool writes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use submodiff::certify::{certify_model, DEFAULT_FEAS_TOL};
use submodiff::gen::{random_network, VertexKind};
use submodiff::maximize::{brute_force_opt, greedy_select, Estimator, MAX_BRUTE_FORCE_VERTICES};
use submodiff::model::{load_network, Network};
use submodiff::project::{project_model, SolverOptions};
use submodiff::report;
use submodiff::simulate::MAX_EXACT_VERTICES;
use wasm_bindgen::prelude::*;

/// Largest random network the page offers.
pub const MAX_EXAMPLE_VERTICES: usize = 20;

fn load(network: &str) -> Result<Network, String> {
    load_network(network).map_err(|e| e.to_string())
}

fn render(doc: Value) -> String {
    serde_json::to_string_pretty(&doc).expect("reports serialize")
}

/// A random network mixing certifying families (IC, LT) with ones that may not
/// (arbitrary monotone tables, AND gates).
pub fn example_json(seed: u64, vertices: usize) -> Result<String, String> {
    if !(2..=MAX_EXAMPLE_VERTICES).contains(&vertices) {
        return Err(format!("vertex count must be between 2 and {MAX_EXAMPLE_VERTICES}"));
    }
    let kinds = [VertexKind::Ic, VertexKind::Lt, VertexKind::Monotone, VertexKind::And];
    let net = random_network(vertices, 3, 0.3, &kinds, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(render(net.to_document()))
}

pub fn certify_json(network: &str) -> Result<String, String> {
    let net = load(network)?;
    let cert = certify_model(&net, DEFAULT_FEAS_TOL).map_err(|e| e.to_string())?;
    Ok(render(report::document(
        "certify",
        json!({}),
        json!({"feas_tol": DEFAULT_FEAS_TOL}),
        report::certificate(&net, &cert),
    )))
}

pub fn project_json(network: &str, tol: f64) -> Result<String, String> {
    let net = load(network)?;
    let opts = SolverOptions { tol, ..SolverOptions::default() };
    let projected = project_model(&net, &opts, 1).map_err(|e| e.to_string())?;
    Ok(render(report::document(
        "project",
        json!({"max_iter": opts.max_iter}),
        json!({"solver_tol": tol, "feas_tol": DEFAULT_FEAS_TOL}),
        report::projection(&net, &projected, &opts),
    )))
}

/// Greedy seed selection. With `samples == 0` spreads are computed exactly and
/// small networks are also solved by exhaustive search for comparison.
pub fn greedy_json(network: &str, budget: usize, samples: usize, rng_seed: u64) -> Result<String, String> {
    let net = load(network)?;
    let estimator = if samples == 0 {
        if net.vertex_count() > MAX_EXACT_VERTICES {
            return Err(format!("exact spreads need at most {MAX_EXACT_VERTICES} vertices; set a sample count"));
        }
        Estimator::Exact
    } else {
        Estimator::MonteCarlo { samples, rng_seed, workers: 1 }
    };
    let trace = greedy_select(&net, budget, &estimator, true).map_err(|e| e.to_string())?;
    let certified = certify_model(&net, DEFAULT_FEAS_TOL).map_err(|e| e.to_string())?.feasible;
    let opt = if samples == 0 && net.vertex_count() <= MAX_BRUTE_FORCE_VERTICES {
        Some(brute_force_opt(&net, budget).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let opt = opt.as_ref().map(|(seeds, value)| (seeds.as_slice(), *value));
    Ok(render(report::document(
        "greedy",
        json!({"budget": budget}),
        json!({}),
        report::greedy(&net, &trace, &estimator, certified, opt),
    )))
}

#[wasm_bindgen]
pub fn example(seed: u64, vertices: usize) -> Result<String, JsError> {
    example_json(seed, vertices).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn certify(network: &str) -> Result<String, JsError> {
    certify_json(network).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn project(network: &str, tol: f64) -> Result<String, JsError> {
    project_json(network, tol).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn greedy(network: &str, budget: usize, samples: usize, rng_seed: u64) -> Result<String, JsError> {
    greedy_json(network, budget, samples, rng_seed).map_err(|e| JsError::new(&e))
}
