//! JSON report documents shared by the command-line tool and the web demo.
//!
//! Bitmask positions never leave this module: parent states and connection
//! patterns are written as lists of vertex names.

use serde_json::{json, Map, Value};

use crate::certify::{CoverageCertificate, FalsificationReport, ModelCertificate};
use crate::maximize::{Estimator, GreedyTrace};
use crate::model::Network;
use crate::project::{ProjectedNetwork, SolverOptions};
use crate::simulate::{Distribution, MultiDistribution, MultiSpreadEstimate, SpreadEstimate};

pub const TOOL_NAME: &str = "submodiff";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Mass below which coefficients and outcomes are left out of reports.
pub const REPORT_FLOOR: f64 = 1e-15;

/// Top-level document: tool identity, command, config echo and tolerances,
/// followed by the command's result fields.
pub fn document(command: &str, config: Value, tolerances: Value, result: Value) -> Value {
    let mut doc = Map::new();
    doc.insert("tool".into(), json!({"name": TOOL_NAME, "version": TOOL_VERSION}));
    doc.insert("command".into(), json!(command));
    doc.insert("config".into(), config);
    doc.insert("tolerances".into(), tolerances);
    if let Value::Object(fields) = result {
        doc.extend(fields);
    }
    Value::Object(doc)
}

/// Names of the parents of `v` selected by `bits`.
pub fn parent_names(net: &Network, v: usize, bits: u32) -> Vec<&str> {
    net.parents(v)
        .iter()
        .enumerate()
        .filter(|(i, _)| bits >> i & 1 == 1)
        .map(|(_, &u)| net.name(u))
        .collect()
}

pub fn vertex_names<'a>(net: &'a Network, vertices: &[usize]) -> Vec<&'a str> {
    vertices.iter().map(|&v| net.name(v)).collect()
}

fn certificate_entry(net: &Network, v: usize, cert: &CoverageCertificate) -> Value {
    let mut entry = json!({
        "vertex": net.name(v),
        "parents": parent_names(net, v, u32::MAX),
        "feasible": cert.feasible,
        "residual": cert.residual,
    });
    if let Some(b) = &cert.b {
        let coefficients: Vec<Value> = b
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > REPORT_FLOOR)
            .map(|(c, &m)| json!({"pattern": parent_names(net, v, c as u32), "mass": m}))
            .collect();
        entry["coefficients"] = json!(coefficients);
    }
    if let Some(w) = &cert.witness {
        entry["witness_kind"] = serde_json::to_value(w).expect("serializable")["kind"].clone();
        entry["witness_pattern"] = json!(parent_names(net, v, w.pattern().0));
        entry["witness_value"] = json!(w.value());
    }
    entry
}

pub fn certificate(net: &Network, cert: &ModelCertificate) -> Value {
    let vertices: Vec<Value> =
        cert.vertices.iter().enumerate().map(|(v, c)| certificate_entry(net, v, c)).collect();
    json!({
        "feasible": cert.feasible,
        "infeasible_vertices": vertex_names(net, &cert.infeasible()),
        "vertices": vertices,
    })
}

pub fn projection(net: &Network, projected: &ProjectedNetwork, opts: &SolverOptions) -> Value {
    let vertices: Vec<Value> = projected
        .results
        .iter()
        .enumerate()
        .map(|(v, r)| {
            let mut entry = json!({
                "vertex": net.name(v),
                "replaced": r.iterations > 0,
                "objective": r.objective,
                "iterations": r.iterations,
                "converged": r.converged,
                "max_entry_delta": r.max_entry_delta(net.table(v)),
            });
            if r.iterations > 0 {
                entry["table"] = json!(r.a_star.as_slice());
            }
            entry
        })
        .collect();
    let total: f64 = projected.results.iter().map(|r| r.objective).sum();
    let max_delta = projected
        .results
        .iter()
        .enumerate()
        .map(|(v, r)| r.max_entry_delta(net.table(v)))
        .fold(0.0, f64::max);
    json!({
        "converged": !projected.partial,
        "tol": opts.tol,
        "max_iter": opts.max_iter,
        "total_objective": total,
        "max_entry_delta": max_delta,
        "vertices": vertices,
        "network": projected.network.to_document(),
    })
}

pub fn simulation(net: &Network, seeds: &[usize], est: &SpreadEstimate) -> Value {
    json!({
        "seeds": vertex_names(net, seeds),
        "samples": est.samples,
        "mean": est.mean,
        "stderr": est.stderr,
        "rng_seed": est.rng_seed,
        "workers": est.workers,
    })
}

fn active_names(net: &Network, mask: u32) -> Vec<&str> {
    (0..net.vertex_count()).filter(|&v| mask >> v & 1 == 1).map(|v| net.name(v)).collect()
}

pub fn exact(net: &Network, seeds: &[usize], dist: &Distribution) -> Value {
    let outcomes: Vec<Value> = dist
        .iter()
        .filter(|(_, &p)| p >= REPORT_FLOOR)
        .map(|(&mask, &p)| json!({"active": active_names(net, mask), "mask": mask, "probability": p}))
        .collect();
    json!({
        "seeds": vertex_names(net, seeds),
        "spread": crate::simulate::spread_of(dist),
        "total_probability": dist.values().sum::<f64>(),
        "outcomes": outcomes,
    })
}

pub fn greedy(net: &Network, trace: &GreedyTrace, estimator: &Estimator, certified: bool, opt: Option<(&[usize], f64)>) -> Value {
    let mut guarantee = json!({"certified": certified});
    if let Some((best, value)) = opt {
        guarantee["opt_seeds"] = json!(vertex_names(net, best));
        guarantee["opt_spread"] = json!(value);
        guarantee["ratio_vs_opt"] = json!(if value > 0.0 { trace.spread / value } else { 1.0 });
    }
    guarantee["statement"] = json!(if certified {
        "every vertex certifies, so the spread is monotone submodular and greedy is within 1 - 1/e of optimal"
    } else {
        "some vertex does not certify; no approximation guarantee is claimed"
    });
    json!({
        "chosen": vertex_names(net, &trace.chosen),
        "marginal_gains": trace.marginal_gains,
        "spread": trace.spread,
        "evaluations": trace.evaluations,
        "pooled_stderr": trace.pooled_stderr,
        "estimator": estimator,
        "guarantee": guarantee,
    })
}

pub fn multi_estimate(net: &Network, seeds: &[Vec<usize>], est: &MultiSpreadEstimate) -> Value {
    let seeds: Vec<Vec<&str>> = seeds.iter().map(|s| vertex_names(net, s)).collect();
    json!({
        "seeds_by_type": seeds,
        "samples": est.samples,
        "rng_seed": est.rng_seed,
        "workers": est.workers,
        "mean_by_type": est.mean,
        "stderr_by_type": est.stderr,
    })
}

/// Label distribution dump; each outcome lists the label of every vertex.
pub fn multi_distribution(dist: &MultiDistribution) -> Value {
    let outcomes: Vec<Value> = dist
        .iter()
        .filter(|(_, &p)| p >= REPORT_FLOOR)
        .map(|(labels, &p)| json!({"labels": labels, "probability": p}))
        .collect();
    json!(outcomes)
}

pub fn falsification(report: &FalsificationReport) -> Value {
    let divergences: Vec<Value> = report
        .divergences
        .iter()
        .map(|d| {
            json!({
                "table": d.table.as_slice(),
                "origin": d.origin,
                "witness_pattern": d.witness.pattern().0,
                "witness_value": d.witness.value(),
            })
        })
        .collect();
    json!({
        "k": report.k,
        "rng_seed": report.rng_seed,
        "tested": report.tested,
        "passing_direct_check": report.passing_direct_check,
        "divergence_count": report.divergences.len(),
        "divergences": divergences,
    })
}
