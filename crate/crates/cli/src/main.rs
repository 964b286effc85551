use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use submodiff::certify::{certify_model_with, falsify_equivalence, falsify_grid, DEFAULT_FEAS_TOL};
use submodiff::maximize::{brute_force_opt, greedy_select, Estimator, MAX_BRUTE_FORCE_VERTICES};
use submodiff::model::{load_network_with, LoadOptions, Network};
use submodiff::project::{project_model, SolverOptions};
use submodiff::report;
use submodiff::simulate::{
    estimate_multi_spread, estimate_spread, exact_cltm_distribution, exact_distribution, exact_multi_distribution,
    total_variation, type_spread, MultiModel, TieRule, MAX_EXACT_MULTI_TYPES, MAX_EXACT_MULTI_VERTICES,
};

/// Certify, repair, simulate and optimize acyclic diffusion models.
#[derive(Parser, Debug)]
#[command(name = "submodiff", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sampling, certification and projection.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Require plmmi weights to sum to exactly 1 at every vertex.
    #[arg(long, global = true)]
    strict_normalization: bool,
    /// Add wall-clock time under "metadata" (makes reports non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide, vertex by vertex, whether the model has a coverage representation.
    Certify {
        network: PathBuf,
        /// Feasibility tolerance on negative coefficients.
        #[arg(long, default_value_t = DEFAULT_FEAS_TOL)]
        tol: f64,
        /// Exit with status 1 when some vertex does not certify.
        #[arg(long)]
        require_feasible: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Replace every non-certifying table with its nearest coverage table.
    Project {
        network: PathBuf,
        /// Stopping tolerance on the gradient-mapping norm.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iter: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimate of the expected spread.
    Simulate {
        network: PathBuf,
        #[command(flatten)]
        seeds: Seeds,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Exact outcome distribution and expected spread.
    Spread {
        network: PathBuf,
        #[command(flatten)]
        seeds: Seeds,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy seed selection.
    Greedy {
        network: PathBuf,
        #[arg(long)]
        budget: usize,
        /// Evaluate spreads by Monte Carlo with this many runs (exact when absent).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Re-evaluate every candidate each round instead of using stale bounds.
        #[arg(long)]
        naive: bool,
        /// Compare with the exhaustive optimum (small networks only).
        #[arg(long)]
        verify_opt: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Multi-type propagation with per-type seed sets.
    Multi {
        network: PathBuf,
        /// Seeds of one type as `N:list`; also accepted as `--seeds-type-N list`.
        #[arg(long = "seeds-type", value_name = "N:LIST")]
        seeds_type: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Type attribution of the threshold model: lowest-type-index or highest-weight.
        #[arg(long, default_value = "lowest-type-index")]
        tie_rule: String,
        #[command(flatten)]
        common: Common,
    },
    /// Search for tables that pass the direct per-vertex check but do not certify.
    Falsify {
        /// Parent count of the probed tables.
        #[arg(long, default_value_t = 3)]
        parents: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Sweep a regular grid with this many steps per axis instead of sampling.
        #[arg(long)]
        grid_steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Seeds {
    /// Comma-separated seed vertices; may be repeated.
    #[arg(long = "seeds", value_delimiter = ',')]
    seeds: Vec<String>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Bad arguments or network file: exit 2.
    Input(anyhow::Error),
    /// The run completed but a demanded property failed: exit 1. The report is still written.
    Domain(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

struct Outcome {
    report: Value,
    summary: String,
    /// Domain failure to signal after writing the report.
    failure: Option<String>,
}

impl Outcome {
    fn ok(report: Value, summary: String) -> Self {
        Outcome { report, summary, failure: None }
    }
}

/// Rewrites `--seeds-type-N X` and `--seeds-type-N=X` to `--seeds-type N:X`.
fn expand_typed_seed_flags(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut args = args.into_iter();
    while let Some(arg) = args.next() {
        let Some(rest) = arg.strip_prefix("--seeds-type-") else {
            out.push(arg);
            continue;
        };
        let (n, inline) = match rest.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (rest.to_string(), None),
        };
        let value = inline.or_else(|| args.next()).unwrap_or_default();
        out.push("--seeds-type".into());
        out.push(format!("{n}:{value}"));
    }
    out
}

fn load(path: &PathBuf, common: &Common) -> Result<Network, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let net = load_network_with(&text, LoadOptions { strict_normalization: common.strict_normalization })
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(net)
}

fn seed_indices(net: &Network, names: &[String]) -> Result<Vec<usize>, Failure> {
    let names: Vec<&str> = names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    Ok(net.indices_of(&names)?)
}

fn parse_typed_seeds(net: &Network, specs: &[String], n_types: usize) -> Result<Vec<Vec<usize>>, Failure> {
    let mut seeds = vec![Vec::new(); n_types];
    for spec in specs {
        let (n, list) = spec.split_once(':').ok_or_else(|| anyhow!("expected N:LIST, found {spec:?}"))?;
        let n: usize = n.parse().with_context(|| format!("bad type index in {spec:?}"))?;
        if n == 0 || n > n_types {
            return Err(anyhow!("type {n} out of range 1..={n_types}").into());
        }
        let names: Vec<String> = list.split(',').map(str::to_string).collect();
        seeds[n - 1].extend(seed_indices(net, &names)?);
    }
    Ok(seeds)
}

fn run(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::Certify { network, tol, require_feasible, common } => {
            let net = load(network, common)?;
            let cert = certify_model_with(&net, *tol, common.workers)?;
            let infeasible = cert.infeasible();
            let summary = format!(
                "{}: {} of {} vertices certify",
                if cert.feasible { "feasible" } else { "infeasible" },
                net.vertex_count() - infeasible.len(),
                net.vertex_count()
            );
            let report = report::document(
                "certify",
                json!({"network": network, "require_feasible": require_feasible, "workers": common.workers}),
                json!({"feas_tol": tol}),
                report::certificate(&net, &cert),
            );
            let failure = (*require_feasible && !cert.feasible)
                .then(|| format!("infeasible vertices: {:?}", report::vertex_names(&net, &infeasible)));
            Ok(Outcome { report, summary, failure })
        }
        Command::Project { network, tol, max_iter, common } => {
            let net = load(network, common)?;
            let opts = SolverOptions { tol: *tol, max_iter: *max_iter, record_trace: false };
            let projected = project_model(&net, &opts, common.workers)?;
            let replaced = projected.results.iter().filter(|r| r.iterations > 0).count();
            let total: f64 = projected.results.iter().map(|r| r.objective).sum();
            let summary = format!("replaced {replaced} of {} vertices, total squared distance {total:.6e}", net.vertex_count());
            let report = report::document(
                "project",
                json!({"network": network, "max_iter": max_iter, "workers": common.workers}),
                json!({"solver_tol": tol, "feas_tol": DEFAULT_FEAS_TOL}),
                report::projection(&net, &projected, &opts),
            );
            let failure = projected.partial.then(|| format!("projection did not converge within {max_iter} iterations"));
            Ok(Outcome { report, summary, failure })
        }
        Command::Simulate { network, seeds, samples, rng_seed, common } => {
            let net = load(network, common)?;
            let seeds = seed_indices(&net, &seeds.seeds)?;
            let est = estimate_spread(&net, &seeds, *samples, *rng_seed, common.workers)?;
            let summary = format!("spread {:.6} ± {:.6} over {} runs", est.mean, est.stderr, est.samples);
            let report = report::document(
                "simulate",
                json!({"network": network, "samples": samples, "rng_seed": rng_seed, "workers": common.workers}),
                json!({}),
                report::simulation(&net, &seeds, &est),
            );
            Ok(Outcome::ok(report, summary))
        }
        Command::Spread { network, seeds, common } => {
            let net = load(network, common)?;
            let seeds = seed_indices(&net, &seeds.seeds)?;
            let dist = exact_distribution(&net, &seeds)?;
            let body = report::exact(&net, &seeds, &dist);
            let summary = format!("exact spread {} over {} outcomes", body["spread"], dist.len());
            let report = report::document(
                "spread",
                json!({"network": network}),
                json!({"report_floor": report::REPORT_FLOOR}),
                body,
            );
            Ok(Outcome::ok(report, summary))
        }
        Command::Greedy { network, budget, samples, rng_seed, naive, verify_opt, common } => {
            let net = load(network, common)?;
            let estimator = match samples {
                Some(samples) => Estimator::MonteCarlo { samples: *samples, rng_seed: *rng_seed, workers: common.workers },
                None => Estimator::Exact,
            };
            let trace = greedy_select(&net, *budget, &estimator, !naive)?;
            let certified = certify_model_with(&net, DEFAULT_FEAS_TOL, common.workers)?.feasible;
            let opt = if *verify_opt {
                if net.vertex_count() > MAX_BRUTE_FORCE_VERTICES {
                    return Err(anyhow!("--verify-opt needs at most {MAX_BRUTE_FORCE_VERTICES} vertices").into());
                }
                Some(brute_force_opt(&net, *budget)?)
            } else {
                None
            };
            let summary = format!(
                "chose {:?}, spread {:.6}, {} evaluations",
                report::vertex_names(&net, &trace.chosen),
                trace.spread,
                trace.evaluations
            );
            let report = report::document(
                "greedy",
                json!({"network": network, "budget": budget, "lazy": !naive, "verify_opt": verify_opt}),
                json!({"feas_tol": DEFAULT_FEAS_TOL}),
                report::greedy(&net, &trace, &estimator, certified, opt.as_ref().map(|(s, v)| (s.as_slice(), *v))),
            );
            Ok(Outcome::ok(report, summary))
        }
        Command::Multi { network, seeds_type, samples, rng_seed, tie_rule, common } => {
            let net = load(network, common)?;
            let rule: TieRule = tie_rule.parse()?;
            let model = MultiModel::from_network(&net)?;
            let seeds = parse_typed_seeds(&net, seeds_type, model.n_types())?;
            let est = estimate_multi_spread(&model, &seeds, *samples, *rng_seed, common.workers)?;
            let mut body = report::multi_estimate(&net, &seeds, &est);
            let small = net.vertex_count() <= MAX_EXACT_MULTI_VERTICES && model.n_types() <= MAX_EXACT_MULTI_TYPES;
            if small {
                let plmmi = exact_multi_distribution(&model, &seeds)?;
                let cltm = exact_cltm_distribution(&model, &seeds, rule)?;
                let spreads: Vec<f64> = (1..=model.n_types()).map(|n| type_spread(&plmmi, n as u8)).collect();
                body["exact"] = json!({
                    "spread_by_type": spreads,
                    "distribution": report::multi_distribution(&plmmi),
                    "threshold_model_distribution": report::multi_distribution(&cltm),
                    "total_variation_vs_threshold_model": total_variation(&plmmi, &cltm),
                });
            }
            let summary = format!("per-type spread {:?} over {} runs", est.mean, est.samples);
            let report = report::document(
                "multi",
                json!({"network": network, "samples": samples, "rng_seed": rng_seed, "workers": common.workers, "tie_rule": rule}),
                json!({}),
                body,
            );
            Ok(Outcome::ok(report, summary))
        }
        Command::Falsify { parents, samples, rng_seed, grid_steps, common: _ } => {
            let (result, config) = match grid_steps {
                Some(steps) => (falsify_grid(*parents, *steps)?, json!({"parents": parents, "grid_steps": steps})),
                None => (
                    falsify_equivalence(*parents, *samples, *rng_seed)?,
                    json!({"parents": parents, "samples": samples, "rng_seed": rng_seed}),
                ),
            };
            let summary = format!(
                "{} tables, {} pass the direct check, {} do not certify",
                result.tested,
                result.passing_direct_check,
                result.divergences.len()
            );
            let report = report::document("falsify", config, json!({"feas_tol": DEFAULT_FEAS_TOL}), report::falsification(&result));
            Ok(Outcome::ok(report, summary))
        }
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Certify { common, .. }
        | Command::Project { common, .. }
        | Command::Simulate { common, .. }
        | Command::Spread { common, .. }
        | Command::Greedy { common, .. }
        | Command::Multi { common, .. }
        | Command::Falsify { common, .. } => common,
    }
}

fn emit(report: &Value, out: Option<&PathBuf>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse_from(expand_typed_seed_flags(std::env::args()));
    let common = common(&cli.command).clone();
    let started = Instant::now();
    let result = run(&cli.command).and_then(|mut outcome| {
        if common.timing {
            outcome.report["metadata"] = json!({"wall_clock_seconds": started.elapsed().as_secs_f64()});
        }
        emit(&outcome.report, common.out.as_ref())?;
        eprintln!("{}", outcome.summary);
        outcome.failure.map_or(Ok(()), |msg| Err(Failure::Domain(msg)))
    });
    info!("finished in {:.3}s", started.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
