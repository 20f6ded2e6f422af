use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sbcm::estimators::{EpsilonOptions, JointOptions, MuOptions};
use sbcm::experiments::{run_plan, ExperimentPlan, PlanOutput, Scenario};
use sbcm::io::{read_trace_json, write_atomic, write_trace_json, write_trajectory_csv};
use sbcm::likelihood::distances_for;
use sbcm::model::DEFAULT_RHO;
use sbcm::rasch::{analytic_bias, analytic_variance, KappaSequence};
use sbcm::simulator::{simulate_with, StateStorage};
use sbcm::{estimate_epsilon, estimate_joint, estimate_mu, EstimateReport, Existence, SimulationConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NONEXISTENT: u8 = 4;

#[derive(Parser)]
#[command(name = "sbcm", version, about = "Stochastic bounded confidence model: simulate, estimate, experiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its trace.
    Simulate(SimulateArgs),
    /// Estimate epsilon, mu or both from a trace.
    Estimate(EstimateArgs),
    /// Run a battery, surface scan or rho sweep plan.
    Experiment(ExperimentArgs),
    /// Run a surface-scan plan.
    Scan(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON simulation config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Steepness; 60 unless the config sets it.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace JSON output.
    #[arg(long, default_value = "trace.json")]
    out: PathBuf,
    /// Also write the opinion trajectory as CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Keep every `stride`-th time step in the trajectory CSV.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Epsilon,
    Mu,
    Joint,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "epsilon")]
    mode: Mode,
    /// Report JSON output.
    #[arg(long, default_value = "estimate.json")]
    out: PathBuf,
    /// Steepness; defaults to the trace's.
    #[arg(long)]
    rho: Option<f64>,
    /// Known mu for epsilon mode; defaults to the trace's.
    #[arg(long)]
    mu: Option<f64>,
    /// Known epsilon for mu mode; defaults to the trace's.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Score tolerance for epsilon mode.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Master seed; overrides the plan's.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, env = "SBCM_WORKERS")]
    workers: Option<usize>,
    /// `json` prints the summary as JSON instead of a table. CSVs are always written.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<sbcm::Error> for Failure {
    fn from(e: sbcm::Error) -> Self {
        let code = match &e {
            sbcm::Error::Io(_) | sbcm::Error::Csv(_) => EXIT_IO,
            sbcm::Error::Convergence { .. } => EXIT_NONEXISTENT,
            e if e.is_config_error() => EXIT_CONFIG,
            _ => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Experiment(a) => cmd_experiment(a, false),
        Command::Scan(a) => cmd_experiment(a, true),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Fails with an io error unless the directory that will hold `path` exists.
fn check_writable(path: &Path) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_IO,
            message: format!("output directory {} does not exist", dir.display()),
        })
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn simulation_config(a: &SimulateArgs) -> CliResult<SimulationConfig> {
    let mut cfg = match &a.config {
        Some(p) => read_json(p)?,
        None => json!({}),
    };
    let obj = cfg
        .as_object_mut()
        .ok_or_else(|| config_error("simulation config must be a JSON object"))?;
    obj.entry("initial_state").or_insert(json!("uniform"));
    obj.entry("params").or_insert(json!({}));
    if let Some(n) = a.agents {
        obj.insert("num_agents".into(), json!(n));
    }
    if let Some(t) = a.steps {
        obj.insert("num_steps".into(), json!(t));
    }
    if let Some(s) = a.seed {
        obj.insert("seed".into(), json!(s));
    }
    let params = obj["params"]
        .as_object_mut()
        .ok_or_else(|| config_error("`params` must be a JSON object"))?;
    for (key, value) in [("epsilon", a.epsilon), ("mu", a.mu), ("rho", a.rho)] {
        if let Some(v) = value {
            params.insert(key.into(), json!(v));
        }
    }
    params.entry("rho").or_insert(json!(DEFAULT_RHO));
    let config: SimulationConfig =
        serde_json::from_value(cfg).map_err(|e| config_error(format!("simulation config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<u8> {
    let config = simulation_config(&a)?;
    if a.stride == 0 {
        return Err(config_error("--stride must be at least 1"));
    }
    check_writable(&a.out)?;
    if let Some(p) = &a.trajectory {
        check_writable(p)?;
    }
    let storage = if a.trajectory.is_some() {
        StateStorage::Dense
    } else {
        StateStorage::Sparse
    };
    let trace = simulate_with(&config, storage)?;
    write_trace_json(&a.out, &trace)?;
    if let Some(p) = &a.trajectory {
        write_trajectory_csv(p, &trace.trajectory, a.stride)?;
    }
    let m = trace.successes();
    let t = config.num_steps;
    println!("m/T = {m}/{t} = {:.6}", m as f64 / t as f64);
    Ok(0)
}

fn cmd_estimate(a: EstimateArgs) -> CliResult<u8> {
    let doc = read_trace_json(&a.trace).map_err(|e| match e {
        sbcm::Error::Io(err) => Failure {
            code: EXIT_IO,
            message: format!("{}: {err}", a.trace.display()),
        },
        other => config_error(format!("{}: {other}", a.trace.display())),
    })?;
    let (x0, schedule, outcomes) = doc.parts()?;
    check_writable(&a.out)?;
    let truth = doc.config.params;
    let rho = a.rho.unwrap_or(truth.rho);

    let (report, extra): (EstimateReport, Option<(f64, f64)>) = match a.mode {
        Mode::Epsilon => {
            let mu = a.mu.unwrap_or(truth.mu);
            let opts = EpsilonOptions {
                tol: a.tol,
                ..Default::default()
            };
            let report = estimate_epsilon(&x0, &schedule, &outcomes, mu, rho, &opts)?;
            let diagnostics = match (report.existence, report.scalar()) {
                (Existence::Interior, Some(eps)) => {
                    let d = distances_for(&x0, &schedule, &outcomes, mu)?;
                    let k = KappaSequence::from_distances(eps, &d, rho);
                    Some((analytic_bias(&k, rho)?, analytic_variance(&k, rho)?))
                }
                _ => None,
            };
            (report, diagnostics)
        }
        Mode::Mu => {
            let eps = a.epsilon.unwrap_or(truth.epsilon);
            (estimate_mu(&x0, &schedule, &outcomes, eps, rho, &MuOptions::default())?, None)
        }
        Mode::Joint => (estimate_joint(&x0, &schedule, &outcomes, rho, &JointOptions::default())?, None),
    };

    let mut value = serde_json::to_value(&report).map_err(|e| config_error(e.to_string()))?;
    if let Mode::Joint = a.mode {
        // Always present in joint mode, even with a single minimum.
        value["local_minima"] = serde_json::to_value(&report.local_minima).map_err(|e| config_error(e.to_string()))?;
    }
    if let Some((bias, variance)) = extra {
        value["analytic_bias"] = json!(bias);
        value["analytic_variance"] = json!(variance);
    }
    write_atomic(&a.out, |w| {
        serde_json::to_writer_pretty(&mut *w, &value)?;
        std::io::Write::write_all(w, b"\n")?;
        Ok(())
    })?;

    println!("{}", serde_json::to_string(&report.estimate).unwrap_or_default());
    if report.is_clean_interior() {
        Ok(0)
    } else {
        eprintln!(
            "estimate is not a clean interior optimum (existence: {:?}, boundary hits: {}, flat: {})",
            report.existence,
            report.boundary_hit.len(),
            report.flat_objective
        );
        Ok(EXIT_NONEXISTENT)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn cmd_experiment(a: ExperimentArgs, scan_only: bool) -> CliResult<u8> {
    let text = std::fs::read_to_string(&a.plan).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", a.plan.display()),
    })?;
    let mut plan: ExperimentPlan =
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", a.plan.display())))?;
    if let Some(seed) = a.seed {
        plan.seed = Some(seed);
    }
    if scan_only && plan.scenario != Scenario::SurfaceScan {
        return Err(config_error(format!(
            "scan needs a surface_scan plan, got {}",
            plan.scenario.name()
        )));
    }
    plan.validate()?;
    let workers = a.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(config_error("--workers must be at least 1"));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", a.out.display()),
    })?;

    log::info!("running {} on {workers} workers", plan.scenario.name());
    let output = run_plan(&plan, workers)?;
    let files = output.write(&a.out)?;
    match a.format {
        Format::Csv => print_summary(&output),
        Format::Json => println!("{}", summary_json(&output)),
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(0)
}

fn print_summary(output: &PlanOutput) {
    match output {
        PlanOutput::Battery(r) => {
            println!(
                "{:<8} {:>6} {:>7} {:>8} {:>8} {:>6} {:>5} {:>12} {:>12} {:>12} {:>12}",
                "param", "N", "T", "eps*", "mu*", "count", "excl", "mean_err", "std", "sem", "bound"
            );
            for g in &r.aggregates {
                println!(
                    "{:<8} {:>6} {:>7} {:>8.4} {:>8.4} {:>6} {:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                    format!("{:?}", g.parameter).to_lowercase(),
                    g.n,
                    g.t,
                    g.eps_true,
                    g.mu_true,
                    g.count,
                    g.excluded,
                    g.mean_error,
                    g.std_error,
                    g.sem,
                    g.bound
                );
            }
        }
        PlanOutput::Surface(r) => {
            println!(
                "{:>5} {:>6} {:>7} {:>8} {:>8} {:>7} {:>9} {:>9}",
                "cell", "N", "T", "eps*", "mu*", "minima", "min_eps", "min_mu"
            );
            for c in &r.cells {
                println!(
                    "{:>5} {:>6} {:>7} {:>8.4} {:>8.4} {:>7} {:>9.4} {:>9.4}",
                    c.cell_id,
                    c.n,
                    c.t,
                    c.eps_true,
                    c.mu_true,
                    c.n_minima(),
                    c.global_minimum.epsilon,
                    c.global_minimum.mu
                );
            }
        }
        PlanOutput::RhoSweep(r) => {
            println!("epsilon = {} over {} items", r.epsilon, r.items);
            println!("{:>12} {:>14} {:>14}", "rho", "bias", "bound");
            for p in &r.points {
                println!("{:>12.4e} {:>14.6e} {:>14.6e}", p.rho, p.bias, p.bound);
            }
        }
    }
}

fn summary_json(output: &PlanOutput) -> Value {
    match output {
        PlanOutput::Battery(r) => json!({
            "scenario": r.scenario,
            "aggregates": r.aggregates,
        }),
        PlanOutput::Surface(r) => json!({
            "scenario": Scenario::SurfaceScan,
            "cells": r.cells.iter().map(|c| json!({
                "cell_id": c.cell_id,
                "N": c.n,
                "T": c.t,
                "eps_true": c.eps_true,
                "mu_true": c.mu_true,
                "n_minima": c.n_minima(),
                "min_epsilon": c.global_minimum.epsilon,
                "min_mu": c.global_minimum.mu,
            })).collect::<Vec<_>>(),
        }),
        PlanOutput::RhoSweep(r) => json!({
            "scenario": Scenario::RhoSweep,
            "epsilon": r.epsilon,
            "items": r.items,
            "points": r.points.iter().map(|p| json!({"rho": p.rho, "bias": p.bias, "bound": p.bound})).collect::<Vec<_>>(),
        }),
    }
}
