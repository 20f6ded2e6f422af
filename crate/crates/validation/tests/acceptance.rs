//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL` line to
//! stderr (bypassing output capture) and then asserts the verdict.

use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbcm::estimators::{estimate_epsilon, EpsilonOptions, Existence};
use sbcm::experiments::{
    run_eps_battery, run_mu_battery, run_plan, run_rho_sweep, run_surface_scan, two_agent_oracle, ExperimentPlan,
    GridSpec, Scenario, SurfaceGrids,
};
use sbcm::likelihood::{distances_for, log_likelihood, score_epsilon};
use sbcm::model::{InteractionSchedule, ModelParams, OpinionState, OutcomeTrace};
use sbcm::rasch::{analytic_bias, bias_bound, KappaSequence};
use sbcm::simulator::{simulate, InitialState, SimulationConfig};

fn verdict(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {status} ({detail})");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn plan_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../plans").join(name)
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn eps_plan(steps: Vec<usize>, eps: Vec<f64>, q: usize, k: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        scenario: Scenario::EpsKnownMu,
        agents: vec![1000],
        steps,
        eps_true: eps,
        mu_true: vec![0.01],
        rho: 60.0,
        q,
        k,
        seed: Some(seed),
        tol: 1e-8,
        grids: None,
        rho_grid: None,
        items: 2000,
    }
}

#[test]
fn criterion_1_epsilon_mle_solves_the_score_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut interior, mut nonexistent, mut failures) = (0, 0, Vec::new());
    for case in 0..500u64 {
        let n = [10, 100][rng.random_range(0..2)];
        let t = [100, 1000][rng.random_range(0..2)];
        let eps = rng.random_range(0.05..1.5);
        let mu = rng.random_range(0.0..=0.5);
        let config = SimulationConfig {
            num_agents: n,
            num_steps: t,
            params: ModelParams::new(eps, mu, 60.0).unwrap(),
            initial_state: InitialState::Uniform,
            seed: case,
        };
        let trace = simulate(&config).unwrap();
        let report = estimate_epsilon(&trace.x0, &trace.schedule, &trace.outcomes, mu, 60.0, &EpsilonOptions::default())
            .unwrap();
        let m = trace.successes();
        match report.existence {
            Existence::Interior => {
                interior += 1;
                // A root outside [0, 2] is clamped; the equation holds at the root.
                let at = report.root.unwrap();
                let d = distances_for(&trace.x0, &trace.schedule, &trace.outcomes, mu).unwrap();
                let score = score_epsilon(at, &d, &trace.outcomes, 60.0);
                let kappa_sum = m as f64 - score;
                if score.abs() > 1e-8 || (kappa_sum - m as f64).abs() > 1e-6 || !report.converged {
                    failures.push(format!("case {case}: score {score:e}"));
                }
            }
            Existence::NonexistentLow | Existence::NonexistentHigh => {
                nonexistent += 1;
                let expected = if m == 0 { Existence::NonexistentLow } else { Existence::NonexistentHigh };
                if (m != 0 && m != t) || report.existence != expected {
                    failures.push(format!("case {case}: wrong nonexistence flag with m = {m}"));
                }
            }
        }
    }
    verdict(
        1,
        failures.is_empty(),
        &format!(
            "{interior} interior roots with |score| <= 1e-8, {nonexistent} nonexistent, {} failures {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_2_bias_bound_and_bias_formula() {
    // Part 1: |bias| < 1 / (8 rho T) on random probability sequences.
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let t = rng.random_range(1..=1000usize);
        let rho = 10f64.powf(rng.random_range(0.0..=3.0));
        let kappas: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
        let seq = KappaSequence::from_kappas(&kappas).unwrap();
        let bias = analytic_bias(&seq, rho).unwrap();
        let bound = bias_bound(rho, t);
        if bias.abs() >= bound {
            violations += 1;
            worst = worst.max(bias.abs() / bound);
        }
    }
    let bound_holds = violations == 0;

    // Part 2: Monte Carlo against the closed form.
    let plan = eps_plan(vec![10_000], vec![0.2, 0.6, 1.0], 20, 10, 2002);
    let result = run_eps_battery(&plan, workers()).unwrap();
    let mut cells = Vec::new();
    let mut mc_ok = true;
    for a in &result.aggregates {
        let within = (a.mean_error - a.mean_analytic_bias).abs() <= 3.0 * a.sem;
        let spread = a.std_error >= 10.0 * a.mean_error.abs();
        mc_ok &= within && spread && a.count == 200;
        cells.push(format!(
            "eps*={}: mean {:.2e} analytic {:.2e} sem {:.2e} std {:.2e} [{}{}]",
            a.eps_true,
            a.mean_error,
            a.mean_analytic_bias,
            a.sem,
            a.std_error,
            if within { "3se ok" } else { "3se FAIL" },
            if spread { ", 10x ok" } else { ", 10x FAIL" },
        ));
    }
    verdict(
        2,
        bound_holds && mc_ok,
        &format!(
            "bound violated by {violations}/100000 sequences, worst |bias|/bound {worst:.3e}; monte carlo {}: {}",
            if mc_ok { "ok" } else { "FAIL" },
            cells.join("; ")
        ),
    );
}

#[test]
fn criterion_3_epsilon_error_shrinks_with_t() {
    let plan = eps_plan(vec![1000, 20_000], vec![0.2, 0.6, 1.0], 10, 10, 3003);
    let result = run_eps_battery(&plan, workers()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for &eps in &plan.eps_true {
        let get = |t| result.aggregates.iter().find(|a| a.t == t && a.eps_true == eps).unwrap();
        let (short, long) = (get(1000), get(20_000));
        pass &= long.mean_abs_error < short.mean_abs_error;
        detail.push(format!("eps*={eps}: {:.2e} -> {:.2e}", short.mean_abs_error, long.mean_abs_error));
    }
    verdict(3, pass, &format!("mean |error| at T=1e3 -> 2e4: {}", detail.join("; ")));
}

#[test]
fn criterion_4_mu_estimate_is_biased_upwards() {
    let plan = ExperimentPlan::load(&plan_path("fig5_mu_desk.json")).unwrap();
    let result = run_mu_battery(&plan, workers()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for a in &result.aggregates {
        let z = a.mean_error / a.sem;
        pass &= z > 1.645;
        let relative = 100.0 * a.mean_error / a.mu_true;
        detail.push(format!(
            "mu*={}: mean {:.3e} sem {:.3e} z {:.2} relative {:.2}% ({} the 5-25% band)",
            a.mu_true,
            a.mean_error,
            a.sem,
            z,
            relative,
            if (5.0..=25.0).contains(&relative) { "inside" } else { "outside" }
        ));
    }
    verdict(4, pass, &detail.join("; "));
}

#[test]
fn criterion_5_two_agent_oracle() {
    let settings = [
        ((-0.4, 0.3), 0.8, 0.2, 5.0),
        ((0.9, -0.9), 1.2, 0.35, 2.0),
        ((0.1, 0.15), 0.02, 0.05, 60.0),
        ((-1.0, 1.0), 2.0, 0.5, 1.0),
    ];
    let mut worst_mass = 0.0f64;
    let mut worst_log = 0.0f64;
    for &(x0, eps, mu, rho) in &settings {
        for t in 0..=4 {
            let dist = two_agent_oracle(x0, eps, mu, rho, t).unwrap();
            worst_mass = worst_mass.max((dist.total_probability() - 1.0).abs());
            let state = OpinionState::new(vec![x0.0, x0.1]).unwrap();
            let schedule = InteractionSchedule::new(2, vec![(0, 1); t]).unwrap();
            for p in &dist.paths {
                let ll = log_likelihood(eps, mu, &state, &schedule, &p.outcomes, rho).unwrap();
                worst_log = worst_log.max((ll - p.probability.ln()).abs());
            }
        }
    }

    // Monte Carlo frequencies of the first agent's opinion after two steps.
    let (x0, eps, mu, rho) = settings[0];
    let dist = two_agent_oracle(x0, eps, mu, rho, 2).unwrap();
    let support = dist.final_support();
    let runs = 100_000u64;
    let mut counts = vec![0u64; support.len()];
    for seed in 0..runs {
        let config = SimulationConfig {
            num_agents: 2,
            num_steps: 2,
            params: ModelParams::new(eps, mu, rho).unwrap(),
            initial_state: InitialState::Explicit(vec![x0.0, x0.1]),
            seed,
        };
        let x1 = simulate(&config).unwrap().trajectory.final_state().opinions[0];
        let idx = support
            .iter()
            .position(|s| (s.x1 - x1).abs() < 1e-12)
            .expect("simulated value lies in the oracle support");
        counts[idx] += 1;
    }
    let mut mc_ok = true;
    let mut zs = Vec::new();
    for (s, &c) in support.iter().zip(&counts) {
        let se = (s.probability * (1.0 - s.probability) / runs as f64).sqrt();
        let z = (c as f64 / runs as f64 - s.probability) / se;
        mc_ok &= z.abs() <= 3.0;
        zs.push(format!("{z:.2}"));
    }
    let pass = worst_mass <= 1e-12 && worst_log <= 1e-10 && mc_ok;
    verdict(
        5,
        pass,
        &format!(
            "max |mass - 1| {worst_mass:.1e}, max |logL - log p| {worst_log:.1e}, monte carlo z-scores [{}]",
            zs.join(", ")
        ),
    );
}

#[test]
fn criterion_6_likelihood_normalizes() {
    let settings = [
        ((-0.7, 0.6), 0.5, 0.3, 8.0),
        ((0.0, 0.05), 0.01, 0.5, 60.0),
        ((1.0, -1.0), 1.9, 0.1, 1.0),
        ((0.2, 0.9), 0.6, 0.0, 200.0),
    ];
    let mut worst = 0.0f64;
    for &(x0, eps, mu, rho) in &settings {
        let state = OpinionState::new(vec![x0.0, x0.1]).unwrap();
        for t in 1..=12 {
            let schedule = InteractionSchedule::new(2, vec![(0, 1); t]).unwrap();
            let total: f64 = OutcomeTrace::enumerate_all(t)
                .map(|o| log_likelihood(eps, mu, &state, &schedule, &o, rho).unwrap().exp())
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    verdict(6, worst <= 1e-10, &format!("max |total probability - 1| over T <= 12: {worst:.1e}"));
}

#[test]
fn criterion_7_surface_census_finds_single_and_multiple_minima() {
    let plan = ExperimentPlan::load(&plan_path("fig7_scan.json")).unwrap();
    let result = run_surface_scan(&plan, workers()).unwrap();
    let single = result.cells_with_minima(1);
    let multiple = result.cells.iter().filter(|c| c.n_minima() >= 2).count();
    verdict(
        7,
        single >= 1 && multiple >= 1,
        &format!("{} cells: {single} with one local minimum, {multiple} with two or more", result.cells.len()),
    );
}

#[test]
fn criterion_8_rho_sweep_decays() {
    let plan = ExperimentPlan::load(&plan_path("fig8_rho.json")).unwrap();
    let sweep = run_rho_sweep(&plan).unwrap();
    let grid = plan.rho_grid.clone().unwrap();
    let covers = grid.start <= 1.0 && grid.stop >= 1e3 && grid.log;
    let mut steep = plan.clone();
    steep.rho_grid = Some(GridSpec { start: 1e6, stop: 1e6, points: 1, log: true });
    let at_steep = run_rho_sweep(&steep).unwrap().points[0].bias;
    let pass = covers && sweep.is_monotone_decreasing() && at_steep.abs() < 1e-9;
    verdict(
        8,
        pass,
        &format!(
            "epsilon {:.6} over {} items, {} grid points monotone: {}, bias at rho=1e6: {at_steep:.1e}",
            sweep.epsilon,
            sweep.items,
            sweep.points.len(),
            sweep.is_monotone_decreasing()
        ),
    );
}

fn small_plans() -> Vec<ExperimentPlan> {
    let base = ExperimentPlan {
        scenario: Scenario::EpsKnownMu,
        agents: vec![20, 50],
        steps: vec![300],
        eps_true: vec![0.3, 0.8],
        mu_true: vec![0.1, 0.3],
        rho: 40.0,
        q: 3,
        k: 2,
        seed: Some(909),
        tol: 1e-8,
        grids: None,
        rho_grid: None,
        items: 2000,
    };
    let mut mu = base.clone();
    mu.scenario = Scenario::MuKnownEps;
    let mut joint = base.clone();
    joint.scenario = Scenario::Joint;
    joint.q = 2;
    joint.k = 1;
    let mut surface = base.clone();
    surface.scenario = Scenario::SurfaceScan;
    surface.q = 1;
    surface.grids = Some(SurfaceGrids {
        epsilon: GridSpec { start: 0.0, stop: 1.0, points: 11, log: false },
        mu: GridSpec { start: 0.0, stop: 0.5, points: 6, log: false },
    });
    let mut rho = base.clone();
    rho.scenario = Scenario::RhoSweep;
    rho.rho_grid = Some(GridSpec { start: 1.0, stop: 1e3, points: 7, log: true });
    vec![base, mu, joint, surface, rho]
}

fn csv_bytes(plan: &ExperimentPlan, workers: usize) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let files = run_plan(plan, workers).unwrap().write(dir.path()).unwrap();
    files
        .iter()
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(f).unwrap()))
        .collect()
}

#[test]
fn criterion_9_output_is_deterministic() {
    let mut mismatches = Vec::new();
    let plans = small_plans();
    for plan in &plans {
        let reference = csv_bytes(plan, 1);
        if csv_bytes(plan, 1) != reference {
            mismatches.push(format!("{} rerun", plan.scenario.name()));
        }
        for w in 2..=8 {
            if csv_bytes(plan, w) != reference {
                mismatches.push(format!("{} workers={w}", plan.scenario.name()));
            }
        }
    }
    verdict(
        9,
        mismatches.is_empty(),
        &format!("{} plans x workers 1..8, mismatches: {:?}", plans.len(), mismatches),
    );
}
