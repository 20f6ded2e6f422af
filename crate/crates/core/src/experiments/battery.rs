use serde::{Deserialize, Serialize};

use super::plan::{Cell, ExperimentPlan, Scenario};
use super::{cell_seed, initial_condition, run_indexed, sample_observation};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_epsilon_from_distances, estimate_joint, estimate_mu_observed, EpsilonOptions, Estimate,
    JointOptions, MuOptions, Parameter,
};
use crate::likelihood::{replay_distances, Observation};
use crate::model::ModelParams;
use crate::numeric::NeumaierSum;
use crate::rasch::{analytic_bias, analytic_variance, bias_bound, KappaSequence};

/// One estimate of one parameter in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRecord {
    pub n: usize,
    pub t: usize,
    pub eps_true: f64,
    pub mu_true: f64,
    pub q: usize,
    pub k: usize,
    pub parameter: Parameter,
    /// NaN when estimation failed outright.
    pub estimate: f64,
    pub error: f64,
    /// Counted in the moments. False for nonexistent or flat estimates.
    pub exists: bool,
    pub boundary_hit: bool,
    pub flat: bool,
    pub n_minima: usize,
    /// Closed-form bias at the true epsilon (epsilon battery only, else NaN).
    pub analytic_bias: f64,
    pub analytic_variance: f64,
}

impl BatteryRecord {
    fn group_key(&self) -> (usize, usize, u64, u64, Parameter) {
        (self.n, self.t, self.eps_true.to_bits(), self.mu_true.to_bits(), self.parameter)
    }
}

/// Moments of the estimation error over one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: Scenario,
    pub parameter: Parameter,
    pub n: usize,
    pub t: usize,
    pub eps_true: f64,
    pub mu_true: f64,
    /// Records included in the moments.
    pub count: usize,
    pub excluded: usize,
    pub mean_error: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for a single record.
    pub std_error: f64,
    /// Standard error of the mean, `std_error / sqrt(count)`.
    pub sem: f64,
    pub mean_abs_error: f64,
    pub mean_analytic_bias: f64,
    pub mean_analytic_variance: f64,
    /// `1 / (8 rho T)`.
    pub bound: f64,
    pub boundary_fraction: f64,
    pub flat_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scenario: Scenario,
    pub rho: f64,
    pub records: Vec<BatteryRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub(crate) fn from_records(scenario: Scenario, rho: f64, records: Vec<BatteryRecord>) -> Self {
        let aggregates = aggregate(scenario, rho, &records);
        ExperimentResult {
            scenario,
            rho,
            records,
            aggregates,
        }
    }

    /// Recomputes the aggregates from the records and compares them exactly.
    pub fn verify_aggregates(&self) -> Result<()> {
        let fresh = aggregate(self.scenario, self.rho, &self.records);
        if fresh.len() != self.aggregates.len() {
            return Err(Error::Parse(format!(
                "{} stored aggregates but records give {}",
                self.aggregates.len(),
                fresh.len()
            )));
        }
        for (a, b) in fresh.iter().zip(&self.aggregates) {
            if !same_aggregate(a, b) {
                return Err(Error::Parse(format!(
                    "stored aggregate for N={} T={} eps={} mu={} does not match its records",
                    b.n, b.t, b.eps_true, b.mu_true
                )));
            }
        }
        Ok(())
    }

    pub fn aggregate_for(&self, parameter: Parameter, n: usize, t: usize, eps: f64, mu: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.parameter == parameter && a.n == n && a.t == t && a.eps_true == eps && a.mu_true == mu)
    }
}

fn same_f64(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn same_aggregate(a: &Aggregate, b: &Aggregate) -> bool {
    a.scenario == b.scenario
        && a.parameter == b.parameter
        && a.n == b.n
        && a.t == b.t
        && same_f64(a.eps_true, b.eps_true)
        && same_f64(a.mu_true, b.mu_true)
        && a.count == b.count
        && a.excluded == b.excluded
        && same_f64(a.mean_error, b.mean_error)
        && same_f64(a.std_error, b.std_error)
        && same_f64(a.sem, b.sem)
        && same_f64(a.mean_abs_error, b.mean_abs_error)
        && same_f64(a.mean_analytic_bias, b.mean_analytic_bias)
        && same_f64(a.mean_analytic_variance, b.mean_analytic_variance)
        && same_f64(a.bound, b.bound)
        && same_f64(a.boundary_fraction, b.boundary_fraction)
        && same_f64(a.flat_fraction, b.flat_fraction)
}

/// Groups records by cell and parameter (in order of first appearance) and
/// computes error moments over the records that exist.
pub fn aggregate(scenario: Scenario, rho: f64, records: &[BatteryRecord]) -> Vec<Aggregate> {
    let mut keys = Vec::new();
    for r in records {
        let key = r.group_key();
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|key| {
            let group: Vec<&BatteryRecord> = records.iter().filter(|r| r.group_key() == key).collect();
            summarize(scenario, rho, &group)
        })
        .collect()
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        acc.value() / n as f64
    }
}

fn summarize(scenario: Scenario, rho: f64, group: &[&BatteryRecord]) -> Aggregate {
    let first = group[0];
    let included: Vec<&&BatteryRecord> = group.iter().filter(|r| r.exists).collect();
    let count = included.len();
    let mean_error = mean_of(included.iter().map(|r| r.error));
    let std_error = match count {
        0 => f64::NAN,
        1 => 0.0,
        _ => {
            let mut acc = NeumaierSum::new();
            for r in &included {
                let d = r.error - mean_error;
                acc.add(d * d);
            }
            (acc.value() / (count - 1) as f64).sqrt()
        }
    };
    let sem = if count == 0 { f64::NAN } else { std_error / (count as f64).sqrt() };
    let total = group.len() as f64;
    Aggregate {
        scenario,
        parameter: first.parameter,
        n: first.n,
        t: first.t,
        eps_true: first.eps_true,
        mu_true: first.mu_true,
        count,
        excluded: group.len() - count,
        mean_error,
        std_error,
        sem,
        mean_abs_error: mean_of(included.iter().map(|r| r.error.abs())),
        mean_analytic_bias: mean_of(included.iter().map(|r| r.analytic_bias)),
        mean_analytic_variance: mean_of(included.iter().map(|r| r.analytic_variance)),
        bound: bias_bound(rho, first.t),
        boundary_fraction: group.iter().filter(|r| r.boundary_hit).count() as f64 / total,
        flat_fraction: group.iter().filter(|r| r.flat).count() as f64 / total,
    }
}

/// Work items in output order: cell, then q, then k.
pub(super) fn work_items(plan: &ExperimentPlan) -> Vec<(Cell, usize, usize)> {
    let mut items = Vec::new();
    for cell in plan.cells() {
        for q in 0..plan.q {
            for k in 0..plan.k {
                items.push((cell, q, k));
            }
        }
    }
    items
}

pub(super) fn observe(plan: &ExperimentPlan, master: u64, cell: &Cell, q: usize, k: usize) -> Observation {
    let x0 = initial_condition(master, cell.n, q);
    let params = ModelParams {
        epsilon: cell.eps,
        mu: cell.mu,
        rho: plan.rho,
    };
    let (schedule, outcomes) = sample_observation(&x0, cell.t, &params, cell_seed(master, cell.n, cell.t, q, k));
    Observation {
        x0,
        schedule,
        outcomes,
    }
}

fn blank_record(cell: &Cell, q: usize, k: usize, parameter: Parameter) -> BatteryRecord {
    BatteryRecord {
        n: cell.n,
        t: cell.t,
        eps_true: cell.eps,
        mu_true: cell.mu,
        q,
        k,
        parameter,
        estimate: f64::NAN,
        error: f64::NAN,
        exists: false,
        boundary_hit: false,
        flat: false,
        n_minima: 0,
        analytic_bias: f64::NAN,
        analytic_variance: f64::NAN,
    }
}

pub(super) fn require(plan: &ExperimentPlan, scenario: Scenario) -> Result<u64> {
    if plan.scenario != scenario {
        return Err(Error::domain(
            "scenario",
            format!("expected {}, plan is {}", scenario.name(), plan.scenario.name()),
        ));
    }
    plan.validate()?;
    plan.master_seed()
}

/// Epsilon estimation with `mu` known, for every cell of the plan.
pub fn run_eps_battery(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentResult> {
    let master = require(plan, Scenario::EpsKnownMu)?;
    let items = work_items(plan);
    let opts = EpsilonOptions {
        tol: plan.tol,
        ..Default::default()
    };
    let records = run_indexed(items.len(), workers, |idx| {
        let (cell, q, k) = items[idx];
        let obs = observe(plan, master, &cell, q, k);
        let distances = replay_distances(&obs.x0.opinions, obs.schedule.pairs(), obs.outcomes.as_slice(), cell.mu);
        let mut rec = blank_record(&cell, q, k, Parameter::Epsilon);
        let kappas = KappaSequence::from_distances(cell.eps, &distances, plan.rho);
        rec.analytic_bias = analytic_bias(&kappas, plan.rho).unwrap_or(f64::NAN);
        rec.analytic_variance = analytic_variance(&kappas, plan.rho).unwrap_or(f64::NAN);
        if let Ok(report) = estimate_epsilon_from_distances(&distances, &obs.outcomes, plan.rho, &opts) {
            let est = report.scalar().expect("scalar estimate");
            rec.estimate = est;
            rec.error = est - cell.eps;
            rec.exists = report.existence == crate::estimators::Existence::Interior && report.converged;
            rec.boundary_hit = !report.boundary_hit.is_empty();
            rec.n_minima = 1;
        }
        rec
    })?;
    Ok(ExperimentResult::from_records(Scenario::EpsKnownMu, plan.rho, records))
}

/// Mu estimation with `epsilon` known.
pub fn run_mu_battery(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentResult> {
    let master = require(plan, Scenario::MuKnownEps)?;
    let items = work_items(plan);
    let opts = MuOptions::default();
    let records = run_indexed(items.len(), workers, |idx| {
        let (cell, q, k) = items[idx];
        let obs = observe(plan, master, &cell, q, k);
        let mut rec = blank_record(&cell, q, k, Parameter::Mu);
        if let Ok(report) = estimate_mu_observed(&obs, cell.eps, plan.rho, &opts) {
            let est = report.scalar().expect("scalar estimate");
            rec.estimate = est;
            rec.error = est - cell.mu;
            rec.flat = report.flat_objective;
            rec.exists = !report.flat_objective;
            rec.boundary_hit = !report.boundary_hit.is_empty();
            rec.n_minima = report.local_minima.len();
        }
        rec
    })?;
    Ok(ExperimentResult::from_records(Scenario::MuKnownEps, plan.rho, records))
}

/// Joint `(epsilon, mu)` estimation; two records (one per parameter) per
/// replication.
pub fn run_joint_battery(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentResult> {
    let master = require(plan, Scenario::Joint)?;
    let items = work_items(plan);
    let opts = JointOptions::default();
    let pairs = run_indexed(items.len(), workers, |idx| {
        let (cell, q, k) = items[idx];
        let obs = observe(plan, master, &cell, q, k);
        let mut eps_rec = blank_record(&cell, q, k, Parameter::Epsilon);
        let mut mu_rec = blank_record(&cell, q, k, Parameter::Mu);
        if let Ok(report) = estimate_joint(&obs.x0, &obs.schedule, &obs.outcomes, plan.rho, &opts) {
            if let Estimate::Joint { epsilon, mu } = report.estimate {
                for (rec, est, truth, param) in [
                    (&mut eps_rec, epsilon, cell.eps, Parameter::Epsilon),
                    (&mut mu_rec, mu, cell.mu, Parameter::Mu),
                ] {
                    rec.estimate = est;
                    rec.error = est - truth;
                    rec.flat = report.flat_objective;
                    rec.exists = !report.flat_objective;
                    rec.boundary_hit = report.boundary_hit.iter().any(|b| b.parameter == param);
                    rec.n_minima = report.local_minima.len();
                }
            }
        }
        [eps_rec, mu_rec]
    })?;
    let records = pairs.into_iter().flatten().collect();
    Ok(ExperimentResult::from_records(Scenario::Joint, plan.rho, records))
}
