//! Monte Carlo protocols: replication batteries for the epsilon, mu and joint
//! estimators, likelihood-surface scans, the steepness sweep of the analytic
//! bias, and the exhaustive two-agent oracle.
//!
//! Every replication derives its own seed from the plan's master seed and its
//! cell coordinates, and results are merged by cell index, so output does not
//! depend on the number of workers.

mod battery;
mod oracle;
mod output;
mod plan;
mod rho_sweep;
mod surface;

pub use battery::{
    aggregate, run_eps_battery, run_joint_battery, run_mu_battery, Aggregate, BatteryRecord,
    ExperimentResult,
};
pub use oracle::{two_agent_oracle, PathProbability, SupportPoint, TwoAgentDistribution, MAX_ORACLE_STEPS};
pub use output::{load_battery, read_aggregates_csv, read_battery_csv, PlanOutput};
pub use plan::{ExperimentPlan, GridSpec, Scenario, SurfaceGrids};
pub use rho_sweep::{run_rho_sweep, RhoSweepPoint, RhoSweepResult};
pub use surface::{run_surface_scan, SurfaceCell, SurfaceScanResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{InteractionSchedule, ModelParams, OpinionState, OutcomeTrace};
use crate::simulator::{apply_interaction, draw_pair, uniform_state};

/// Runs an experiment plan on `workers` threads.
pub fn run_plan(plan: &ExperimentPlan, workers: usize) -> Result<PlanOutput> {
    plan.validate()?;
    Ok(match plan.scenario {
        Scenario::EpsKnownMu => PlanOutput::Battery(run_eps_battery(plan, workers)?),
        Scenario::MuKnownEps => PlanOutput::Battery(run_mu_battery(plan, workers)?),
        Scenario::Joint => PlanOutput::Battery(run_joint_battery(plan, workers)?),
        Scenario::SurfaceScan => PlanOutput::Surface(run_surface_scan(plan, workers)?),
        Scenario::RhoSweep => PlanOutput::RhoSweep(run_rho_sweep(plan)?),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit hash of a master seed and a list of coordinates.
pub fn hash64(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Seed of replication `k` of initial condition `q` in the `(N, T)` cell.
pub fn cell_seed(master: u64, n: usize, t: usize, q: usize, k: usize) -> u64 {
    hash64(master, &[n as u64, t as u64, q as u64, k as u64])
}

const X0_TAG: u64 = u64::MAX;

/// Seed of initial condition `q` for `N` agents. Shared across `T` and the
/// true-parameter cells so that they are compared on the same starts.
pub fn initial_condition_seed(master: u64, n: usize, q: usize) -> u64 {
    hash64(master, &[n as u64, X0_TAG, q as u64])
}

pub(crate) fn initial_condition(master: u64, n: usize, q: usize) -> OpinionState {
    uniform_state(n, &mut ChaCha8Rng::seed_from_u64(initial_condition_seed(master, n, q)))
}

/// Draws schedule and outcomes only, without storing states.
pub(crate) fn sample_observation(
    x0: &OpinionState,
    num_steps: usize,
    params: &ModelParams,
    seed: u64,
) -> (InteractionSchedule, OutcomeTrace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x0.num_agents();
    let mut x = x0.opinions.clone();
    let mut pairs = Vec::with_capacity(num_steps);
    let mut outcomes = Vec::with_capacity(num_steps);
    for _ in 0..num_steps {
        let (i, j) = draw_pair(n, &mut rng);
        let p = params.success_probability((x[i] - x[j]).abs());
        let u: f64 = rand::Rng::random(&mut rng);
        let s = u < p;
        if s {
            apply_interaction(&mut x, i, j, params.mu);
        }
        pairs.push((i, j));
        outcomes.push(s);
    }
    (
        InteractionSchedule::new(n, pairs).expect("drawn pairs are canonical"),
        OutcomeTrace::new(outcomes),
    )
}

/// Evaluates `f(0..count)` on a pool of `workers` threads, returning results
/// in index order.
pub fn run_indexed<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{run_process, StateStorage};

    #[test]
    fn seeds_depend_on_every_coordinate() {
        let base = cell_seed(1, 100, 1000, 2, 3);
        assert_ne!(base, cell_seed(2, 100, 1000, 2, 3));
        assert_ne!(base, cell_seed(1, 101, 1000, 2, 3));
        assert_ne!(base, cell_seed(1, 100, 1001, 2, 3));
        assert_ne!(base, cell_seed(1, 100, 1000, 3, 2));
        assert_eq!(base, cell_seed(1, 100, 1000, 2, 3));
    }

    #[test]
    fn sample_observation_matches_simulator() {
        let x0 = initial_condition(5, 40, 0);
        let params = ModelParams::new(0.4, 0.2, 30.0).unwrap();
        let (s, o) = sample_observation(&x0, 500, &params, 77);
        let (s2, o2, _) = run_process(&x0, 500, &params, &mut ChaCha8Rng::seed_from_u64(77), StateStorage::Sparse);
        assert_eq!(s, s2);
        assert_eq!(o, o2);
    }

    #[test]
    fn pool_preserves_order() {
        let a = run_indexed(100, 1, |i| i * i).unwrap();
        let b = run_indexed(100, 7, |i| i * i).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[9], 81);
    }
}
