//! Forward simulation of the stochastic bounded confidence process and
//! deterministic replay of opinion trajectories.
//!
//! Randomness discipline: each step draws the agent pair first and then
//! exactly one uniform for the success trial. Two runs that share a seed
//! therefore see the same pairs and the same uniforms whatever `epsilon` is,
//! which makes runs at different confidence bounds directly comparable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_aligned, check_mu, check_state_fits, InteractionSchedule, ModelParams, OpinionState,
    OutcomeTrace,
};

/// How the initial opinions are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InitialStateRepr", into = "InitialStateRepr")]
pub enum InitialState {
    /// Independent draws from `uniform(-1, 1)`, taken from the run's RNG
    /// before any step.
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum InitialStateRepr {
    Named(String),
    Explicit(Vec<f64>),
}

impl TryFrom<InitialStateRepr> for InitialState {
    type Error = String;

    fn try_from(repr: InitialStateRepr) -> std::result::Result<Self, String> {
        match repr {
            InitialStateRepr::Named(name) if name == "uniform" || name == "uniform(-1,1)" => {
                Ok(InitialState::Uniform)
            }
            InitialStateRepr::Named(name) => Err(format!("unknown initial state {name:?}")),
            InitialStateRepr::Explicit(xs) => Ok(InitialState::Explicit(xs)),
        }
    }
}

impl From<InitialState> for InitialStateRepr {
    fn from(s: InitialState) -> Self {
        match s {
            InitialState::Uniform => InitialStateRepr::Named("uniform".to_string()),
            InitialState::Explicit(xs) => InitialStateRepr::Explicit(xs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub num_agents: usize,
    pub num_steps: usize,
    pub params: ModelParams,
    pub initial_state: InitialState,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_agents < 2 {
            return Err(Error::domain(
                "num_agents",
                format!("need N >= 2, got {}", self.num_agents),
            ));
        }
        if self.num_steps < 1 {
            return Err(Error::domain("num_steps", "need T >= 1"));
        }
        self.params.validate()?;
        if let InitialState::Explicit(xs) = &self.initial_state {
            if xs.len() != self.num_agents {
                return Err(Error::Shape(format!(
                    "initial state has {} opinions but num_agents = {}",
                    xs.len(),
                    self.num_agents
                )));
            }
            OpinionState::new(xs.clone())?;
        }
        Ok(())
    }
}

/// How much of the trajectory to keep in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateStorage {
    /// All `T + 1` full opinion vectors.
    #[default]
    Dense,
    /// Only the post-step opinions of the two scheduled agents.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct StepRecord {
    i: usize,
    j: usize,
    xi: f64,
    xj: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum TrajectoryData {
    /// Row-major `(T + 1) x N`.
    Dense(Vec<f64>),
    Sparse(Vec<StepRecord>),
}

/// The opinion trajectory `x^0 ... x^T` of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    num_agents: usize,
    num_steps: usize,
    x0: Vec<f64>,
    data: TrajectoryData,
}

impl Trajectory {
    fn start(x0: &[f64], num_steps: usize, storage: StateStorage) -> Self {
        let data = match storage {
            StateStorage::Dense => {
                let mut v = Vec::with_capacity((num_steps + 1) * x0.len());
                v.extend_from_slice(x0);
                TrajectoryData::Dense(v)
            }
            StateStorage::Sparse => TrajectoryData::Sparse(Vec::with_capacity(num_steps)),
        };
        Trajectory {
            num_agents: x0.len(),
            num_steps: 0,
            x0: x0.to_vec(),
            data,
        }
    }

    fn push(&mut self, current: &[f64], i: usize, j: usize) {
        match &mut self.data {
            TrajectoryData::Dense(v) => v.extend_from_slice(current),
            TrajectoryData::Sparse(v) => v.push(StepRecord {
                i,
                j,
                xi: current[i],
                xj: current[j],
            }),
        }
        self.num_steps += 1;
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    /// Number of steps `T`; there are `T + 1` states.
    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn storage(&self) -> StateStorage {
        match self.data {
            TrajectoryData::Dense(_) => StateStorage::Dense,
            TrajectoryData::Sparse(_) => StateStorage::Sparse,
        }
    }

    /// Opinion vector after `t` steps.
    pub fn state_at(&self, t: usize) -> Result<OpinionState> {
        if t > self.num_steps {
            return Err(Error::Shape(format!(
                "time index {t} beyond trajectory of {} steps",
                self.num_steps
            )));
        }
        let opinions = match &self.data {
            TrajectoryData::Dense(v) => v[t * self.num_agents..(t + 1) * self.num_agents].to_vec(),
            TrajectoryData::Sparse(records) => {
                let mut x = self.x0.clone();
                for r in &records[..t] {
                    x[r.i] = r.xi;
                    x[r.j] = r.xj;
                }
                x
            }
        };
        Ok(OpinionState {
            opinions,
            time_index: t,
        })
    }

    pub fn final_state(&self) -> OpinionState {
        self.state_at(self.num_steps).expect("final index is in range")
    }

    /// Every state `x^0 ... x^T`, materialized.
    pub fn states(&self) -> Vec<OpinionState> {
        let mut out = Vec::with_capacity(self.num_steps + 1);
        match &self.data {
            TrajectoryData::Dense(v) => {
                for (t, row) in v.chunks_exact(self.num_agents).enumerate() {
                    out.push(OpinionState {
                        opinions: row.to_vec(),
                        time_index: t,
                    });
                }
            }
            TrajectoryData::Sparse(records) => {
                let mut x = self.x0.clone();
                out.push(OpinionState {
                    opinions: x.clone(),
                    time_index: 0,
                });
                for (k, r) in records.iter().enumerate() {
                    x[r.i] = r.xi;
                    x[r.j] = r.xj;
                    out.push(OpinionState {
                        opinions: x.clone(),
                        time_index: k + 1,
                    });
                }
            }
        }
        out
    }

    /// Calls `f(t, agent, opinion)` for every agent at every `stride`-th step
    /// (and always at `t = 0` and `t = T`).
    pub fn for_each_opinion(&self, stride: usize, mut f: impl FnMut(usize, usize, f64)) {
        let stride = stride.max(1);
        let mut x = self.x0.clone();
        let mut emit = |t: usize, x: &[f64]| {
            for (a, &v) in x.iter().enumerate() {
                f(t, a, v);
            }
        };
        emit(0, &x);
        for t in 1..=self.num_steps {
            match &self.data {
                TrajectoryData::Dense(v) => {
                    x.copy_from_slice(&v[t * self.num_agents..(t + 1) * self.num_agents])
                }
                TrajectoryData::Sparse(records) => {
                    let r = records[t - 1];
                    x[r.i] = r.xi;
                    x[r.j] = r.xj;
                }
            }
            if t % stride == 0 || t == self.num_steps {
                emit(t, &x);
            }
        }
    }
}

/// A simulated run: schedule, outcomes, trajectory and the config that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub config: SimulationConfig,
    pub x0: OpinionState,
    pub schedule: InteractionSchedule,
    pub outcomes: OutcomeTrace,
    pub trajectory: Trajectory,
}

impl Trace {
    pub fn successes(&self) -> usize {
        self.outcomes.successes()
    }
}

/// Number of unordered pairs among `n` agents.
pub fn num_pairs(n: usize) -> u64 {
    let n = n as u64;
    n * (n - 1) / 2
}

/// Maps an index in `0..n(n-1)/2` to the pair `(i, j)` with `i < j`, pairs
/// being ordered by `j` and then `i`: index = `j(j-1)/2 + i`.
pub fn pair_from_index(k: u64) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).floor() as u64;
    // Float rounding can be off by one for large k.
    while j * (j - 1) / 2 > k {
        j -= 1;
    }
    while (j + 1) * j / 2 <= k {
        j += 1;
    }
    let i = k - j * (j - 1) / 2;
    (i as usize, j as usize)
}

/// Draws one pair uniformly from all `n(n-1)/2` unordered pairs.
#[inline]
pub fn draw_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    pair_from_index(rng.random_range(0..num_pairs(n)))
}

/// Draws `t` independent uniform pairs among `n` agents.
pub fn draw_schedule<R: Rng + ?Sized>(n: usize, t: usize, rng: &mut R) -> Result<InteractionSchedule> {
    if n < 2 {
        return Err(Error::domain("num_agents", format!("need N >= 2, got {n}")));
    }
    if t < 1 {
        return Err(Error::domain("num_steps", "need T >= 1"));
    }
    let pairs = (0..t).map(|_| draw_pair(n, rng)).collect();
    InteractionSchedule::new(n, pairs)
}

/// Moves agents `i` and `j` towards each other by a fraction `mu` of their gap.
#[inline]
pub fn apply_interaction(opinions: &mut [f64], i: usize, j: usize, mu: f64) {
    let delta = mu * (opinions[j] - opinions[i]);
    opinions[i] += delta;
    opinions[j] -= delta;
}

/// One stochastic step on the scheduled pair. Consumes exactly one uniform.
/// Returns whether the interaction succeeded; on failure the state is untouched.
pub fn step<R: Rng + ?Sized>(
    state: &mut OpinionState,
    pair: (usize, usize),
    params: &ModelParams,
    rng: &mut R,
) -> bool {
    let (i, j) = pair;
    debug_assert!(i != j && i < state.opinions.len() && j < state.opinions.len());
    let success = trial(&state.opinions, i, j, params, rng);
    if success {
        apply_interaction(&mut state.opinions, i, j, params.mu);
    }
    state.time_index += 1;
    success
}

#[inline]
fn trial<R: Rng + ?Sized>(x: &[f64], i: usize, j: usize, params: &ModelParams, rng: &mut R) -> bool {
    let p = params.success_probability((x[i] - x[j]).abs());
    let u: f64 = rng.random();
    u < p
}

/// Draws an initial state uniformly from `[-1, 1]^n`.
pub fn uniform_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> OpinionState {
    let opinions = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    OpinionState {
        opinions,
        time_index: 0,
    }
}

/// Runs `num_steps` steps from `x0` with the caller's RNG.
pub fn run_process<R: Rng + ?Sized>(
    x0: &OpinionState,
    num_steps: usize,
    params: &ModelParams,
    rng: &mut R,
    storage: StateStorage,
) -> (InteractionSchedule, OutcomeTrace, Trajectory) {
    let n = x0.num_agents();
    let mut x = x0.opinions.clone();
    let mut pairs = Vec::with_capacity(num_steps);
    let mut outcomes = Vec::with_capacity(num_steps);
    let mut traj = Trajectory::start(&x, num_steps, storage);
    for _ in 0..num_steps {
        let (i, j) = draw_pair(n, rng);
        let success = trial(&x, i, j, params, rng);
        if success {
            apply_interaction(&mut x, i, j, params.mu);
        }
        pairs.push((i, j));
        outcomes.push(success);
        traj.push(&x, i, j);
    }
    let schedule = InteractionSchedule::new(n, pairs).expect("drawn pairs are canonical");
    (schedule, OutcomeTrace::new(outcomes), traj)
}

/// Simulates a full trace with dense state storage.
pub fn simulate(config: &SimulationConfig) -> Result<Trace> {
    simulate_with(config, StateStorage::Dense)
}

pub fn simulate_with(config: &SimulationConfig, storage: StateStorage) -> Result<Trace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let x0 = match &config.initial_state {
        InitialState::Uniform => uniform_state(config.num_agents, &mut rng),
        InitialState::Explicit(xs) => OpinionState::new(xs.clone())?,
    };
    let (schedule, outcomes, trajectory) =
        run_process(&x0, config.num_steps, &config.params, &mut rng, storage);
    Ok(Trace {
        config: config.clone(),
        x0,
        schedule,
        outcomes,
        trajectory,
    })
}

/// Reconstructs the trajectory implied by `x0`, the schedule, the outcomes and
/// `mu`. Consumes no randomness.
pub fn replay(
    x0: &OpinionState,
    schedule: &InteractionSchedule,
    outcomes: &OutcomeTrace,
    mu: f64,
    storage: StateStorage,
) -> Result<Trajectory> {
    check_mu(mu)?;
    check_aligned(schedule, outcomes)?;
    check_state_fits(x0, schedule)?;
    let mut x = x0.opinions.clone();
    let mut traj = Trajectory::start(&x, schedule.len(), storage);
    for (&(i, j), &s) in schedule.pairs().iter().zip(outcomes.as_slice()) {
        if s {
            apply_interaction(&mut x, i, j, mu);
        }
        traj.push(&x, i, j);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, t: usize, eps: f64, mu: f64, rho: f64, seed: u64) -> SimulationConfig {
        SimulationConfig {
            num_agents: n,
            num_steps: t,
            params: ModelParams::new(eps, mu, rho).unwrap(),
            initial_state: InitialState::Uniform,
            seed,
        }
    }

    #[test]
    fn pair_index_round_trip() {
        let n = 37;
        let mut seen = std::collections::HashSet::new();
        for k in 0..num_pairs(n) {
            let (i, j) = pair_from_index(k);
            assert!(i < j && j < n);
            assert_eq!((j * (j - 1) / 2 + i) as u64, k);
            assert!(seen.insert((i, j)));
        }
        // Large indices near the float-rounding edge.
        let n = 3_000_000usize;
        for k in [num_pairs(n) - 1, num_pairs(n) / 2 + 7] {
            let (i, j) = pair_from_index(k);
            assert!(i < j);
            assert_eq!((j as u64) * (j as u64 - 1) / 2 + i as u64, k);
        }
    }

    #[test]
    fn two_agents_have_one_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = draw_schedule(2, 5, &mut rng).unwrap();
        assert!(s.entries().enumerate().all(|(k, e)| e == (0, 1, k + 1)));
        assert!(draw_schedule(1, 5, &mut rng).is_err());
    }

    #[test]
    fn schedule_is_seed_deterministic() {
        let a = draw_schedule(50, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = draw_schedule(50, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = draw_schedule(50, 100, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn step_arithmetic() {
        let params = ModelParams::new(2.0, 0.25, 1e6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = OpinionState::new(vec![0.0, 0.4]).unwrap();
        assert!(step(&mut s, (0, 1), &params, &mut rng));
        assert!((s.opinions[0] - 0.1).abs() < 1e-15);
        assert!((s.opinions[1] - 0.3).abs() < 1e-15);
        assert_eq!(s.time_index, 1);

        let half = ModelParams::new(2.0, 0.5, 1e6).unwrap();
        let mut s = OpinionState::new(vec![-0.3, 0.7]).unwrap();
        assert!(step(&mut s, (0, 1), &half, &mut rng));
        assert!((s.opinions[0] - 0.2).abs() < 1e-15);
        assert!((s.opinions[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn failed_step_leaves_state_bitwise_identical() {
        let params = ModelParams::new(0.0, 0.25, 1e6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let before = OpinionState::new(vec![-0.5, 0.4, 0.9]).unwrap();
        let mut s = before.clone();
        assert!(!step(&mut s, (0, 2), &params, &mut rng));
        assert_eq!(s.opinions, before.opinions);
    }

    #[test]
    fn forced_regimes() {
        let t = simulate(&cfg(100, 10_000, 2.0, 0.1, 1e6, 5)).unwrap();
        assert!(t.successes() as f64 / 1e4 >= 0.999);
        let t = simulate(&cfg(100, 2_000, 0.0, 0.1, 1e6, 5)).unwrap();
        assert_eq!(t.successes(), 0);
    }

    #[test]
    fn large_run_stays_in_bounds() {
        let t = simulate_with(&cfg(1000, 10_000, 0.25, 0.01, 60.0, 11), StateStorage::Sparse).unwrap();
        let fin = t.trajectory.final_state();
        assert!(fin.opinions.iter().all(|x| x.abs() <= 1.0));
        assert_eq!(t.schedule.len(), 10_000);
    }

    #[test]
    fn only_scheduled_agents_change() {
        let t = simulate(&cfg(20, 500, 0.6, 0.3, 20.0, 8)).unwrap();
        let states = t.trajectory.states();
        assert_eq!(states.len(), 501);
        for (k, &(i, j)) in t.schedule.pairs().iter().enumerate() {
            let (a, b) = (&states[k].opinions, &states[k + 1].opinions);
            for agent in 0..20 {
                if agent != i && agent != j {
                    assert_eq!(a[agent], b[agent]);
                }
            }
            if !t.outcomes.as_slice()[k] {
                assert_eq!(a, b);
            } else {
                let before = (a[i] - a[j]).abs();
                let after = (b[i] - b[j]).abs();
                assert!((after - (1.0 - 2.0 * 0.3) * before).abs() < 1e-15);
                assert!((a[i] + a[j] - b[i] - b[j]).abs() <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn replay_degenerate_cases() {
        let x0 = OpinionState::new(vec![-0.4, 0.1, 0.8]).unwrap();
        let sched = InteractionSchedule::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        let zeros = OutcomeTrace::new(vec![false; 3]);
        let ones = OutcomeTrace::new(vec![true; 3]);
        for st in replay(&x0, &sched, &zeros, 0.3, StateStorage::Dense).unwrap().states() {
            assert_eq!(st.opinions, x0.opinions);
        }
        for st in replay(&x0, &sched, &ones, 0.0, StateStorage::Dense).unwrap().states() {
            assert_eq!(st.opinions, x0.opinions);
        }
        assert!(replay(&x0, &sched, &OutcomeTrace::new(vec![true]), 0.3, StateStorage::Dense).is_err());
        assert!(replay(&x0, &sched, &ones, 0.7, StateStorage::Dense).is_err());
    }

    #[test]
    fn sparse_and_dense_agree() {
        let c = cfg(15, 300, 0.8, 0.2, 30.0, 4);
        let d = simulate_with(&c, StateStorage::Dense).unwrap();
        let s = simulate_with(&c, StateStorage::Sparse).unwrap();
        assert_eq!(d.outcomes, s.outcomes);
        assert_eq!(d.trajectory.states(), s.trajectory.states());
        assert_eq!(d.trajectory.state_at(123).unwrap(), s.trajectory.state_at(123).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(simulate(&cfg(1, 5, 0.5, 0.1, 10.0, 1)).is_err());
        let mut c = cfg(3, 5, 0.5, 0.1, 10.0, 1);
        c.initial_state = InitialState::Explicit(vec![0.0, 0.1]);
        assert!(matches!(simulate(&c), Err(Error::Shape(_))));
        c.num_steps = 0;
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn initial_state_serde() {
        let json = serde_json::to_string(&InitialState::Uniform).unwrap();
        assert_eq!(json, "\"uniform\"");
        let e: InitialState = serde_json::from_str("[0.1, -0.2]").unwrap();
        assert_eq!(e, InitialState::Explicit(vec![0.1, -0.2]));
        assert!(serde_json::from_str::<InitialState>("\"gaussian\"").is_err());
    }
}
