//! Domain types of the stochastic bounded confidence model and the logistic
//! success law that every other module builds on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_logistic, logistic};

/// Above this steepness the success law is numerically a step function.
pub const STEEP_RHO: f64 = 1e6;

/// Default steepness used when none is given.
pub const DEFAULT_RHO: f64 = 60.0;

/// Model parameters: confidence bound `epsilon`, convergence rate `mu` and
/// logistic steepness `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epsilon: f64,
    pub mu: f64,
    pub rho: f64,
}

impl ModelParams {
    /// Builds and validates a parameter set.
    pub fn new(epsilon: f64, mu: f64, rho: f64) -> Result<Self> {
        let p = ModelParams { epsilon, mu, rho };
        validate_params(&p)?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        validate_params(self)
    }

    /// Probability that two agents at opinion distance `distance` interact
    /// successfully.
    #[inline]
    pub fn success_probability(&self, distance: f64) -> f64 {
        logistic(self.rho * (self.epsilon - distance))
    }
}

/// Checks the parameter domains: `0 <= epsilon <= 2`, `0 <= mu <= 1/2`,
/// `rho > 0` finite. Emits a warning (not an error) for `rho > 1e6`.
pub fn validate_params(p: &ModelParams) -> Result<()> {
    check_epsilon(p.epsilon)?;
    check_mu(p.mu)?;
    check_rho(p.rho)?;
    if p.rho > STEEP_RHO {
        log::warn!(
            "rho = {} exceeds {STEEP_RHO:e}; the likelihood is effectively discontinuous",
            p.rho
        );
    }
    Ok(())
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && (0.0..=2.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::domain("epsilon", format!("{epsilon} is outside [0, 2]")))
    }
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && (0.0..=0.5).contains(&mu) {
        Ok(())
    } else {
        Err(Error::domain("mu", format!("{mu} is outside [0, 1/2]")))
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("rho", format!("{rho} must be positive and finite")))
    }
}

/// `1 / (1 + exp(-rho z))`.
pub fn sigmoid(z: f64, rho: f64) -> Result<f64> {
    check_logistic_args(z, rho)?;
    Ok(logistic(rho * z))
}

/// `ln sigmoid(z, rho)`, evaluated on the branch that cannot overflow.
pub fn log_sigmoid(z: f64, rho: f64) -> Result<f64> {
    check_logistic_args(z, rho)?;
    Ok(log_logistic(rho * z))
}

fn check_logistic_args(z: f64, rho: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(Error::InvalidArgument(format!("z = {z} is not finite")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho} must be positive and finite")));
    }
    Ok(())
}

/// Opinions of all agents at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    pub opinions: Vec<f64>,
    pub time_index: usize,
}

impl OpinionState {
    pub fn new(opinions: Vec<f64>) -> Result<Self> {
        Self::at(opinions, 0)
    }

    pub fn at(opinions: Vec<f64>, time_index: usize) -> Result<Self> {
        if opinions.len() < 2 {
            return Err(Error::domain(
                "opinions",
                format!("need at least 2 agents, got {}", opinions.len()),
            ));
        }
        if let Some((idx, x)) = opinions
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && (-1.0..=1.0).contains(*x)))
        {
            return Err(Error::domain(
                "opinions",
                format!("opinion of agent {idx} is {x}, outside [-1, 1]"),
            ));
        }
        Ok(OpinionState {
            opinions,
            time_index,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.opinions.len()
    }

    pub fn mean(&self) -> f64 {
        crate::numeric::stable_sum(self.opinions.iter().copied()) / self.opinions.len() as f64
    }
}

/// Ordered candidate pairs, one per step. Entry `k` is step `t = k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSchedule {
    num_agents: usize,
    pairs: Vec<(usize, usize)>,
}

impl InteractionSchedule {
    /// Validates that every pair is canonical (`i < j < num_agents`).
    pub fn new(num_agents: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if num_agents < 2 {
            return Err(Error::domain("num_agents", format!("need N >= 2, got {num_agents}")));
        }
        if let Some((k, &(i, j))) = pairs
            .iter()
            .enumerate()
            .find(|(_, &(i, j))| !(i < j && j < num_agents))
        {
            return Err(Error::domain(
                "schedule",
                format!("entry {} = ({i}, {j}) is not a pair i < j < {num_agents}", k + 1),
            ));
        }
        Ok(InteractionSchedule { num_agents, pairs })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `(i, j, t)` triples with `t` running from 1.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.pairs
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| (i, j, k + 1))
    }
}

/// Success indicator per scheduled step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OutcomeTrace {
    outcomes: Vec<bool>,
}

impl OutcomeTrace {
    pub fn new(outcomes: Vec<bool>) -> Self {
        OutcomeTrace { outcomes }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.outcomes
    }

    /// Number of successful interactions `m`.
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|&&s| s).count()
    }

    /// Outcomes as a `0`/`1` string.
    pub fn to_bit_string(&self) -> String {
        self.outcomes.iter().map(|&s| if s { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(bits: &str) -> Result<Self> {
        bits.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("outcome character {other:?} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(OutcomeTrace::new)
    }

    /// All `2^len` outcome strings, in binary counting order (step 1 is the
    /// most significant bit).
    pub fn enumerate_all(len: usize) -> impl Iterator<Item = OutcomeTrace> {
        assert!(len < 64, "cannot enumerate 2^{len} outcome strings");
        (0u64..(1u64 << len)).map(move |code| {
            OutcomeTrace::new((0..len).map(|t| (code >> (len - 1 - t)) & 1 == 1).collect())
        })
    }
}

impl From<Vec<bool>> for OutcomeTrace {
    fn from(outcomes: Vec<bool>) -> Self {
        OutcomeTrace::new(outcomes)
    }
}

pub(crate) fn check_aligned(schedule: &InteractionSchedule, outcomes: &OutcomeTrace) -> Result<()> {
    if schedule.len() != outcomes.len() {
        return Err(Error::Shape(format!(
            "schedule has {} steps but outcomes have {}",
            schedule.len(),
            outcomes.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_state_fits(x0: &OpinionState, schedule: &InteractionSchedule) -> Result<()> {
    if x0.num_agents() != schedule.num_agents() {
        return Err(Error::Shape(format!(
            "initial state has {} agents but schedule is over {}",
            x0.num_agents(),
            schedule.num_agents()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid(0.0, 7.0).unwrap(), 0.5);
        for &(z, rho) in &[(0.1, 3.0), (-2.0, 0.5), (0.7, 60.0)] {
            let s = sigmoid(z, rho).unwrap() + sigmoid(-z, rho).unwrap();
            assert!((s - 1.0).abs() < 1e-15);
        }
        // 1/(1+e^{-3}) evaluated at 30 digits with mpmath.
        let reference = 0.952_574_126_822_433_219_f64;
        assert!((sigmoid(0.05, 60.0).unwrap() - reference).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_approaches_step() {
        assert!(sigmoid(0.1, 1e3).unwrap() > 1.0 - 1e-6);
        assert!(sigmoid(-0.1, 1e3).unwrap() < 1e-6);
    }

    #[test]
    fn sigmoid_rejects_non_finite() {
        assert!(sigmoid(f64::NAN, 1.0).is_err());
        assert!(sigmoid(f64::INFINITY, 1.0).is_err());
        assert!(log_sigmoid(0.0, f64::NAN).is_err());
        assert!(log_sigmoid(0.0, 0.0).is_err());
    }

    #[test]
    fn log_sigmoid_reference_values() {
        assert!((log_sigmoid(0.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let deep = log_sigmoid(-500.0, 1.0).unwrap();
        assert!(deep.is_finite());
        assert!((deep + 500.0).abs() < 1e-12);
        let direct = sigmoid(0.3, 10.0).unwrap();
        let via_log = log_sigmoid(0.3, 10.0).unwrap().exp();
        assert!(((via_log - direct) / direct).abs() < 1e-12);
    }

    #[test]
    fn validate_params_examples() {
        assert!(ModelParams::new(0.25, 0.5, 60.0).is_ok());
        let e = ModelParams::new(2.5, 0.1, 10.0).unwrap_err();
        assert!(matches!(e, Error::Domain { field: "epsilon", .. }));
        let e = ModelParams::new(1.0, 0.6, 10.0).unwrap_err();
        assert!(matches!(e, Error::Domain { field: "mu", .. }));
        let e = ModelParams::new(1.0, 0.1, -1.0).unwrap_err();
        assert!(matches!(e, Error::Domain { field: "rho", .. }));
        // Steep rho is only a warning.
        assert!(ModelParams::new(1.0, 0.1, 1e7).is_ok());
        // Closed domains.
        assert!(ModelParams::new(0.0, 0.0, 1.0).is_ok());
        assert!(ModelParams::new(2.0, 0.5, 1.0).is_ok());
    }

    #[test]
    fn opinion_state_bounds() {
        assert!(OpinionState::new(vec![-1.0, 1.0]).is_ok());
        assert!(OpinionState::new(vec![0.0]).is_err());
        assert!(OpinionState::new(vec![0.0, 1.5]).is_err());
        assert!(OpinionState::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn schedule_requires_canonical_pairs() {
        assert!(InteractionSchedule::new(3, vec![(0, 1), (1, 2)]).is_ok());
        assert!(InteractionSchedule::new(3, vec![(1, 0)]).is_err());
        assert!(InteractionSchedule::new(3, vec![(1, 1)]).is_err());
        assert!(InteractionSchedule::new(3, vec![(0, 3)]).is_err());
        assert!(InteractionSchedule::new(1, vec![]).is_err());
        let s = InteractionSchedule::new(3, vec![(0, 2), (1, 2)]).unwrap();
        let e: Vec<_> = s.entries().collect();
        assert_eq!(e, vec![(0, 2, 1), (1, 2, 2)]);
    }

    #[test]
    fn outcome_bit_strings() {
        let o = OutcomeTrace::from_bit_string("01101").unwrap();
        assert_eq!(o.successes(), 3);
        assert_eq!(o.to_bit_string(), "01101");
        assert!(OutcomeTrace::from_bit_string("012").is_err());
        let all: Vec<_> = OutcomeTrace::enumerate_all(3).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[1].to_bit_string(), "001");
    }
}
