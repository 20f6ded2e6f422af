//! Exhaustive path enumeration for two agents. Every step interacts the only
//! pair, so a trajectory is determined by its outcome string and its
//! probability is a product of success and failure probabilities along it.

use crate::error::{Error, Result};
use crate::model::{check_epsilon, check_mu, check_rho, OutcomeTrace};

/// Longest horizon the oracle will enumerate.
pub const MAX_ORACLE_STEPS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PathProbability {
    pub outcomes: OutcomeTrace,
    pub probability: f64,
    /// First agent's opinion after each step (`x1[0]` is the start).
    pub x1: Vec<f64>,
}

impl PathProbability {
    pub fn final_x1(&self) -> f64 {
        *self.x1.last().expect("path includes the start")
    }
}

/// One value of the first agent's opinion and its total probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPoint {
    pub x1: f64,
    pub probability: f64,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoAgentDistribution {
    pub paths: Vec<PathProbability>,
    /// `support[t]` is the law of the first agent's opinion after `t` steps,
    /// sorted by value.
    pub support: Vec<Vec<SupportPoint>>,
}

impl TwoAgentDistribution {
    pub fn total_probability(&self) -> f64 {
        self.paths.iter().map(|p| p.probability).sum()
    }

    pub fn final_support(&self) -> &[SupportPoint] {
        self.support.last().expect("support includes t = 0")
    }

    pub fn path(&self, outcomes: &OutcomeTrace) -> Option<&PathProbability> {
        self.paths.iter().find(|p| &p.outcomes == outcomes)
    }
}

fn success_probability(epsilon: f64, d: f64, rho: f64) -> f64 {
    1.0 / (1.0 + (-rho * (epsilon - d)).exp())
}

/// Enumerates all `2^steps` outcome strings for agents starting at `x0`.
/// Refuses horizons above [`MAX_ORACLE_STEPS`].
pub fn two_agent_oracle(
    x0: (f64, f64),
    epsilon: f64,
    mu: f64,
    rho: f64,
    steps: usize,
) -> Result<TwoAgentDistribution> {
    if steps > MAX_ORACLE_STEPS {
        return Err(Error::Refused(format!(
            "two-agent enumeration is limited to {MAX_ORACLE_STEPS} steps, got {steps}"
        )));
    }
    check_epsilon(epsilon)?;
    check_mu(mu)?;
    check_rho(rho)?;
    for x in [x0.0, x0.1] {
        if !(x.is_finite() && (-1.0..=1.0).contains(&x)) {
            return Err(Error::domain("x0", format!("{x} is outside [-1, 1]")));
        }
    }

    let paths: Vec<PathProbability> = OutcomeTrace::enumerate_all(steps)
        .map(|outcomes| {
            let (mut a, mut b) = x0;
            let mut probability = 1.0;
            let mut x1 = vec![a];
            for &s in outcomes.as_slice() {
                let p = success_probability(epsilon, (a - b).abs(), rho);
                if s {
                    probability *= p;
                    let shift = mu * (b - a);
                    a += shift;
                    b -= shift;
                } else {
                    probability *= 1.0 - p;
                }
                x1.push(a);
            }
            PathProbability {
                outcomes,
                probability,
                x1,
            }
        })
        .collect();

    let support = (0..=steps).map(|t| support_at(&paths, t, steps)).collect();
    Ok(TwoAgentDistribution { paths, support })
}

/// Groups paths by the exact value of `x1[t]`. Prefix probabilities are
/// obtained by summing over the remaining steps, which sum to one.
fn support_at(paths: &[PathProbability], t: usize, steps: usize) -> Vec<SupportPoint> {
    let mut points: Vec<SupportPoint> = Vec::new();
    for p in paths {
        // +0.0 folds -0.0 into 0.0.
        let x = p.x1[t] + 0.0;
        match points.iter_mut().find(|s| s.x1.to_bits() == x.to_bits()) {
            Some(s) => {
                s.probability += p.probability;
                s.paths += 1;
            }
            None => points.push(SupportPoint {
                x1: x,
                probability: p.probability,
                paths: 1,
            }),
        }
    }
    // Each prefix is counted once per completion.
    let completions = 1usize << (steps - t);
    for s in &mut points {
        s.paths /= completions;
    }
    points.sort_by(|a, b| a.x1.total_cmp(&b.x1));
    points
}
