//! Exact log-likelihood of an observed outcome trace.
//!
//! Given the initial opinions, the schedule and the outcomes, the opinion
//! trajectory is a deterministic function of `mu` (replay). The likelihood is
//! then a product of independent Bernoulli terms with success probability
//! `sigmoid(rho * (epsilon - d_t))`, where `d_t` is the replayed distance of
//! the scheduled pair just before step `t`. Everything here works in log
//! space.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{
    check_aligned, check_epsilon, check_mu, check_rho, check_state_fits, InteractionSchedule,
    OpinionState, OutcomeTrace,
};
use crate::numeric::{fmt_f64, log_logistic, logistic, NeumaierSum};
use crate::simulator::apply_interaction;

/// Pre-step distances `|x_i^t - x_j^t|` of the scheduled pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSequence {
    distances: Vec<f64>,
}

impl DistanceSequence {
    pub fn new(distances: Vec<f64>) -> Result<Self> {
        if let Some(d) = distances.iter().find(|d| !(d.is_finite() && (0.0..=2.0).contains(*d))) {
            return Err(Error::domain("distances", format!("{d} is outside [0, 2]")));
        }
        Ok(DistanceSequence { distances })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.distances.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Replays the trajectory under `mu` and records each scheduled pair's
/// distance before its step.
pub fn distances_for(
    x0: &OpinionState,
    schedule: &InteractionSchedule,
    outcomes: &OutcomeTrace,
    mu: f64,
) -> Result<DistanceSequence> {
    check_mu(mu)?;
    check_aligned(schedule, outcomes)?;
    check_state_fits(x0, schedule)?;
    Ok(replay_distances(&x0.opinions, schedule.pairs(), outcomes.as_slice(), mu))
}

pub(crate) fn replay_distances(
    x0: &[f64],
    pairs: &[(usize, usize)],
    outcomes: &[bool],
    mu: f64,
) -> DistanceSequence {
    let mut x = x0.to_vec();
    let distances = pairs
        .iter()
        .zip(outcomes)
        .map(|(&(i, j), &s)| {
            let d = (x[i] - x[j]).abs();
            if s {
                apply_interaction(&mut x, i, j, mu);
            }
            d
        })
        .collect();
    DistanceSequence { distances }
}

/// Log-likelihood given precomputed distances. `epsilon` is not restricted to
/// the parameter domain here so that root finders may step outside it.
pub fn log_likelihood_from_distances(
    epsilon: f64,
    distances: &DistanceSequence,
    outcomes: &OutcomeTrace,
    rho: f64,
) -> f64 {
    let mut acc = NeumaierSum::new();
    for (&d, &s) in distances.as_slice().iter().zip(outcomes.as_slice()) {
        let z = rho * (epsilon - d);
        acc.add(if s { log_logistic(z) } else { log_logistic(-z) });
    }
    acc.value()
}

/// `ln P(outcomes | x0, schedule, epsilon, mu, rho)`.
pub fn log_likelihood(
    epsilon: f64,
    mu: f64,
    x0: &OpinionState,
    schedule: &InteractionSchedule,
    outcomes: &OutcomeTrace,
    rho: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_rho(rho)?;
    let d = distances_for(x0, schedule, outcomes, mu)?;
    Ok(log_likelihood_from_distances(epsilon, &d, outcomes, rho))
}

/// `m - sum_t kappa_t(epsilon)`: the epsilon-gradient of the log-likelihood
/// divided by `rho`. Strictly decreasing in `epsilon`.
pub fn score_epsilon(epsilon: f64, distances: &DistanceSequence, outcomes: &OutcomeTrace, rho: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    for (&d, &s) in distances.as_slice().iter().zip(outcomes.as_slice()) {
        // s - kappa, with 1 - kappa taken as logistic(-z) to keep precision.
        let z = rho * (epsilon - d);
        acc.add(if s { logistic(-z) } else { -logistic(z) });
    }
    acc.value()
}

/// Derivative of [`score_epsilon`]: `-rho * sum_t kappa_t (1 - kappa_t)`.
pub fn curvature_epsilon(epsilon: f64, distances: &DistanceSequence, rho: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    for &d in distances.as_slice() {
        let z = rho * (epsilon - d);
        acc.add(logistic(z) * logistic(-z));
    }
    -rho * acc.value()
}

/// A validated observation `(x0, schedule, outcomes)` with likelihood helpers.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x0: OpinionState,
    pub schedule: InteractionSchedule,
    pub outcomes: OutcomeTrace,
}

impl Observation {
    pub fn new(x0: OpinionState, schedule: InteractionSchedule, outcomes: OutcomeTrace) -> Result<Self> {
        check_aligned(&schedule, &outcomes)?;
        check_state_fits(&x0, &schedule)?;
        Ok(Observation {
            x0,
            schedule,
            outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.schedule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedule.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.outcomes.successes()
    }

    /// Distances replayed under `mu`. `mu` must already be in `[0, 1/2]`.
    pub fn distances(&self, mu: f64) -> DistanceSequence {
        debug_assert!((0.0..=0.5).contains(&mu));
        replay_distances(&self.x0.opinions, self.schedule.pairs(), self.outcomes.as_slice(), mu)
    }

    /// Negative log-likelihood with a full replay under `mu`.
    pub fn nll(&self, epsilon: f64, mu: f64, rho: f64) -> f64 {
        -log_likelihood_from_distances(epsilon, &self.distances(mu), &self.outcomes, rho)
    }
}

/// Negative log-likelihood over an `epsilon x mu` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NllSurface {
    pub eps_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    /// Row-major: `values[a * mu_grid.len() + b]` is at `(eps_grid[a], mu_grid[b])`.
    pub values: Vec<f64>,
}

/// A grid point that is no larger than any of its (up to 8) neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum {
    pub eps_index: usize,
    pub mu_index: usize,
    pub epsilon: f64,
    pub mu: f64,
    pub nll: f64,
}

impl NllSurface {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.mu_grid.len() + b]
    }

    /// Smallest grid value and its location.
    pub fn global_minimum(&self) -> GridMinimum {
        let (idx, &nll) = self
            .values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("surface is non-empty");
        let (a, b) = (idx / self.mu_grid.len(), idx % self.mu_grid.len());
        GridMinimum {
            eps_index: a,
            mu_index: b,
            epsilon: self.eps_grid[a],
            mu: self.mu_grid[b],
            nll,
        }
    }

    /// Every grid cell whose value is `<=` all of its 8-neighbours (fewer on
    /// the border), in row-major order.
    pub fn local_minima(&self) -> Vec<GridMinimum> {
        let (na, nb) = (self.eps_grid.len(), self.mu_grid.len());
        let mut out = Vec::new();
        for a in 0..na {
            for b in 0..nb {
                let v = self.get(a, b);
                let mut is_min = true;
                'nbr: for da in -1i64..=1 {
                    for db in -1i64..=1 {
                        if da == 0 && db == 0 {
                            continue;
                        }
                        let (aa, bb) = (a as i64 + da, b as i64 + db);
                        if aa < 0 || bb < 0 || aa >= na as i64 || bb >= nb as i64 {
                            continue;
                        }
                        if self.get(aa as usize, bb as usize) < v {
                            is_min = false;
                            break 'nbr;
                        }
                    }
                }
                if is_min {
                    out.push(GridMinimum {
                        eps_index: a,
                        mu_index: b,
                        epsilon: self.eps_grid[a],
                        mu: self.mu_grid[b],
                        nll: v,
                    });
                }
            }
        }
        out
    }

    /// Wide CSV: the header row is `epsilon\mu` followed by the mu grid; each
    /// body row starts with its epsilon value.
    pub fn write_wide_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            write!(w, "epsilon\\mu")?;
            for &mu in &self.mu_grid {
                write!(w, ",{}", fmt_f64(mu))?;
            }
            writeln!(w)?;
            for (a, &eps) in self.eps_grid.iter().enumerate() {
                write!(w, "{}", fmt_f64(eps))?;
                for b in 0..self.mu_grid.len() {
                    write!(w, ",{}", fmt_f64(self.get(a, b)))?;
                }
                writeln!(w)?;
            }
            Ok(())
        })
    }

    /// Long CSV with columns `epsilon,mu,nll`.
    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            writeln!(w, "epsilon,mu,nll")?;
            for (a, &eps) in self.eps_grid.iter().enumerate() {
                for (b, &mu) in self.mu_grid.iter().enumerate() {
                    writeln!(w, "{},{},{}", fmt_f64(eps), fmt_f64(mu), fmt_f64(self.get(a, b)))?;
                }
            }
            Ok(())
        })
    }
}

/// Evaluates `-log_likelihood` on every `(epsilon, mu)` grid point. Each mu
/// column is replayed once and reused for all epsilon rows.
pub fn nll_surface(
    x0: &OpinionState,
    schedule: &InteractionSchedule,
    outcomes: &OutcomeTrace,
    rho: f64,
    eps_grid: &[f64],
    mu_grid: &[f64],
) -> Result<NllSurface> {
    if eps_grid.is_empty() || mu_grid.is_empty() {
        return Err(Error::domain("grid", "epsilon and mu grids must be non-empty"));
    }
    check_rho(rho)?;
    eps_grid.iter().try_for_each(|&e| check_epsilon(e))?;
    mu_grid.iter().try_for_each(|&m| check_mu(m))?;
    check_aligned(schedule, outcomes)?;
    check_state_fits(x0, schedule)?;

    let columns: Vec<DistanceSequence> = mu_grid
        .iter()
        .map(|&mu| replay_distances(&x0.opinions, schedule.pairs(), outcomes.as_slice(), mu))
        .collect();
    let mut values = Vec::with_capacity(eps_grid.len() * mu_grid.len());
    for &eps in eps_grid {
        for d in &columns {
            values.push(-log_likelihood_from_distances(eps, d, outcomes, rho));
        }
    }
    Ok(NllSurface {
        eps_grid: eps_grid.to_vec(),
        mu_grid: mu_grid.to_vec(),
        values,
    })
}
