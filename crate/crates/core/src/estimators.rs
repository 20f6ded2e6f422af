//! Maximum-likelihood estimation of `epsilon`, `mu`, and both jointly.
//!
//! With `mu` known, the epsilon score `m - sum_t kappa_t(eps)` is strictly
//! decreasing, so the estimate is its unique root whenever `0 < m < T`. The
//! `mu` and joint likelihoods have no usable derivative and are minimized with
//! Nelder–Mead on an unconstrained reparametrization of the box
//! `[0, 2] x [0, 1/2]`: `eps = 2 logistic(u)`, `mu = logistic(v) / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{
    distances_for, log_likelihood_from_distances, score_epsilon, DistanceSequence, Observation,
};
use crate::model::{check_epsilon, check_mu, check_rho, InteractionSchedule, OpinionState, OutcomeTrace};
use crate::numeric::logistic;
use crate::optim::{minimize, safeguarded_secant, NelderMeadOptions, RootOptions};

pub const EPSILON_MAX: f64 = 2.0;
pub const MU_MAX: f64 = 0.5;

/// Internal coordinates are clamped to this magnitude; beyond it the
/// parameter map is saturated in double precision.
const INTERNAL_LIMIT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Epsilon,
    Mu,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Existence {
    Interior,
    /// `m = 0`: the likelihood keeps increasing as `epsilon` decreases.
    NonexistentLow,
    /// `m = T`: the likelihood keeps increasing as `epsilon` increases.
    NonexistentHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Epsilon,
    Mu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryHit {
    pub parameter: Parameter,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Estimate {
    Scalar(f64),
    Joint { epsilon: f64, mu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub epsilon: f64,
    pub mu: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimateKind,
    pub estimate: Estimate,
    pub converged: bool,
    /// Score at the unconstrained root (epsilon only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score_residual: Option<f64>,
    /// Unconstrained root of the score; differs from `estimate` only when the
    /// root lies outside `[0, 2]` (epsilon only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub root: Option<f64>,
    pub nll_at_estimate: f64,
    pub iterations: usize,
    pub boundary_hit: Vec<BoundaryHit>,
    pub existence: Existence,
    /// The objective does not vary with the estimated parameter.
    pub flat_objective: bool,
    /// Distinct local minima from the multi-start runs, best first.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub local_minima: Vec<LocalMinimum>,
}

impl EstimateReport {
    pub fn scalar(&self) -> Option<f64> {
        match self.estimate {
            Estimate::Scalar(x) => Some(x),
            Estimate::Joint { .. } => None,
        }
    }

    /// Converged to an interior estimate that exists and is not flat.
    pub fn is_clean_interior(&self) -> bool {
        self.converged
            && self.existence == Existence::Interior
            && self.boundary_hit.is_empty()
            && !self.flat_objective
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonOptions {
    /// Tolerance on `|score|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EpsilonOptions {
    fn default() -> Self {
        EpsilonOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Epsilon MLE with `mu` known.
pub fn estimate_epsilon(
    x0: &OpinionState,
    schedule: &InteractionSchedule,
    outcomes: &OutcomeTrace,
    mu_known: f64,
    rho: f64,
    opts: &EpsilonOptions,
) -> Result<EstimateReport> {
    let distances = distances_for(x0, schedule, outcomes, mu_known)?;
    estimate_epsilon_from_distances(&distances, outcomes, rho, opts)
}

/// Initial root bracket `[min d - 10/rho, max d + 10/rho]`.
pub fn initial_epsilon_bracket(distances: &DistanceSequence, rho: f64) -> (f64, f64) {
    (distances.min() - 10.0 / rho, distances.max() + 10.0 / rho)
}

/// Epsilon MLE from a precomputed distance sequence.
pub fn estimate_epsilon_from_distances(
    distances: &DistanceSequence,
    outcomes: &OutcomeTrace,
    rho: f64,
    opts: &EpsilonOptions,
) -> Result<EstimateReport> {
    check_rho(rho)?;
    if !(opts.tol > 0.0) {
        return Err(Error::domain("tol", "tolerance must be positive"));
    }
    if distances.len() != outcomes.len() {
        return Err(Error::Shape(format!(
            "{} distances but {} outcomes",
            distances.len(),
            outcomes.len()
        )));
    }
    if distances.is_empty() {
        return Err(Error::domain("outcomes", "empty trace"));
    }
    let t = outcomes.len();
    let m = outcomes.successes();
    let score = |e: f64| score_epsilon(e, distances, outcomes, rho);
    let nll = |e: f64| -log_likelihood_from_distances(e, distances, outcomes, rho);

    if m == 0 || m == t {
        let (edge, existence, side) = if m == 0 {
            (0.0, Existence::NonexistentLow, Side::Lower)
        } else {
            (EPSILON_MAX, Existence::NonexistentHigh, Side::Upper)
        };
        return Ok(EstimateReport {
            kind: EstimateKind::Epsilon,
            estimate: Estimate::Scalar(edge),
            converged: false,
            score_residual: Some(score(edge)),
            root: None,
            nll_at_estimate: nll(edge),
            iterations: 0,
            boundary_hit: vec![BoundaryHit {
                parameter: Parameter::Epsilon,
                side,
            }],
            existence,
            flat_objective: false,
            local_minima: Vec::new(),
        });
    }

    let (mut lo, mut hi) = initial_epsilon_bracket(distances, rho);
    let mut width = hi - lo;
    let mut expansions = 0;
    while score(lo) < 0.0 || score(hi) > 0.0 {
        expansions += 1;
        if expansions > 64 {
            return Err(Error::Convergence {
                iterations: expansions,
                message: format!("could not bracket the score root; last bracket [{lo}, {hi}]"),
            });
        }
        if score(lo) < 0.0 {
            lo -= width;
        }
        if score(hi) > 0.0 {
            hi += width;
        }
        width *= 2.0;
    }

    let root = safeguarded_secant(
        score,
        lo,
        hi,
        &RootOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    )?;
    let estimate = root.root.clamp(0.0, EPSILON_MAX);
    let mut boundary_hit = Vec::new();
    if root.root < 0.0 {
        boundary_hit.push(BoundaryHit {
            parameter: Parameter::Epsilon,
            side: Side::Lower,
        });
    } else if root.root > EPSILON_MAX {
        boundary_hit.push(BoundaryHit {
            parameter: Parameter::Epsilon,
            side: Side::Upper,
        });
    }
    Ok(EstimateReport {
        kind: EstimateKind::Epsilon,
        estimate: Estimate::Scalar(estimate),
        converged: root.converged,
        score_residual: Some(root.residual),
        root: Some(root.root),
        nll_at_estimate: nll(estimate),
        iterations: root.iterations,
        boundary_hit,
        existence: Existence::Interior,
        flat_objective: false,
        local_minima: Vec::new(),
    })
}

fn to_epsilon(u: f64) -> f64 {
    EPSILON_MAX * logistic(u.clamp(-INTERNAL_LIMIT, INTERNAL_LIMIT))
}

fn to_mu(v: f64) -> f64 {
    MU_MAX * logistic(v.clamp(-INTERNAL_LIMIT, INTERNAL_LIMIT))
}

fn from_unit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

fn from_epsilon(eps: f64) -> f64 {
    from_unit(eps / EPSILON_MAX)
}

fn from_mu(mu: f64) -> f64 {
    from_unit(mu / MU_MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuOptions {
    pub starts: Vec<f64>,
    pub nelder_mead: NelderMeadOptions,
    /// Estimates within this distance of 0 or 1/2 are flagged as boundary hits.
    pub boundary_tol: f64,
}

impl Default for MuOptions {
    fn default() -> Self {
        MuOptions {
            starts: vec![0.1, 0.25, 0.4],
            nelder_mead: NelderMeadOptions::default(),
            boundary_tol: 1e-6,
        }
    }
}

/// Probe values used to detect an objective that does not depend on `mu`.
const MU_PROBES: [f64; 5] = [0.0, 0.125, 0.25, 0.375, 0.5];

fn is_flat(values: &[f64]) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-12 * (1.0 + lo.abs())
}

fn mu_boundary(mu: f64, tol: f64) -> Option<BoundaryHit> {
    if mu <= tol {
        Some(BoundaryHit {
            parameter: Parameter::Mu,
            side: Side::Lower,
        })
    } else if mu >= MU_MAX - tol {
        Some(BoundaryHit {
            parameter: Parameter::Mu,
            side: Side::Upper,
        })
    } else {
        None
    }
}

fn eps_boundary(eps: f64, tol: f64) -> Option<BoundaryHit> {
    if eps <= tol {
        Some(BoundaryHit {
            parameter: Parameter::Epsilon,
            side: Side::Lower,
        })
    } else if eps >= EPSILON_MAX - tol {
        Some(BoundaryHit {
            parameter: Parameter::Epsilon,
            side: Side::Upper,
        })
    } else {
        None
    }
}

/// Mu MLE with `epsilon` known. Each objective evaluation replays the full
/// trajectory under the candidate `mu`.
pub fn estimate_mu(
    x0: &OpinionState,
    schedule: &InteractionSchedule,
    outcomes: &OutcomeTrace,
    epsilon_known: f64,
    rho: f64,
    opts: &MuOptions,
) -> Result<EstimateReport> {
    check_epsilon(epsilon_known)?;
    check_rho(rho)?;
    if opts.starts.is_empty() {
        return Err(Error::domain("starts", "need at least one start"));
    }
    opts.starts.iter().try_for_each(|&m| check_mu(m))?;
    let obs = Observation::new(x0.clone(), schedule.clone(), outcomes.clone())?;
    estimate_mu_observed(&obs, epsilon_known, rho, opts)
}

pub(crate) fn estimate_mu_observed(
    obs: &Observation,
    epsilon: f64,
    rho: f64,
    opts: &MuOptions,
) -> Result<EstimateReport> {
    let objective = |v: &[f64]| obs.nll(epsilon, to_mu(v[0]), rho);
    let probes: Vec<f64> = MU_PROBES.iter().map(|&m| obs.nll(epsilon, m, rho)).collect();
    let flat = obs.successes() == 0 || is_flat(&probes);

    let mut best: Option<(f64, f64)> = None;
    let mut iterations = 0;
    let mut any_converged = false;
    let mut found = Vec::new();
    for &start in &opts.starts {
        let r = minimize(objective, &[from_mu(start)], &opts.nelder_mead);
        iterations += r.iterations;
        if !r.converged {
            continue;
        }
        any_converged = true;
        let mu = to_mu(r.x[0]);
        found.push(LocalMinimum {
            epsilon,
            mu,
            nll: r.value,
        });
        if best.is_none_or(|(_, v)| r.value < v) {
            best = Some((mu, r.value));
        }
    }
    let Some((mu, nll)) = best.filter(|_| any_converged) else {
        return Err(Error::Convergence {
            iterations,
            message: "no Nelder-Mead start converged for mu".into(),
        });
    };
    Ok(EstimateReport {
        kind: EstimateKind::Mu,
        estimate: Estimate::Scalar(mu),
        converged: !flat,
        score_residual: None,
        root: None,
        nll_at_estimate: nll,
        iterations,
        boundary_hit: mu_boundary(mu, opts.boundary_tol).into_iter().collect(),
        existence: Existence::Interior,
        flat_objective: flat,
        local_minima: distinct_minima(found, 10.0 * opts.nelder_mead.x_tol),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOptions {
    pub eps_starts: Vec<f64>,
    pub mu_starts: Vec<f64>,
    pub nelder_mead: NelderMeadOptions,
    pub boundary_tol: f64,
    /// Hold `mu` at this value and optimize `epsilon` alone.
    pub fixed_mu: Option<f64>,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            eps_starts: vec![0.5, 1.0, 1.5],
            mu_starts: vec![0.1, 0.25, 0.4],
            nelder_mead: NelderMeadOptions::default(),
            boundary_tol: 1e-6,
            fixed_mu: None,
        }
    }
}

/// Joint `(epsilon, mu)` MLE by multi-start Nelder–Mead.
pub fn estimate_joint(
    x0: &OpinionState,
    schedule: &InteractionSchedule,
    outcomes: &OutcomeTrace,
    rho: f64,
    opts: &JointOptions,
) -> Result<EstimateReport> {
    check_rho(rho)?;
    if opts.eps_starts.is_empty() || opts.mu_starts.is_empty() {
        return Err(Error::domain("starts", "need at least one start per coordinate"));
    }
    opts.eps_starts.iter().try_for_each(|&e| check_epsilon(e))?;
    opts.mu_starts.iter().try_for_each(|&m| check_mu(m))?;
    if let Some(m) = opts.fixed_mu {
        check_mu(m)?;
    }
    let obs = Observation::new(x0.clone(), schedule.clone(), outcomes.clone())?;

    let mut found = Vec::new();
    let mut iterations = 0;
    match opts.fixed_mu {
        Some(mu) => {
            let d = obs.distances(mu);
            let objective = |u: &[f64]| -log_likelihood_from_distances(to_epsilon(u[0]), &d, &obs.outcomes, rho);
            for &e in &opts.eps_starts {
                let r = minimize(objective, &[from_epsilon(e)], &opts.nelder_mead);
                iterations += r.iterations;
                if r.converged {
                    found.push(LocalMinimum {
                        epsilon: to_epsilon(r.x[0]),
                        mu,
                        nll: r.value,
                    });
                }
            }
        }
        None => {
            let objective = |p: &[f64]| obs.nll(to_epsilon(p[0]), to_mu(p[1]), rho);
            for &e in &opts.eps_starts {
                for &m in &opts.mu_starts {
                    let r = minimize(objective, &[from_epsilon(e), from_mu(m)], &opts.nelder_mead);
                    iterations += r.iterations;
                    if r.converged {
                        found.push(LocalMinimum {
                            epsilon: to_epsilon(r.x[0]),
                            mu: to_mu(r.x[1]),
                            nll: r.value,
                        });
                    }
                }
            }
        }
    }
    if found.is_empty() {
        return Err(Error::Convergence {
            iterations,
            message: "no Nelder-Mead start converged for (epsilon, mu)".into(),
        });
    }
    let minima = distinct_minima(found, 10.0 * opts.nelder_mead.x_tol);
    let best = minima[0];
    let flat_mu = opts.fixed_mu.is_none() && obs.successes() == 0;
    let mut boundary_hit: Vec<BoundaryHit> = eps_boundary(best.epsilon, opts.boundary_tol).into_iter().collect();
    if opts.fixed_mu.is_none() {
        boundary_hit.extend(mu_boundary(best.mu, opts.boundary_tol));
    }
    Ok(EstimateReport {
        kind: EstimateKind::Joint,
        estimate: Estimate::Joint {
            epsilon: best.epsilon,
            mu: best.mu,
        },
        converged: !flat_mu,
        score_residual: None,
        root: None,
        nll_at_estimate: best.nll,
        iterations,
        boundary_hit,
        existence: Existence::Interior,
        flat_objective: flat_mu,
        local_minima: minima,
    })
}

/// Sorts minima by value and drops any within `sep` (in both coordinates) of
/// a better one already kept.
fn distinct_minima(mut found: Vec<LocalMinimum>, sep: f64) -> Vec<LocalMinimum> {
    found.sort_by(|a, b| a.nll.total_cmp(&b.nll));
    let mut kept: Vec<LocalMinimum> = Vec::new();
    for m in found {
        let duplicate = kept
            .iter()
            .any(|k| (k.epsilon - m.epsilon).abs() <= sep && (k.mu - m.mu).abs() <= sep);
        if !duplicate {
            kept.push(m);
        }
    }
    kept
}
