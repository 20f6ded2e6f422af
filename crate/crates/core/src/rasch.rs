//! Closed-form small-sample diagnostics for the epsilon estimator.
//!
//! The success law `sigmoid(rho (eps - d_t))` is a one-parameter logistic
//! item-response model for a single examinee: the ability is `eps`, the item
//! difficulties are the distances `d_t`, every discrimination equals `rho`
//! and there is no guessing parameter. Lord's results for that model give,
//! with `kappa_t = sigmoid(rho (eps - d_t))` and `w_t = kappa_t (1 - kappa_t)`,
//!
//! ```text
//! I        = rho^2 * sum w_t
//! Var(eps) = 1 / I
//! Bias     = sum w_t (kappa_t - 1/2) / (rho * (sum w_t)^2)
//! ```
//!
//! Terms are evaluated from the logit `z_t = rho (eps - d_t)` as
//! `w = sech^2(z/2) / 4` and `kappa - 1/2 = tanh(z/2) / 2`, which are exactly
//! even and odd in `z`; symmetric items then cancel exactly instead of
//! leaving rounding residue.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::DistanceSequence;
use crate::model::check_rho;
use crate::numeric::{linspace, logistic, stable_sum};

/// Logits are clipped to this magnitude; `kappa` is then within about
/// `1e-304` of 0 or 1 and every weight stays strictly positive.
pub const SATURATION_LOGIT: f64 = 700.0;

/// Success probabilities `kappa_t`, held as logits.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaSequence {
    logits: Vec<f64>,
    saturated: usize,
}

impl KappaSequence {
    /// `kappa_t = sigmoid(rho (epsilon - d_t))`.
    pub fn from_distances(epsilon: f64, distances: &DistanceSequence, rho: f64) -> Self {
        Self::from_logits(distances.as_slice().iter().map(|&d| rho * (epsilon - d)).collect())
    }

    /// From probabilities in `[0, 1]`; exact 0 or 1 are clipped.
    pub fn from_kappas(kappas: &[f64]) -> Result<Self> {
        let logits = kappas
            .iter()
            .map(|&k| {
                if !(0.0..=1.0).contains(&k) {
                    return Err(Error::domain("kappa", format!("{k} is outside [0, 1]")));
                }
                Ok(k.ln() - (1.0 - k).ln())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_logits(logits))
    }

    fn from_logits(mut logits: Vec<f64>) -> Self {
        let mut saturated = 0;
        for z in &mut logits {
            if z.abs() > SATURATION_LOGIT {
                saturated += 1;
                *z = z.clamp(-SATURATION_LOGIT, SATURATION_LOGIT);
            }
        }
        KappaSequence { logits, saturated }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    /// Entries that had to be clipped away from 0 or 1.
    pub fn saturated(&self) -> usize {
        self.saturated
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.logits.iter().map(|&z| logistic(z)).collect()
    }

    /// `kappa -> 1 - kappa` for every entry.
    pub fn complement(&self) -> Self {
        KappaSequence {
            logits: self.logits.iter().map(|z| -z).collect(),
            saturated: self.saturated,
        }
    }

    fn non_empty(&self) -> Result<()> {
        if self.logits.is_empty() {
            Err(Error::domain("kappas", "empty sequence"))
        } else {
            Ok(())
        }
    }

    /// `sum kappa (1 - kappa)`.
    fn weight_sum(&self) -> f64 {
        stable_sum(self.logits.iter().map(|&z| weight(z)))
    }

    /// `sum kappa (1 - kappa) (kappa - 1/2)`.
    fn skew_sum(&self) -> f64 {
        stable_sum(self.logits.iter().map(|&z| weight(z) * 0.5 * (0.5 * z).tanh()))
    }
}

#[inline]
fn weight(z: f64) -> f64 {
    let c = (0.5 * z).cosh();
    0.25 / (c * c)
}

/// Which closed form to use for the bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasFormula {
    /// `sum w (kappa - 1/2) / (rho (sum w)^2)`, the direct specialization of
    /// Lord's bias formula.
    #[default]
    Lord,
    /// `sum w (kappa - 1/2) / (rho sum w)`. Kept for comparison only; it does
    /// not follow from Lord's formula.
    UnsquaredDenominator,
}

/// `rho^2 * sum kappa (1 - kappa)`.
pub fn fisher_information(kappas: &KappaSequence, rho: f64) -> Result<f64> {
    kappas.non_empty()?;
    check_rho(rho)?;
    Ok(rho * rho * kappas.weight_sum())
}

/// Closed-form small-sample bias of the epsilon estimator.
pub fn analytic_bias(kappas: &KappaSequence, rho: f64) -> Result<f64> {
    analytic_bias_with(kappas, rho, BiasFormula::Lord)
}

pub fn analytic_bias_with(kappas: &KappaSequence, rho: f64, formula: BiasFormula) -> Result<f64> {
    kappas.non_empty()?;
    check_rho(rho)?;
    let w = kappas.weight_sum();
    let skew = kappas.skew_sum();
    Ok(match formula {
        BiasFormula::Lord => skew / (rho * w * w),
        BiasFormula::UnsquaredDenominator => skew / (rho * w),
    })
}

/// Asymptotic variance `1 / I`.
pub fn analytic_variance(kappas: &KappaSequence, rho: f64) -> Result<f64> {
    Ok(1.0 / fisher_information(kappas, rho)?)
}

/// `1 / (8 rho T)`.
pub fn bias_bound(rho: f64, t: usize) -> f64 {
    1.0 / (8.0 * rho * t as f64)
}

/// `1 / (2 rho sum kappa (1 - kappa))`, which strictly dominates `|Bias|` for
/// the Lord form because every `|kappa - 1/2| < 1/2`.
pub fn bias_magnitude_limit(kappas: &KappaSequence, rho: f64) -> Result<f64> {
    kappas.non_empty()?;
    check_rho(rho)?;
    Ok(1.0 / (2.0 * rho * kappas.weight_sum()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub bias: f64,
    pub variance: f64,
    /// `1 / (8 rho T)`.
    pub bound: f64,
    pub fisher_information: f64,
    /// Whether `|bias| < bound` holds for this sequence.
    pub within_bound: bool,
    pub formula: BiasFormula,
    pub saturated: usize,
}

pub fn bias_variance_report(kappas: &KappaSequence, rho: f64, formula: BiasFormula) -> Result<BiasVarianceReport> {
    let bias = analytic_bias_with(kappas, rho, formula)?;
    let info = fisher_information(kappas, rho)?;
    let bound = bias_bound(rho, kappas.len());
    Ok(BiasVarianceReport {
        bias,
        variance: 1.0 / info,
        bound,
        fisher_information: info,
        within_bound: bias.abs() < bound,
        formula,
        saturated: kappas.saturated(),
    })
}

/// `n` item difficulties equally spaced on `[0, 1]`.
pub fn equally_spaced_items(n: usize) -> Result<DistanceSequence> {
    if n < 2 {
        return Err(Error::domain("items", format!("need at least 2 items, got {n}")));
    }
    DistanceSequence::new(linspace(0.0, 1.0, n))
}

/// The item closest to `epsilon`, so that the item set is symmetric about
/// the ability as far as the range allows.
pub fn snap_to_item(items: &DistanceSequence, epsilon: f64) -> f64 {
    items
        .as_slice()
        .iter()
        .copied()
        .min_by(|a, b| (a - epsilon).abs().total_cmp(&(b - epsilon).abs()))
        .unwrap_or(epsilon)
}
