use super::plan::{ExperimentPlan, Scenario};
use crate::error::{Error, Result};
use crate::rasch::{analytic_bias, bias_bound, equally_spaced_items, snap_to_item, KappaSequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoSweepPoint {
    pub rho: f64,
    pub bias: f64,
    /// `1 / (8 rho items)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoSweepResult {
    /// The ability used, snapped to the nearest item.
    pub epsilon: f64,
    pub items: usize,
    pub points: Vec<RhoSweepPoint>,
}

impl RhoSweepResult {
    /// True if `|bias|` strictly decreases along the grid.
    pub fn is_monotone_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].bias.abs() < w[0].bias.abs())
    }
}

/// Analytic bias for `items` equally spaced difficulties on `[0, 1]`,
/// with the ability `eps_true[0]` moved to the nearest item, over the plan's
/// rho grid.
///
/// Snapping matters at large rho: an ability between two items leaves a
/// one-sided residue that grows with rho instead of vanishing.
pub fn run_rho_sweep(plan: &ExperimentPlan) -> Result<RhoSweepResult> {
    if plan.scenario != Scenario::RhoSweep {
        return Err(Error::domain("scenario", format!("expected rho_sweep, plan is {}", plan.scenario.name())));
    }
    plan.validate()?;
    let grid = plan
        .rho_grid
        .as_ref()
        .ok_or_else(|| Error::domain("rho_grid", "rho_sweep needs a rho grid"))?;
    let items = equally_spaced_items(plan.items)?;
    let epsilon = snap_to_item(&items, plan.eps_true[0]);
    let points = grid
        .values()
        .into_iter()
        .map(|rho| {
            let kappas = KappaSequence::from_distances(epsilon, &items, rho);
            Ok(RhoSweepPoint {
                rho,
                bias: analytic_bias(&kappas, rho)?,
                bound: bias_bound(rho, plan.items),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RhoSweepResult {
        epsilon,
        items: plan.items,
        points,
    })
}
