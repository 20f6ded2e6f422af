use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_epsilon, check_mu, check_rho, DEFAULT_RHO};
use crate::numeric::{linspace, logspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Estimate epsilon with mu known.
    EpsKnownMu,
    /// Estimate mu with epsilon known.
    MuKnownEps,
    Joint,
    RhoSweep,
    SurfaceScan,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::EpsKnownMu => "eps_known_mu",
            Scenario::MuKnownEps => "mu_known_eps",
            Scenario::Joint => "joint",
            Scenario::RhoSweep => "rho_sweep",
            Scenario::SurfaceScan => "surface_scan",
        }
    }
}

/// `points` values from `start` to `stop`, linearly or log-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            logspace(self.start, self.stop, self.points)
        } else {
            linspace(self.start, self.stop, self.points)
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::domain(name, "grid needs finite ends and at least one point"));
        }
        if self.log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(Error::domain(name, "log grid needs positive ends"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrids {
    pub epsilon: GridSpec,
    pub mu: GridSpec,
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

fn default_tol() -> f64 {
    1e-8
}

fn default_items() -> usize {
    2000
}

fn default_qk() -> usize {
    30
}

/// A battery definition. Every combination of `agents x steps x eps_true x
/// mu_true` is a cell; each cell runs `q` initial conditions with `k`
/// replications each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    #[serde(default)]
    pub agents: Vec<usize>,
    #[serde(default)]
    pub steps: Vec<usize>,
    pub eps_true: Vec<f64>,
    #[serde(default)]
    pub mu_true: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_qk")]
    pub q: usize,
    #[serde(default = "default_qk")]
    pub k: usize,
    /// Required; there is no implicit seed.
    pub seed: Option<u64>,
    /// Score tolerance for the epsilon root finder.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<SurfaceGrids>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_grid: Option<GridSpec>,
    /// Number of equally spaced items for the steepness sweep.
    #[serde(default = "default_items")]
    pub items: usize,
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let plan: ExperimentPlan = serde_json::from_str(&text)?;
        Ok(plan)
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::domain("seed", "experiment plans need an explicit seed"))
    }

    pub fn validate(&self) -> Result<()> {
        self.master_seed()?;
        check_rho(self.rho)?;
        if self.eps_true.is_empty() {
            return Err(Error::domain("eps_true", "need at least one value"));
        }
        self.eps_true.iter().try_for_each(|&e| check_epsilon(e))?;
        self.mu_true.iter().try_for_each(|&m| check_mu(m))?;

        if self.scenario == Scenario::RhoSweep {
            let grid = self
                .rho_grid
                .as_ref()
                .ok_or_else(|| Error::domain("rho_grid", "rho_sweep needs a rho grid"))?;
            grid.validate("rho_grid")?;
            grid.values().into_iter().try_for_each(check_rho)?;
            if self.items < 2 {
                return Err(Error::domain("items", "need at least 2 items"));
            }
            return Ok(());
        }

        if self.q < 1 || self.k < 1 {
            return Err(Error::domain("q/k", "need Q >= 1 and K >= 1"));
        }
        if self.agents.is_empty() || self.agents.iter().any(|&n| n < 2) {
            return Err(Error::domain("agents", "need a non-empty list of N >= 2"));
        }
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(Error::domain("steps", "need a non-empty list of T >= 1"));
        }
        if self.mu_true.is_empty() {
            return Err(Error::domain("mu_true", "need at least one value"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("tol", "tolerance must be positive"));
        }
        match (self.scenario, &self.grids) {
            (Scenario::SurfaceScan, None) => {
                return Err(Error::domain("grids", "surface_scan needs epsilon and mu grids"))
            }
            (Scenario::SurfaceScan, Some(g)) => {
                g.epsilon.validate("grids.epsilon")?;
                g.mu.validate("grids.mu")?;
                g.epsilon.values().into_iter().try_for_each(check_epsilon)?;
                g.mu.values().into_iter().try_for_each(check_mu)?;
            }
            (_, Some(_)) => {
                return Err(Error::domain("grids", "grids are only used by surface_scan"))
            }
            (_, None) => {}
        }
        Ok(())
    }

    /// Cells in output order: agents, then steps, then eps_true, then mu_true.
    pub(crate) fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.agents {
            for &t in &self.steps {
                for &eps in &self.eps_true {
                    for &mu in &self.mu_true {
                        out.push(Cell { n, t, eps, mu });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Cell {
    pub n: usize,
    pub t: usize,
    pub eps: f64,
    pub mu: f64,
}
