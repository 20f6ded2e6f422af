use super::battery::{observe, require, work_items};
use super::plan::{ExperimentPlan, Scenario};
use super::run_indexed;
use crate::error::{Error, Result};
use crate::likelihood::{nll_surface, GridMinimum, NllSurface};

/// The NLL grid of one simulated trace and its local-minima census.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCell {
    pub cell_id: usize,
    pub n: usize,
    pub t: usize,
    pub eps_true: f64,
    pub mu_true: f64,
    pub q: usize,
    pub k: usize,
    pub surface: NllSurface,
    /// Grid points no larger than any of their neighbours.
    pub minima: Vec<GridMinimum>,
    pub global_minimum: GridMinimum,
    /// NLL at the true parameters (which need not lie on the grid).
    pub nll_at_truth: f64,
}

impl SurfaceCell {
    pub fn n_minima(&self) -> usize {
        self.minima.len()
    }

    /// Minima away from the grid border.
    pub fn interior_minima(&self) -> usize {
        let (na, nb) = (self.surface.eps_grid.len(), self.surface.mu_grid.len());
        self.minima
            .iter()
            .filter(|m| m.eps_index > 0 && m.mu_index > 0 && m.eps_index + 1 < na && m.mu_index + 1 < nb)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceScanResult {
    pub rho: f64,
    pub cells: Vec<SurfaceCell>,
}

impl SurfaceScanResult {
    /// Cells whose census finds `count` local minima.
    pub fn cells_with_minima(&self, count: usize) -> usize {
        self.cells.iter().filter(|c| c.n_minima() == count).count()
    }
}

/// One NLL grid per `(cell, q, k)` trace of the plan, in plan order.
pub fn run_surface_scan(plan: &ExperimentPlan, workers: usize) -> Result<SurfaceScanResult> {
    let master = require(plan, Scenario::SurfaceScan)?;
    let grids = plan
        .grids
        .as_ref()
        .ok_or_else(|| Error::domain("grids", "surface_scan needs epsilon and mu grids"))?;
    let eps_grid = grids.epsilon.values();
    let mu_grid = grids.mu.values();
    let items = work_items(plan);
    let cells = run_indexed(items.len(), workers, |idx| {
        let (cell, q, k) = items[idx];
        let obs = observe(plan, master, &cell, q, k);
        let surface = nll_surface(&obs.x0, &obs.schedule, &obs.outcomes, plan.rho, &eps_grid, &mu_grid)?;
        Ok(SurfaceCell {
            cell_id: idx,
            n: cell.n,
            t: cell.t,
            eps_true: cell.eps,
            mu_true: cell.mu,
            q,
            k,
            minima: surface.local_minima(),
            global_minimum: surface.global_minimum(),
            nll_at_truth: obs.nll(cell.eps, cell.mu, plan.rho),
            surface,
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceScanResult { rho: plan.rho, cells })
}
