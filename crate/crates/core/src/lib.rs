//! Simulation and inference for the stochastic bounded confidence model.
//!
//! Two agents with opinions in `[-1, 1]` interact with probability
//! `sigmoid(rho * (epsilon - |x_i - x_j|))`; on success each moves a fraction
//! `mu` of the way towards the other. The crate simulates the process,
//! evaluates the exact likelihood of an observed outcome trace, estimates
//! `epsilon` and `mu` by maximum likelihood, and provides closed-form bias and
//! variance diagnostics for the `epsilon` estimator together with the Monte
//! Carlo experiments that exercise all of it.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod rasch;
pub mod simulator;

pub use error::{Error, Result};
pub use estimators::{
    estimate_epsilon, estimate_joint, estimate_mu, Estimate, EstimateKind, EstimateReport, Existence,
};
pub use likelihood::{log_likelihood, nll_surface, score_epsilon, Observation};
pub use model::{InteractionSchedule, ModelParams, OpinionState, OutcomeTrace};
pub use simulator::{replay, simulate, SimulationConfig, Trace};
