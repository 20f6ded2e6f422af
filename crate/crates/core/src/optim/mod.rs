//! Scalar root finding and derivative-free minimization.

mod nelder_mead;
mod roots;

pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadResult};
pub use roots::{safeguarded_secant, Bracket, RootOptions, RootResult};
