//! Robust regression with S and MM estimators.
//!
//! * [`rho`]: bounded ρ-functions (bisquare) and a numerical log-concavity check.
//! * [`mscale`]: the M-scale of a residual vector.
//! * [`model`]: response functions `g(x, β)`, datasets, CSV ingestion.
//! * [`estimators`]: S, MM and joint fits for regression and location.
//! * [`inference`]: estimating equations, their Jacobian, influence
//!   functions and the sandwich covariance.
//! * [`montecarlo`]: simulation harness checking consistency, asymptotic
//!   normality, the influence-function expansion and robustness.

pub mod error;
pub mod estimators;
pub mod inference;
pub mod model;
pub mod montecarlo;
pub mod mscale;
pub mod rho;

pub use error::{Error, Result};
pub use estimators::{fit, fit_location, fit_mm, fit_s, FitConfig, FitResult};
pub use model::{
    exp_model, linear_model, location_model, AugmentedParam, Dataset, RegressionModel,
};
pub use mscale::{mscale, MScaleConfig};
pub use rho::RhoFunction;
