//! Likelihood-ratio test that can reject the structural interpretation of a
//! univariate latent factor model.
//!
//! Under the structural model every indicator depends on a discrete variable
//! `Z` only through the latent, which forces the `n x p` matrix of
//! indicator-by-group means to be rank one: `E(X_i | Z = z) = alpha_i * beta_z`.
//! [`lrt::run_test`] fits that restricted model by alternating least squares,
//! compares it to the saturated cell-means model, and refers the statistic to
//! χ² with `(n - 1)(p - 1)` degrees of freedom.

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod lrt;
pub mod model;
pub mod montecarlo;
pub mod oracle;
pub mod simulate;
pub mod special;

pub use diagnostics::ReliabilityVector;
pub use error::{Error, Result};
pub use estimator::{FitOptions, RestrictedFit, SaturatedFit};
pub use lrt::{StratifiedResult, TestResult};
pub use model::{CellMeans, IndicatorDataset, ValidationReport};
pub use montecarlo::CalibrationResult;
pub use simulate::{Scenario, ScenarioSpec};
