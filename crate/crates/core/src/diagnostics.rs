//! Descriptive checks of the proportionality `lambda_i E(X_j | z) = lambda_j E(X_i | z)`.
//!
//! Loadings are supplied by the caller or taken from a restricted fit's
//! `alpha` ("implied" loadings). Nothing here estimates a factor model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{RestrictedFit, ZERO_NORM};
use crate::model::CellMeans;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ReliabilityVector(Vec<f64>);

impl ReliabilityVector {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidReliability("empty".into()));
        }
        if let Some(i) = lambda
            .iter()
            .position(|l| !l.is_finite() || l.abs() < ZERO_NORM)
        {
            return Err(Error::InvalidReliability(format!(
                "entry {} is {} (must be finite and nonzero)",
                i + 1,
                lambda[i]
            )));
        }
        Ok(Self(lambda))
    }

    /// Loadings implied by a restricted fit, proportional to `alpha`.
    pub fn implied(fit: &RestrictedFit) -> Result<Self> {
        Self::new(fit.alpha.clone())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ReliabilityVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ReliabilityVector> for Vec<f64> {
    fn from(r: ReliabilityVector) -> Self {
        r.0
    }
}

fn check_dims(cell_means: &CellMeans, lambda: &ReliabilityVector) -> Result<()> {
    if cell_means.n_indicators() != lambda.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} loadings for {} indicators",
            lambda.len(),
            cell_means.n_indicators()
        )));
    }
    Ok(())
}

/// `(mean[i][z] - mean[i][z_ref]) / lambda_i`. Columns are constant across `i`
/// when the means are proportional to `lambda`.
pub fn scaled_contrasts(
    cell_means: &CellMeans,
    lambda: &ReliabilityVector,
    z_ref: usize,
) -> Result<Vec<Vec<f64>>> {
    check_dims(cell_means, lambda)?;
    if z_ref >= cell_means.n_groups() {
        return Err(Error::InvalidArgument(format!(
            "reference group {z_ref} out of range"
        )));
    }
    Ok(cell_means
        .means
        .iter()
        .zip(lambda.as_slice())
        .map(|(row, l)| row.iter().map(|m| (m - row[z_ref]) / l).collect())
        .collect())
}

/// `residuals[i][j][z] = lambda_i * mean[j][z] - lambda_j * mean[i][z]`.
pub fn theorem1_residuals(
    cell_means: &CellMeans,
    lambda: &ReliabilityVector,
) -> Result<Vec<Vec<Vec<f64>>>> {
    check_dims(cell_means, lambda)?;
    let lam = lambda.as_slice();
    let mu = &cell_means.means;
    let n = lam.len();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        vec![0.0; cell_means.n_groups()]
                    } else {
                        mu[j]
                            .iter()
                            .zip(&mu[i])
                            .map(|(mj, mi)| lam[i] * mj - lam[j] * mi)
                            .collect()
                    }
                })
                .collect()
        })
        .collect())
}

/// `alpha_i / alpha_ref`: estimates of `lambda_i / lambda_ref` under the rank-1 restriction.
pub fn implied_reliability_ratios(fit: &RestrictedFit, ref_indicator: usize) -> Result<Vec<f64>> {
    let reference = *fit.alpha.get(ref_indicator).ok_or_else(|| {
        Error::InvalidArgument(format!("reference indicator {ref_indicator} out of range"))
    })?;
    if reference.abs() < ZERO_NORM {
        return Err(Error::ZeroReference {
            indicator: ref_indicator,
        });
    }
    Ok(fit.alpha.iter().map(|a| a / reference).collect())
}
