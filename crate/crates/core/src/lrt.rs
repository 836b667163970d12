//! Likelihood-ratio test of the rank-1 mean restriction against the saturated model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_restricted, fit_saturated, FitOptions, RestrictedFit, SaturatedFit};
use crate::model::IndicatorDataset;
use crate::special::gamma_q;

/// Variances at or below this fraction of the data's mean square count as zero.
pub const ZERO_VARIANCE: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub sigma2_restricted: f64,
    pub sigma2_full: f64,
    pub m_obs: usize,
    pub n_indicators: usize,
    pub n_groups: usize,
    /// All cell means were zero and the restricted fit is identically zero.
    pub degenerate: bool,
    /// Both residual variances vanished: noiseless rank-1 data.
    pub exact_fit: bool,
    pub fit: RestrictedFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub label: String,
    pub result: TestResult,
    pub bonferroni_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedResult {
    pub per_stratum: Vec<StratumResult>,
    pub combined_statistic: f64,
    pub combined_df: usize,
    pub combined_p: f64,
}

/// `np - (n + p - 1) = (n - 1)(p - 1)`
pub fn degrees_of_freedom(n: usize, p: usize) -> usize {
    n.saturating_sub(1) * p.saturating_sub(1)
}

/// Upper tail of the χ² distribution, `Q(df/2, x/2)`.
pub fn chi_sq_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    gamma_q(0.5 * df as f64, 0.5 * x.max(0.0))
}

fn is_zero_variance(sigma2: f64, scale: f64) -> bool {
    sigma2 <= ZERO_VARIANCE * scale
}

/// `2 M (log sigma_r - log sigma_f) = M log(sigma2_r / sigma2_f)`.
///
/// Returns 0 for noiseless rank-1 data, where both variances vanish.
pub fn lrt_statistic(
    restricted: &RestrictedFit,
    saturated: &SaturatedFit,
    m_obs: usize,
) -> Result<f64> {
    let scale = saturated.mean_square;
    if is_zero_variance(saturated.sigma2_full, scale) {
        return if is_zero_variance(restricted.sigma2_restricted, scale) {
            Ok(0.0)
        } else {
            Err(Error::ZeroFullVariance)
        };
    }
    let statistic = m_obs as f64 * (restricted.sigma2_restricted / saturated.sigma2_full).ln();
    // the restricted fit cannot beat the cell means; negative values are roundoff
    Ok(statistic.max(0.0))
}

pub fn run_test(dataset: &IndicatorDataset, options: &FitOptions) -> Result<TestResult> {
    let (n, p) = (dataset.n_indicators(), dataset.n_groups());
    if p < 2 {
        return Err(Error::InsufficientGroups(p));
    }
    if n < 2 {
        return Err(Error::InsufficientIndicators(n));
    }
    let saturated = fit_saturated(dataset)?;
    let restricted = fit_restricted(dataset, options)?;
    let m_obs = dataset.m_obs();
    let statistic = lrt_statistic(&restricted, &saturated, m_obs)?;
    let df = degrees_of_freedom(n, p);
    let scale = saturated.mean_square;
    Ok(TestResult {
        statistic,
        df,
        p_value: chi_sq_sf(statistic, df),
        sigma2_restricted: restricted.sigma2_restricted,
        sigma2_full: saturated.sigma2_full,
        m_obs,
        n_indicators: n,
        n_groups: p,
        degenerate: restricted.degenerate,
        exact_fit: is_zero_variance(saturated.sigma2_full, scale)
            && is_zero_variance(restricted.sigma2_restricted, scale),
        fit: restricted,
    })
}

/// Tests within each stratum and sums the independent χ² statistics.
pub fn run_stratified(
    dataset: &IndicatorDataset,
    options: &FitOptions,
) -> Result<StratifiedResult> {
    let strata = dataset.strata().ok_or(Error::MissingStrata)?;
    let names = dataset.stratum_names();
    let rows: Vec<Vec<usize>> = (0..names.len())
        .map(|s| (0..strata.len()).filter(|&k| strata[k] == s).collect())
        .collect();

    let results: Vec<Result<TestResult>> = rows
        .par_iter()
        .zip(names.par_iter())
        .map(|(rows, label)| {
            let too_small = |reason: String| Error::StratumTooSmall {
                label: label.clone(),
                reason,
            };
            let part = dataset.subset(rows).map_err(|e| too_small(e.to_string()))?;
            run_test(&part, options).map_err(|e| match e {
                Error::EmptyCell { .. } => too_small(e.to_string()),
                other => other,
            })
        })
        .collect();

    let s = names.len() as f64;
    let mut per_stratum = Vec::with_capacity(names.len());
    for (label, result) in names.iter().zip(results) {
        let result = result?;
        per_stratum.push(StratumResult {
            label: label.clone(),
            bonferroni_p: (s * result.p_value).min(1.0),
            result,
        });
    }
    let combined_statistic = per_stratum.iter().map(|r| r.result.statistic).sum();
    let combined_df = per_stratum.iter().map(|r| r.result.df).sum();
    Ok(StratifiedResult {
        combined_p: chi_sq_sf(combined_statistic, combined_df),
        combined_statistic,
        combined_df,
        per_stratum,
    })
}
