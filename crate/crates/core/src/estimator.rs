//! Restricted (rank-1 bilinear) and saturated mean models.
//!
//! The restricted model is `E(X_i | Z = z) = alpha_i * beta_z`. It is fitted by
//! alternating exact conditional least-squares updates: `beta` given `alpha`,
//! then `alpha` given `beta`, until the residual mean square changes by less
//! than `tol`. All sums run over non-missing entries; the cell sums and counts
//! are sufficient statistics for both updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cell_means, is_missing, CellMeans, CellSums, IndicatorDataset};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 500;
/// Mean vectors (and loadings) with Euclidean norm below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Zero-based group used to initialize `alpha`; `None` selects one.
    pub ref_group: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            ref_group: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedFit {
    /// Normalized so that `|alpha| = sqrt(n)` and the first entry of largest magnitude is positive.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2_restricted: f64,
    pub iterations: usize,
    /// Residual mean square after each full iteration.
    pub mse_trace: Vec<f64>,
    pub converged: bool,
    /// Every cell mean was zero; `alpha` and `beta` are all zero.
    pub degenerate: bool,
    /// Group whose means initialized `alpha`.
    pub ref_group: Option<usize>,
}

impl RestrictedFit {
    /// `alpha_i * beta_z` as an `n x p` matrix.
    pub fn fitted_products(&self) -> Vec<Vec<f64>> {
        self.alpha
            .iter()
            .map(|a| self.beta.iter().map(|b| a * b).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturatedFit {
    pub cell_means: CellMeans,
    pub sigma2_full: f64,
    /// Mean of the squared observations; the scale against which variances are judged to be zero.
    pub mean_square: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn group_means(cells: &CellSums, group: usize) -> Result<Vec<f64>> {
    cells
        .sums
        .iter()
        .zip(&cells.counts)
        .enumerate()
        .map(|(i, (s, c))| {
            if c[group] == 0 {
                Err(Error::EmptyCell {
                    indicator: i,
                    group,
                })
            } else {
                Ok(s[group] / c[group] as f64)
            }
        })
        .collect()
}

/// Initial `alpha`: the indicator means of `ref_group`.
pub fn init_alpha(dataset: &IndicatorDataset, ref_group: usize) -> Result<Vec<f64>> {
    if ref_group >= dataset.n_groups() {
        return Err(Error::InvalidArgument(format!(
            "reference group {ref_group} out of range"
        )));
    }
    let alpha = group_means(&dataset.cell_sums(), ref_group)?;
    if norm(&alpha) < ZERO_NORM {
        return Err(Error::DegenerateInitialization { group: ref_group });
    }
    Ok(alpha)
}

/// Candidate reference groups: largest subject count first, ties by lowest index.
fn ref_group_order(dataset: &IndicatorDataset, preferred: Option<usize>) -> Vec<usize> {
    let sizes = dataset.group_sizes();
    let mut order: Vec<usize> = (0..dataset.n_groups()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    if let Some(g) = preferred {
        order.retain(|&z| z != g);
        order.insert(0, g);
    }
    order
}

/// The default reference group, or `AllMeansZero` when no group has a nonzero mean vector.
pub fn choose_ref_group(dataset: &IndicatorDataset) -> Result<usize> {
    let cells = dataset.cell_sums();
    for g in ref_group_order(dataset, None) {
        if let Ok(means) = group_means(&cells, g) {
            if norm(&means) >= ZERO_NORM {
                return Ok(g);
            }
        }
    }
    Err(Error::AllMeansZero)
}

fn beta_step(alpha: &[f64], cells: &CellSums) -> Result<Vec<f64>> {
    let p = cells.counts.first().map_or(0, Vec::len);
    (0..p)
        .map(|z| {
            let (num, den) = alpha
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(num, den), (i, &a)| {
                    (
                        num + a * cells.sums[i][z],
                        den + a * a * cells.counts[i][z] as f64,
                    )
                });
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(Error::ZeroBetaDenominator { group: z })
            }
        })
        .collect()
}

fn alpha_step(beta: &[f64], cells: &CellSums) -> Result<Vec<f64>> {
    cells
        .sums
        .iter()
        .zip(&cells.counts)
        .enumerate()
        .map(|(i, (sums, counts))| {
            let (num, den) = beta
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(num, den), (z, &b)| {
                    (num + b * sums[z], den + b * b * counts[z] as f64)
                });
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(Error::ZeroAlphaDenominator { indicator: i })
            }
        })
        .collect()
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} has length {got}, expected {want}"
        )))
    }
}

/// `beta_z = sum_i sum_k alpha_i X_ik [Z_k = z] / sum_i sum_k alpha_i^2 [Z_k = z]` over observed entries.
pub fn update_beta(alpha: &[f64], dataset: &IndicatorDataset) -> Result<Vec<f64>> {
    check_len("alpha", alpha.len(), dataset.n_indicators())?;
    beta_step(alpha, &dataset.cell_sums())
}

/// `alpha_i = sum_k beta_{Z_k} X_ik / sum_k beta_{Z_k}^2` over subjects with `X_i` observed.
pub fn update_alpha(beta: &[f64], dataset: &IndicatorDataset) -> Result<Vec<f64>> {
    check_len("beta", beta.len(), dataset.n_groups())?;
    alpha_step(beta, &dataset.cell_sums())
}

/// `(1/M) sum (X_ik - alpha_i beta_{Z_k})^2` over non-missing entries.
pub fn residual_mean_square(dataset: &IndicatorDataset, alpha: &[f64], beta: &[f64]) -> f64 {
    let mut sse = 0.0;
    let mut m = 0usize;
    for (k, &z) in dataset.groups().iter().enumerate() {
        let b = beta[z];
        for (x, a) in dataset.row(k).iter().zip(alpha) {
            if !is_missing(*x) {
                sse += (x - a * b).powi(2);
                m += 1;
            }
        }
    }
    sse / m as f64
}

fn sample_variance(dataset: &IndicatorDataset) -> f64 {
    let observed = || dataset.values().iter().copied().filter(|x| !is_missing(*x));
    let m = observed().count();
    if m < 2 {
        return f64::INFINITY;
    }
    let mean = observed().sum::<f64>() / m as f64;
    observed().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64
}

/// Rescales `(alpha, beta)` so `|alpha| = sqrt(n)` with a positive leading-magnitude entry.
pub fn normalize(alpha: &mut [f64], beta: &mut [f64]) {
    let a_norm = norm(alpha);
    if a_norm == 0.0 || !a_norm.is_finite() {
        return;
    }
    let lead = alpha.iter().enumerate().fold(
        0,
        |best, (i, a)| if a.abs() > alpha[best].abs() { i } else { best },
    );
    let mut scale = (alpha.len() as f64).sqrt() / a_norm;
    if alpha[lead] < 0.0 {
        scale = -scale;
    }
    alpha.iter_mut().for_each(|a| *a *= scale);
    beta.iter_mut().for_each(|b| *b /= scale);
}

/// Fits the restricted model from an explicit starting `alpha`.
pub fn fit_restricted_from(
    dataset: &IndicatorDataset,
    initial_alpha: Vec<f64>,
    options: &FitOptions,
) -> Result<RestrictedFit> {
    check_len("initial alpha", initial_alpha.len(), dataset.n_indicators())?;
    let cells = dataset.cell_sums();
    if let Some((indicator, group)) = cells.first_empty() {
        return Err(Error::EmptyCell { indicator, group });
    }

    let mut alpha = initial_alpha;
    let mut beta = vec![0.0; dataset.n_groups()];
    let mut trace = Vec::new();
    let mut previous = sample_variance(dataset);
    let mut converged = false;

    for _ in 0..options.max_iter {
        beta = beta_step(&alpha, &cells)?;
        alpha = alpha_step(&beta, &cells)?;
        let mse = residual_mean_square(dataset, &alpha, &beta);
        trace.push(mse);
        if (mse - previous).abs() < options.tol {
            converged = true;
            break;
        }
        previous = mse;
    }

    normalize(&mut alpha, &mut beta);
    let fit = RestrictedFit {
        sigma2_restricted: trace
            .last()
            .copied()
            .unwrap_or_else(|| residual_mean_square(dataset, &alpha, &beta)),
        iterations: trace.len(),
        mse_trace: trace,
        converged,
        degenerate: false,
        ref_group: None,
        alpha,
        beta,
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::NotConverged { fit: Box::new(fit) })
    }
}

pub fn fit_restricted(dataset: &IndicatorDataset, options: &FitOptions) -> Result<RestrictedFit> {
    let cells = dataset.cell_sums();
    if let Some((indicator, group)) = cells.first_empty() {
        return Err(Error::EmptyCell { indicator, group });
    }
    if let Some(g) = options.ref_group {
        if g >= dataset.n_groups() {
            return Err(Error::InvalidArgument(format!(
                "reference group {g} out of range"
            )));
        }
    }

    let start = ref_group_order(dataset, options.ref_group)
        .into_iter()
        .find_map(|g| {
            let means = group_means(&cells, g).ok()?;
            (norm(&means) >= ZERO_NORM).then_some((g, means))
        });

    match start {
        Some((g, alpha)) => {
            let tag = |mut fit: RestrictedFit| {
                fit.ref_group = Some(g);
                fit
            };
            fit_restricted_from(dataset, alpha, options)
                .map(tag)
                .map_err(|e| match e {
                    Error::NotConverged { fit } => Error::NotConverged {
                        fit: Box::new(tag(*fit)),
                    },
                    other => other,
                })
        }
        None => Ok(RestrictedFit {
            alpha: vec![0.0; dataset.n_indicators()],
            beta: vec![0.0; dataset.n_groups()],
            sigma2_restricted: dataset.mean_square(),
            iterations: 0,
            mse_trace: Vec::new(),
            converged: true,
            degenerate: true,
            ref_group: None,
        }),
    }
}

pub fn fit_saturated(dataset: &IndicatorDataset) -> Result<SaturatedFit> {
    let cm = cell_means(dataset)?;
    let mut sse = 0.0;
    let mut m = 0usize;
    for (k, &z) in dataset.groups().iter().enumerate() {
        for (i, x) in dataset.row(k).iter().enumerate() {
            if !is_missing(*x) {
                sse += (x - cm.means[i][z]).powi(2);
                m += 1;
            }
        }
    }
    Ok(SaturatedFit {
        cell_means: cm,
        sigma2_full: sse / m as f64,
        mean_square: dataset.mean_square(),
    })
}
