//! Independent reference solutions for checking the estimator and the χ² tail.
//!
//! [`weighted_rank1`] solves the restricted mean model on the cell-means
//! matrix by a spectral route: with `W[i][z] = mean[i][z] * sqrt(count[z])`,
//! the count-weighted best rank-1 approximation is the leading singular pair
//! of `W`, read off the smaller Gram matrix. The subject-level residual sum of
//! squares of any `(alpha, beta)` splits into the saturated residual sum plus
//! `sum count[i][z] * (mean[i][z] - alpha[i] * beta[z])^2`, so minimizing the
//! second term is the restricted fit. When counts differ across indicators
//! within a group the weighting is no longer a column scaling; the oracle then
//! falls back to dense alternating refinement from random restarts.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CellMeans;

pub const RESTARTS: usize = 32;
const RESTART_SEED: u64 = 0x5eed_0ac1e;
const REFINE_MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Spectral,
    Restarts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFit {
    /// `fitted_products[i][z]`, rank at most one.
    pub fitted_products: Vec<Vec<f64>>,
    /// Count-weighted squared distance between the cell means and the fit.
    pub lack_of_fit: f64,
    pub method: OracleMethod,
}

/// `sum count[i][z] * (mean[i][z] - fitted[i][z])^2`
pub fn weighted_lack_of_fit(cell_means: &CellMeans, fitted: &[Vec<f64>]) -> f64 {
    cell_means
        .means
        .iter()
        .zip(&cell_means.counts)
        .zip(fitted)
        .flat_map(|((m, c), f)| {
            m.iter()
                .zip(c)
                .zip(f)
                .map(|((m, &c), f)| c as f64 * (m - f).powi(2))
        })
        .sum()
}

pub fn weighted_rank1(cell_means: &CellMeans) -> Result<OracleFit> {
    for (i, row) in cell_means.counts.iter().enumerate() {
        if let Some(z) = row.iter().position(|&c| c == 0) {
            return Err(Error::EmptyCell {
                indicator: i,
                group: z,
            });
        }
    }
    let fitted_products = if cell_means.has_balanced_counts() {
        spectral(cell_means)
    } else {
        restarts(cell_means)
    };
    Ok(OracleFit {
        lack_of_fit: weighted_lack_of_fit(cell_means, &fitted_products),
        fitted_products,
        method: if cell_means.has_balanced_counts() {
            OracleMethod::Spectral
        } else {
            OracleMethod::Restarts
        },
    })
}

fn spectral(cell_means: &CellMeans) -> Vec<Vec<f64>> {
    let (n, p) = (cell_means.n_indicators(), cell_means.n_groups());
    let root_counts: Vec<f64> = (0..p)
        .map(|z| (cell_means.counts[0][z] as f64).sqrt())
        .collect();
    let w = DMatrix::from_fn(n, p, |i, z| cell_means.means[i][z] * root_counts[z]);

    let approx = if p <= n {
        let v = leading_eigenvector(&(w.transpose() * &w));
        &w * &v * v.transpose()
    } else {
        let u = leading_eigenvector(&(&w * w.transpose()));
        &u * u.transpose() * &w
    };
    (0..n)
        .map(|i| (0..p).map(|z| approx[(i, z)] / root_counts[z]).collect())
        .collect()
}

/// Unit eigenvector of the largest eigenvalue of a symmetric matrix.
fn leading_eigenvector(gram: &DMatrix<f64>) -> DMatrix<f64> {
    if gram.nrows() == 2 {
        let (a, b, d) = (gram[(0, 0)], gram[(0, 1)], gram[(1, 1)]);
        let top = 0.5 * (a + d) + (0.25 * (a - d).powi(2) + b * b).sqrt();
        // two candidate null vectors of (G - top I); keep the better conditioned one
        let c1 = (b, top - a);
        let c2 = (top - d, b);
        let (x, y) = if c1.0.hypot(c1.1) >= c2.0.hypot(c2.1) {
            c1
        } else {
            c2
        };
        let norm = x.hypot(y);
        return if norm == 0.0 {
            if a >= d {
                DMatrix::from_column_slice(2, 1, &[1.0, 0.0])
            } else {
                DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
            }
        } else {
            DMatrix::from_column_slice(2, 1, &[x / norm, y / norm])
        };
    }
    let eig = SymmetricEigen::new(gram.clone());
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn restarts(cell_means: &CellMeans) -> Vec<Vec<f64>> {
    let (n, p) = (cell_means.n_indicators(), cell_means.n_groups());
    let w = |i: usize, z: usize| cell_means.counts[i][z] as f64;
    let mu = |i: usize, z: usize| cell_means.means[i][z];
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..RESTARTS {
        let mut alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut beta = vec![0.0; p];
        let mut previous = f64::INFINITY;
        for _ in 0..REFINE_MAX_ITER {
            for (z, b) in beta.iter_mut().enumerate() {
                let num: f64 = (0..n).map(|i| w(i, z) * alpha[i] * mu(i, z)).sum();
                let den: f64 = (0..n).map(|i| w(i, z) * alpha[i] * alpha[i]).sum();
                *b = if den > 0.0 { num / den } else { 0.0 };
            }
            for (i, a) in alpha.iter_mut().enumerate() {
                let num: f64 = (0..p).map(|z| w(i, z) * beta[z] * mu(i, z)).sum();
                let den: f64 = (0..p).map(|z| w(i, z) * beta[z] * beta[z]).sum();
                *a = if den > 0.0 { num / den } else { 0.0 };
            }
            let objective: f64 = (0..n)
                .flat_map(|i| (0..p).map(move |z| (i, z)))
                .map(|(i, z)| w(i, z) * (mu(i, z) - alpha[i] * beta[z]).powi(2))
                .sum();
            if previous.is_finite() && previous - objective <= 1e-15 * previous {
                break;
            }
            previous = objective;
        }
        let fitted: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..p).map(|z| alpha[i] * beta[z]).collect())
            .collect();
        let lof = weighted_lack_of_fit(cell_means, &fitted);
        if best.as_ref().is_none_or(|(b, _)| lof < *b) {
            best = Some((lof, fitted));
        }
    }
    best.map(|(_, f)| f).unwrap_or_default()
}

/// Upper χ² tail for even `df` by the finite Poisson sum
/// `exp(-x/2) * sum_{k < df/2} (x/2)^k / k!`, accumulated with compensated summation.
pub fn chi_sq_sf_even(x: f64, df: usize) -> f64 {
    assert!(
        df > 0 && df.is_multiple_of(2),
        "df must be even and positive, got {df}"
    );
    if x <= 0.0 {
        return 1.0;
    }
    let h = 0.5 * x;
    let ln_h = h.ln();
    let mut ln_fact = 0.0;
    let mut sum = 0.0;
    let mut carry = 0.0;
    for k in 0..df / 2 {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let term = (-h + k as f64 * ln_h - ln_fact).exp();
        // Neumaier
        let t = sum + term;
        if sum.abs() >= term.abs() {
            carry += (sum - t) + term;
        } else {
            carry += (term - t) + sum;
        }
        sum = t;
    }
    sum + carry
}
