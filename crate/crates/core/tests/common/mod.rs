#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use structest::lrt::chi_sq_sf;
use structest::model::MISSING;
use structest::simulate::ScenarioSpec;
use structest::IndicatorDataset;

/// Random dataset with near-rank-1 cell means, every group and cell populated.
pub fn random_dataset(
    seed: u64,
    n: usize,
    p: usize,
    n_subjects: usize,
    missing_rate: f64,
) -> IndicatorDataset {
    assert!(n_subjects >= p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..2.0)).collect();
    let perturb: f64 = rng.random_range(0.0..0.5);
    let means: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..p)
                .map(|z| alpha[i] * beta[z] + perturb * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let noise: f64 = rng.random_range(0.2..1.5);

    let group: Vec<usize> = (0..n_subjects)
        .map(|k| if k < p { k } else { rng.random_range(0..p) })
        .collect();
    let mut values = Vec::with_capacity(n * n_subjects);
    for &z in &group {
        for mean in &means {
            values.push(mean[z] + noise * rng.sample::<f64, _>(StandardNormal));
        }
    }
    // the first p subjects keep every entry, so no cell is empty
    for k in p..n_subjects {
        for i in 0..n {
            if rng.random::<f64>() < missing_rate {
                values[k * n + i] = MISSING;
            }
        }
    }
    IndicatorDataset::new(
        values,
        n,
        group,
        (1..=n).map(|i| format!("x{i}")).collect(),
        (1..=p).map(|z| format!("g{z}")).collect(),
    )
    .unwrap()
}

/// Dataset with indicator columns reordered: new column `j` is old column `perm[j]`.
pub fn permute_indicators(d: &IndicatorDataset, perm: &[usize]) -> IndicatorDataset {
    let n = d.n_indicators();
    let mut values = Vec::with_capacity(d.values().len());
    for k in 0..d.n_subjects() {
        values.extend(perm.iter().map(|&i| d.value(k, i)));
    }
    IndicatorDataset::new(
        values,
        n,
        d.groups().to_vec(),
        perm.iter()
            .map(|&i| d.indicator_names()[i].clone())
            .collect(),
        d.group_names().to_vec(),
    )
    .unwrap()
}

/// Dataset with group `z` renamed to `perm_inv[z]`: new group `w` is old group `perm[w]`.
pub fn permute_groups(d: &IndicatorDataset, perm: &[usize]) -> IndicatorDataset {
    let mut inverse = vec![0; perm.len()];
    for (w, &z) in perm.iter().enumerate() {
        inverse[z] = w;
    }
    IndicatorDataset::new(
        d.values().to_vec(),
        d.n_indicators(),
        d.groups().iter().map(|&z| inverse[z]).collect(),
        d.indicator_names().to_vec(),
        perm.iter().map(|&z| d.group_names()[z].clone()).collect(),
    )
    .unwrap()
}

pub fn scale(d: &IndicatorDataset, c: f64) -> IndicatorDataset {
    IndicatorDataset::new(
        d.values().iter().map(|x| x * c).collect(),
        d.n_indicators(),
        d.groups().to_vec(),
        d.indicator_names().to_vec(),
        d.group_names().to_vec(),
    )
    .unwrap()
}

pub fn shuffle_rows(d: &IndicatorDataset, seed: u64) -> IndicatorDataset {
    let mut rows: Vec<usize> = (0..d.n_subjects()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in (1..rows.len()).rev() {
        let j = rng.random_range(0..=k);
        rows.swap(k, j);
    }
    d.subset(&rows).unwrap()
}

pub fn frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub const LAMBDA: [f64; 5] = [0.9, 0.8, 0.7, 0.6, 0.5];

/// Structural null: five indicators, two groups, latent N(1, 1) shifted by 0.3 in group 2.
pub fn null_spec() -> ScenarioSpec {
    ScenarioSpec::structural(LAMBDA.to_vec(), vec![0.0, 0.3], 2000).with_eta(1.0, 1.0)
}

/// The null spec plus a direct shift of indicator 1 in group 2, at `n_subjects`.
pub fn direct_spec(shift: f64, n_subjects: usize) -> ScenarioSpec {
    null_spec()
        .with_subjects(n_subjects)
        .with_direct_shift(0, 1, shift)
}

pub fn chi_sq_quantile(prob: f64, df: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1e4);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_sq_sf(mid, df) > 1.0 - prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Large-sample rejection rate of the test under a Gaussian structural null.
///
/// Item errors of one subject share the latent draw, so the statistic behaves
/// like `(noise variance / within-cell variance) * chi2_df`. The within-cell
/// variance averages `lambda_i^2 * var(eta | z) + sd_i^2` over indicators.
pub fn predicted_null_rate(
    lambda: &[f64],
    noise_sd: f64,
    eta_within_var: f64,
    df: usize,
    alpha: f64,
) -> f64 {
    let n = lambda.len() as f64;
    let within =
        lambda.iter().map(|l| l * l * eta_within_var).sum::<f64>() / n + noise_sd * noise_sd;
    let ratio = noise_sd * noise_sd / within;
    chi_sq_sf(chi_sq_quantile(1.0 - alpha, df) / ratio, df)
}
