//! Monte Carlo size and power of the test over simulated replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FitOptions;
use crate::lrt::run_test;
use crate::simulate::{derive_seed, generate, ScenarioSpec};

pub const MIN_REPLICATES: usize = 100;
const Z_975: f64 = 1.959_963_984_540_054;
const REPLICATE_DOMAIN: u64 = 0x7265_706c_6963_6174;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha_level: f64,
    pub spec: ScenarioSpec,
    pub seed: u64,
}

/// Seed of replicate `index`, a pure function of the master seed.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    derive_seed(master ^ REPLICATE_DOMAIN, index as u64)
}

/// 95% interval: normal approximation with continuity correction, clipped to [0, 1].
pub fn binomial_ci(rejections: usize, replicates: usize) -> (f64, f64) {
    let n = replicates as f64;
    let rate = rejections as f64 / n;
    let half = Z_975 * (rate * (1.0 - rate) / n).sqrt() + 0.5 / n;
    ((rate - half).max(0.0), (rate + half).min(1.0))
}

/// p-values of `replicates` independent datasets drawn from `spec`, in replicate order.
pub fn replicate_p_values(
    spec: &ScenarioSpec,
    replicates: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let outcomes: Vec<Result<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let data = generate(spec, replicate_seed(seed, r))?;
            Ok(run_test(&data, options)?.p_value)
        })
        .collect();
    outcomes
        .into_iter()
        .enumerate()
        .map(|(index, o)| {
            o.map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn rejection_rate_with(
    spec: &ScenarioSpec,
    alpha_level: f64,
    replicates: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<CalibrationResult> {
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_REPLICATES} replicates are required, got {replicates}"
        )));
    }
    // a level of exactly 1 is accepted: every p below 1 rejects
    if !(alpha_level > 0.0 && alpha_level <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha level {alpha_level} outside (0, 1]"
        )));
    }
    let p_values = replicate_p_values(spec, replicates, seed, options)?;
    let rejections = p_values.iter().filter(|&&p| p < alpha_level).count();
    let (ci_low, ci_high) = binomial_ci(rejections, replicates);
    Ok(CalibrationResult {
        replicates,
        rejections,
        rate: rejections as f64 / replicates as f64,
        ci_low,
        ci_high,
        alpha_level,
        spec: spec.clone(),
        seed,
    })
}

pub fn rejection_rate(
    spec: &ScenarioSpec,
    alpha_level: f64,
    replicates: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    rejection_rate_with(spec, alpha_level, replicates, seed, &FitOptions::default())
}

/// One calibration per spec, in input order. Every spec reuses the master seed.
pub fn power_curve(
    specs: &[ScenarioSpec],
    alpha_level: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<CalibrationResult>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("empty spec grid".into()));
    }
    specs
        .iter()
        .map(|s| rejection_rate(s, alpha_level, replicates, seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
///
/// The p-value uses the asymptotic Kolmogorov distribution with Stephens'
/// small-sample adjustment of the scaled statistic.
pub fn ks_uniform(samples: &[f64]) -> KsResult {
    let mut u = samples.to_vec();
    u.sort_by(|a, b| a.total_cmp(b));
    let n = u.len() as f64;
    let statistic = u
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let root = n.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * statistic;
    KsResult {
        statistic,
        p_value: kolmogorov_sf(lambda),
    }
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn null_spec() -> ScenarioSpec {
        ScenarioSpec::structural(vec![0.9, 0.8, 0.7], vec![0.0, 0.3], 300).with_eta(1.0, 1.0)
    }

    #[test]
    fn ci_brackets_rate() {
        for (r, n) in [(0, 100), (5, 100), (50, 100), (100, 100), (97, 2000)] {
            let (lo, hi) = binomial_ci(r, n);
            let rate = r as f64 / n as f64;
            assert!(0.0 <= lo && lo <= rate && rate <= hi && hi <= 1.0);
        }
    }

    #[test]
    fn replicate_seeds_are_distinct_and_stable() {
        assert_eq!(replicate_seed(1, 5), replicate_seed(1, 5));
        assert_ne!(replicate_seed(1, 5), replicate_seed(1, 6));
        assert_ne!(replicate_seed(1, 5), replicate_seed(2, 5));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(rejection_rate(&null_spec(), 0.05, 99, 0).is_err());
        assert!(rejection_rate(&null_spec(), 0.0, 100, 0).is_err());
        assert!(rejection_rate(&null_spec(), 1.5, 100, 0).is_err());
        assert!(power_curve(&[], 0.05, 100, 0).is_err());
    }

    #[test]
    fn level_one_rejects_everything() {
        let r = rejection_rate(&null_spec(), 1.0, 100, 3).unwrap();
        assert_eq!(r.rate, 1.0);
        assert_eq!(r.rejections, 100);
    }

    #[test]
    fn deterministic_across_runs() {
        let a = rejection_rate(&null_spec(), 0.2, 150, 77).unwrap();
        let b = rejection_rate(&null_spec(), 0.2, 150, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failed_replicate_aborts_with_index() {
        // one indicator: every replicate fails the n >= 2 precondition
        let spec = ScenarioSpec::structural(vec![0.9], vec![0.0, 0.3], 50);
        match rejection_rate(&spec, 0.05, 100, 0) {
            Err(Error::Replicate { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected replicate failure, got {other:?}"),
        }
    }

    #[test]
    fn ks_accepts_a_uniform_grid_and_rejects_a_skewed_one() {
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&grid).p_value > 0.99);
        let skewed: Vec<f64> = grid.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skewed).p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }
}
