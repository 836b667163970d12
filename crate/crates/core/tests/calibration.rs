mod common;

use common::{direct_spec, null_spec, predicted_null_rate, LAMBDA};
use rayon::prelude::*;
use structest::estimator::FitOptions;
use structest::lrt::run_stratified;
use structest::montecarlo::{
    ks_uniform, power_curve, rejection_rate, replicate_p_values, replicate_seed,
};
use structest::simulate::generate;
use structest::IndicatorDataset;

const ALPHA: f64 = 0.05;

fn within(rate: f64, target: f64, replicates: usize) -> bool {
    let sd = (target * (1.0 - target) / replicates as f64).sqrt();
    (rate - target).abs() <= 4.0 * sd + 0.5 / replicates as f64
}

#[test]
fn unit_latent_null_rate_matches_the_shared_latent_prediction() {
    let r = rejection_rate(&null_spec(), ALPHA, 2000, 101).unwrap();
    let predicted = predicted_null_rate(&LAMBDA, 1.0, 1.0, 4, ALPHA);
    println!("latent sd 1: rate {} predicted {predicted:.4}", r.rate);
    assert!(
        within(r.rate, predicted, 2000),
        "rate {} vs predicted {predicted}",
        r.rate
    );
    assert!(r.rate < ALPHA);
}

#[test]
fn nearly_constant_latent_null_is_calibrated() {
    let spec = null_spec().with_eta(1.0, 0.05);
    let p = replicate_p_values(&spec, 10_000, 102, &FitOptions::default()).unwrap();
    let rate = p.iter().filter(|&&x| x < ALPHA).count() as f64 / p.len() as f64;
    let ks = ks_uniform(&p);
    println!("latent sd 0.05: rate {rate} ks p {}", ks.p_value);
    assert!((0.04..=0.06).contains(&rate), "rate {rate}");
    assert!(ks.p_value > 0.01, "ks p {}", ks.p_value);
}

#[test]
fn prediction_tracks_the_latent_scale() {
    for (sd, seed) in [(0.3, 103), (0.6, 104)] {
        let r = rejection_rate(&null_spec().with_eta(1.0, sd), ALPHA, 1000, seed).unwrap();
        let predicted = predicted_null_rate(&LAMBDA, 1.0, sd * sd, 4, ALPHA);
        println!("latent sd {sd}: rate {} predicted {predicted:.4}", r.rate);
        assert!(
            within(r.rate, predicted, 1000),
            "sd {sd}: rate {} vs {predicted}",
            r.rate
        );
    }
}

#[test]
fn confounded_null_does_not_over_reject() {
    let r = rejection_rate(&null_spec().confounded(0.5), ALPHA, 2000, 105).unwrap();
    println!("confounded: rate {}", r.rate);
    assert!(r.rate <= 0.07);
}

fn stratified_rate(latent_sd: f64, replicates: usize, seed: u64) -> f64 {
    let a = null_spec().with_eta(1.0, latent_sd).with_subjects(1000);
    let b = null_spec().with_eta(0.5, latent_sd).with_subjects(1000);
    let rejections = (0..replicates)
        .into_par_iter()
        .filter(|&r| {
            let s = replicate_seed(seed, r);
            let da = generate(&a, s).unwrap();
            let db = generate(&b, s ^ 0xb).unwrap();
            let both = IndicatorDataset::concat_strata(&[("c0", &da), ("c1", &db)]).unwrap();
            run_stratified(&both, &FitOptions::default())
                .unwrap()
                .combined_p
                < ALPHA
        })
        .count();
    rejections as f64 / replicates as f64
}

#[test]
fn stratified_null_with_nearly_constant_latent_is_calibrated() {
    let rate = stratified_rate(0.05, 2000, 106);
    println!("stratified, latent sd 0.05: rate {rate}");
    assert!((0.03..=0.07).contains(&rate), "rate {rate}");
}

#[test]
fn stratified_null_with_unit_latent_is_conservative() {
    let rate = stratified_rate(1.0, 2000, 107);
    let predicted = predicted_null_rate(&LAMBDA, 1.0, 1.0, 8, ALPHA);
    println!("stratified, latent sd 1: rate {rate} predicted {predicted:.4}");
    assert!(within(rate, predicted, 2000), "rate {rate} vs {predicted}");
}

#[test]
fn power_increases_with_the_direct_shift() {
    let specs: Vec<_> = [0.0, 0.1, 0.2, 0.4]
        .iter()
        .map(|&d| direct_spec(d, 5000))
        .collect();
    let curve = power_curve(&specs, ALPHA, 300, 108).unwrap();
    let rates: Vec<f64> = curve.iter().map(|c| c.rate).collect();
    println!("power by shift: {rates:?}");
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
    assert!(rates[3] > 0.99);
}

#[test]
fn power_increases_with_sample_size() {
    let specs: Vec<_> = [500, 2000, 8000]
        .iter()
        .map(|&n| direct_spec(0.2, n))
        .collect();
    let curve = power_curve(&specs, ALPHA, 300, 109).unwrap();
    let rates: Vec<f64> = curve.iter().map(|c| c.rate).collect();
    println!("power by N: {rates:?}");
    assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
}

#[test]
fn one_spec_grid_matches_rejection_rate() {
    let spec = null_spec().with_subjects(300);
    let curve = power_curve(std::slice::from_ref(&spec), 0.2, 150, 110).unwrap();
    assert_eq!(curve, vec![rejection_rate(&spec, 0.2, 150, 110).unwrap()]);
}

#[test]
fn correlated_noise_size_is_reported() {
    let mut corr = vec![vec![0.0; 5]; 5];
    for (i, row) in corr.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = if i == j { 1.0 } else { 0.3 };
        }
    }
    let r = rejection_rate(
        &null_spec().with_eta(1.0, 0.05).with_noise_corr(corr),
        ALPHA,
        500,
        111,
    )
    .unwrap();
    println!(
        "correlated noise: rate {} [{}, {}]",
        r.rate, r.ci_low, r.ci_high
    );
    assert!(r.ci_low <= r.rate && r.rate <= r.ci_high);
}
