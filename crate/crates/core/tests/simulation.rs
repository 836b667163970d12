mod common;

use common::{chi_sq_quantile, direct_spec, null_spec, LAMBDA};
use structest::diagnostics::{
    implied_reliability_ratios, scaled_contrasts, theorem1_residuals, ReliabilityVector,
};
use structest::estimator::{fit_restricted, FitOptions};
use structest::lrt::{lrt_statistic, run_stratified, run_test};
use structest::model::{cell_means, IndicatorDataset};
use structest::oracle::weighted_rank1;
use structest::simulate::{generate, population_cell_means, NoiseDistribution, ScenarioSpec};

#[test]
fn population_means_satisfy_the_proportionality_identity() {
    let specs = [
        null_spec(),
        ScenarioSpec::structural(vec![1.0, -2.0, 0.3], vec![-1.0, 0.0, 0.7, 2.5], 10)
            .with_eta(0.4, 2.0),
        ScenarioSpec::structural(vec![0.2, 5.0], vec![0.0, 0.0], 10),
    ];
    for spec in &specs {
        let mu = population_cell_means(spec).unwrap();
        let lam = &spec.lambda;
        for i in 0..lam.len() {
            for j in 0..lam.len() {
                for z in 0..spec.n_groups() {
                    assert!((lam[i] * mu[j][z] - lam[j] * mu[i][z]).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn implied_ratios_recover_loadings() {
    let spec = null_spec().with_subjects(20_000);
    for seed in 0..5 {
        let fit = fit_restricted(&generate(&spec, seed).unwrap(), &FitOptions::default()).unwrap();
        let ratios = implied_reliability_ratios(&fit, 0).unwrap();
        for (r, l) in ratios.iter().zip(LAMBDA) {
            assert!((r - l / 0.9).abs() < 0.05, "seed {seed}: {ratios:?}");
        }
    }
}

#[test]
fn sample_contrasts_are_close_to_equal_under_the_null() {
    let spec = null_spec().with_subjects(100_000);
    let cm = cell_means(&generate(&spec, 3).unwrap()).unwrap();
    let lam = ReliabilityVector::new(LAMBDA.to_vec()).unwrap();
    let c = scaled_contrasts(&cm, &lam, 0).unwrap();
    for row in &c {
        assert!((row[1] - 0.3).abs() < 0.06, "{c:?}");
    }
    let r = theorem1_residuals(&cm, &lam).unwrap();
    assert!(r.iter().flatten().flatten().all(|v| v.abs() < 0.05));
}

#[test]
fn direct_effect_breaks_the_identity() {
    let mu = population_cell_means(&direct_spec(0.5, 10)).unwrap();
    let lam = &LAMBDA;
    let r: f64 = (1..5)
        .map(|j| (lam[0] * mu[j][1] - lam[j] * mu[0][1]).abs())
        .fold(0.0, f64::max);
    assert!(r > 0.1);
}

#[test]
fn statistic_matches_the_spectral_oracle() {
    let spec =
        ScenarioSpec::structural(vec![0.9, 0.7, 0.4], vec![0.0, 0.5, 1.0], 150).with_eta(1.0, 1.0);
    let data = generate(&spec, 42).unwrap();
    let opts = FitOptions {
        tol: 1e-15,
        max_iter: 100_000,
        ref_group: None,
    };
    let result = run_test(&data, &opts).unwrap();
    let cm = cell_means(&data).unwrap();
    let oracle = weighted_rank1(&cm).unwrap();
    let m = data.m_obs() as f64;
    let expected =
        m * ((result.sigma2_full * m + oracle.lack_of_fit) / (result.sigma2_full * m)).ln();
    assert!(
        (result.statistic - expected).abs() < 1e-6,
        "{} vs {expected}",
        result.statistic
    );
}

#[test]
fn rank_one_null_rarely_exceeds_the_upper_percentile() {
    let spec = null_spec().with_subjects(500);
    let q = chi_sq_quantile(0.99, 4);
    let seeds = 300;
    let below = (0..seeds)
        .filter(|&s| {
            run_test(&generate(&spec, s).unwrap(), &FitOptions::default())
                .unwrap()
                .statistic
                < q
        })
        .count();
    assert!(below as f64 >= 0.99 * seeds as f64, "{below} of {seeds}");
}

#[test]
fn df_is_four_for_five_indicators_and_two_groups() {
    for seed in 0..5 {
        let r = run_test(
            &generate(&direct_spec(0.3, 300), seed).unwrap(),
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(r.df, 4);
        assert!((0.0..=1.0).contains(&r.p_value));
    }
}

#[test]
fn single_stratum_matches_the_plain_test() {
    let data = generate(&null_spec().with_subjects(400), 9).unwrap();
    let stratified = IndicatorDataset::concat_strata(&[("all", &data)]).unwrap();
    let combined = run_stratified(&stratified, &FitOptions::default()).unwrap();
    let plain = run_test(&data, &FitOptions::default()).unwrap();
    assert_eq!(combined.per_stratum.len(), 1);
    assert!((combined.combined_statistic - plain.statistic).abs() < 1e-9);
    assert_eq!(combined.combined_df, plain.df);
    assert!((combined.combined_p - plain.p_value).abs() < 1e-9);
    assert!((combined.per_stratum[0].bonferroni_p - plain.p_value).abs() < 1e-9);
}

#[test]
fn stratified_statistics_add() {
    let a = generate(&null_spec().with_subjects(400), 1).unwrap();
    let b = generate(&direct_spec(0.4, 600), 2).unwrap();
    let both = IndicatorDataset::concat_strata(&[("a", &a), ("b", &b)]).unwrap();
    let res = run_stratified(&both, &FitOptions::default()).unwrap();
    let sa = run_test(&a, &FitOptions::default()).unwrap();
    let sb = run_test(&b, &FitOptions::default()).unwrap();
    assert!((res.combined_statistic - sa.statistic - sb.statistic).abs() < 1e-9);
    assert_eq!(res.combined_df, 8);
    assert!((res.per_stratum[1].bonferroni_p - (2.0 * sb.p_value).min(1.0)).abs() < 1e-12);
}

#[test]
fn rank_two_statistic_grows_with_sample_size() {
    let stat = |n| {
        run_test(
            &generate(&direct_spec(0.5, n), 5).unwrap(),
            &FitOptions::default(),
        )
        .unwrap()
        .statistic
    };
    assert!(stat(8000) > stat(500));
}

#[test]
fn uniform_noise_fits_like_gaussian_noise() {
    let spec = null_spec()
        .with_noise_dist(NoiseDistribution::Uniform)
        .with_subjects(20_000);
    let fit = fit_restricted(&generate(&spec, 11).unwrap(), &FitOptions::default()).unwrap();
    let ratios = implied_reliability_ratios(&fit, 0).unwrap();
    for (r, l) in ratios.iter().zip(LAMBDA) {
        assert!((r - l / 0.9).abs() < 0.05);
    }
}

#[test]
fn exact_rank_one_data_is_an_exact_fit() {
    let values: Vec<f64> = [1.0, 2.0, 3.0, 6.0, 1.0, 2.0, 3.0, 6.0].to_vec();
    let data = IndicatorDataset::from_labels(
        values,
        2,
        &["a", "b", "a", "b"],
        vec!["x".into(), "y".into()],
    )
    .unwrap();
    let r = run_test(&data, &FitOptions::default()).unwrap();
    assert!(r.exact_fit);
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.p_value, 1.0);
    let sat = structest::estimator::fit_saturated(&data).unwrap();
    assert_eq!(lrt_statistic(&r.fit, &sat, data.m_obs()).unwrap(), 0.0);
}
