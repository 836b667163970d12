//! Synthetic data for the causal structures the test is meant to tell apart.
//!
//! Every subject draws `eta = eta_mean + eta_shift[z] + eta_sd * xi` and
//! `X_i = lambda_i * eta + direct_shift[i][z] + eps_i`. The scenarios differ in
//! which pathways are open:
//!
//! * `structural`: the group shifts the latent only.
//! * `direct`: the group shifts individual indicators (optionally the latent too).
//! * `confounded`: an unrecorded `C ~ N(0, 1)` raises `eta` by
//!   `confounder_strength * C` and tilts group membership through a logit with
//!   the same slope.
//! * `single_indicator`: the binary group is an outcome caused by one indicator.
//!
//! Each random variate comes from its own ChaCha stream keyed by
//! `(seed, role, subject)`, so adding indicators or subjects leaves existing
//! draws untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IndicatorDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Structural,
    Direct,
    Confounded,
    SingleIndicator,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structural" => Ok(Self::Structural),
            "direct" => Ok(Self::Direct),
            "confounded" => Ok(Self::Confounded),
            "single_indicator" | "single-indicator" => Ok(Self::SingleIndicator),
            other => Err(Error::InvalidSpec(format!("unknown scenario {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Structural => "structural",
            Self::Direct => "direct",
            Self::Confounded => "confounded",
            Self::SingleIndicator => "single_indicator",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]`, unit variance.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub noise_sd: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_corr: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub noise_dist: NoiseDistribution,
    pub eta_mean: f64,
    pub eta_sd: f64,
    pub scenario: Scenario,
    pub group_probs: Vec<f64>,
    pub eta_shift: Vec<f64>,
    /// `n x p`; an empty matrix means no direct effects.
    #[serde(default)]
    pub direct_shift: Vec<Vec<f64>>,
    /// Lets the `direct` scenario also shift the latent.
    #[serde(default)]
    pub mixed_pathways: bool,
    #[serde(default)]
    pub confounder_strength: f64,
    /// Zero-based indicator that causes the outcome in `single_indicator`.
    #[serde(default)]
    pub efficacious_indicator: usize,
    #[serde(default)]
    pub outcome_slope: f64,
    #[serde(rename = "N")]
    pub n_subjects: usize,
}

impl ScenarioSpec {
    /// Structural spec with unit noise, `eta ~ N(0, 1)` before shifts, equal group probabilities.
    pub fn structural(lambda: Vec<f64>, eta_shift: Vec<f64>, n_subjects: usize) -> Self {
        let n = lambda.len();
        let p = eta_shift.len();
        Self {
            n,
            lambda,
            noise_sd: vec![1.0; n],
            noise_corr: None,
            noise_dist: NoiseDistribution::Gaussian,
            eta_mean: 0.0,
            eta_sd: 1.0,
            scenario: Scenario::Structural,
            group_probs: vec![1.0 / p as f64; p],
            eta_shift,
            direct_shift: Vec::new(),
            mixed_pathways: false,
            confounder_strength: 0.0,
            efficacious_indicator: 0,
            outcome_slope: 0.0,
            n_subjects,
        }
    }

    pub fn with_eta(mut self, mean: f64, sd: f64) -> Self {
        self.eta_mean = mean;
        self.eta_sd = sd;
        self
    }

    pub fn with_group_probs(mut self, probs: Vec<f64>) -> Self {
        self.group_probs = probs;
        self
    }

    pub fn with_noise_sd(mut self, sd: Vec<f64>) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn with_noise_dist(mut self, dist: NoiseDistribution) -> Self {
        self.noise_dist = dist;
        self
    }

    pub fn with_noise_corr(mut self, corr: Vec<Vec<f64>>) -> Self {
        self.noise_corr = Some(corr);
        self
    }

    pub fn with_subjects(mut self, n_subjects: usize) -> Self {
        self.n_subjects = n_subjects;
        self
    }

    /// Switches to the `direct` scenario and shifts `indicator` in `group` by `value`.
    /// A nonzero latent shift is kept as a mixed pathway.
    pub fn with_direct_shift(mut self, indicator: usize, group: usize, value: f64) -> Self {
        if self.direct_shift.is_empty() {
            self.direct_shift = vec![vec![0.0; self.n_groups()]; self.n];
        }
        self.direct_shift[indicator][group] = value;
        self.scenario = Scenario::Direct;
        self.mixed_pathways = self.eta_shift.iter().any(|s| *s != 0.0);
        self
    }

    pub fn confounded(mut self, strength: f64) -> Self {
        self.scenario = Scenario::Confounded;
        self.confounder_strength = strength;
        self
    }

    /// Binary outcome driven by `indicator` through a logit with slope `slope`.
    pub fn single_indicator(mut self, indicator: usize, slope: f64) -> Self {
        self.scenario = Scenario::SingleIndicator;
        self.efficacious_indicator = indicator;
        self.outcome_slope = slope;
        self.eta_shift = vec![0.0; self.n_groups()];
        self
    }

    pub fn n_groups(&self) -> usize {
        self.group_probs.len()
    }

    fn direct(&self, i: usize, z: usize) -> f64 {
        self.direct_shift.get(i).map_or(0.0, |row| row[z])
    }

    fn has_direct_effects(&self) -> bool {
        self.direct_shift.iter().flatten().any(|s| *s != 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let (n, p) = (self.n, self.n_groups());
        if n == 0 {
            return bad("no indicators".into());
        }
        if self.lambda.len() != n || self.noise_sd.len() != n {
            return bad(format!(
                "lambda has {} and noise_sd {} entries for n = {n}",
                self.lambda.len(),
                self.noise_sd.len()
            ));
        }
        if self.lambda.iter().any(|l| !l.is_finite()) {
            return bad("lambda must be finite".into());
        }
        if self.noise_sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("noise_sd entries must be positive".into());
        }
        if !(self.eta_sd > 0.0 && self.eta_sd.is_finite()) || !self.eta_mean.is_finite() {
            return bad("eta_sd must be positive and eta_mean finite".into());
        }
        if p == 0 {
            return bad("no groups".into());
        }
        if self.group_probs.iter().any(|q| q.is_nan() || *q < 0.0) {
            return bad("group_probs must be nonnegative".into());
        }
        let total: f64 = self.group_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("group_probs sum to {total}"));
        }
        if self.eta_shift.len() != p {
            return bad(format!(
                "eta_shift has {} entries for {p} groups",
                self.eta_shift.len()
            ));
        }
        if !self.direct_shift.is_empty()
            && (self.direct_shift.len() != n || self.direct_shift.iter().any(|r| r.len() != p))
        {
            return bad(format!("direct_shift must be {n} x {p}"));
        }
        if self.n_subjects == 0 {
            return bad("N must be positive".into());
        }
        if let Some(corr) = &self.noise_corr {
            cholesky(corr, n)?;
        }
        let eta_shifted = self.eta_shift.iter().any(|s| *s != 0.0);
        match self.scenario {
            Scenario::Structural | Scenario::Confounded if self.has_direct_effects() => bad(
                format!("{:?} scenario cannot carry direct effects", self.scenario),
            ),
            Scenario::Direct if eta_shifted && !self.mixed_pathways => {
                bad("direct scenario shifts eta only with mixed_pathways enabled".into())
            }
            Scenario::SingleIndicator if p != 2 => {
                bad("single_indicator needs exactly 2 groups".into())
            }
            Scenario::SingleIndicator if self.efficacious_indicator >= n => {
                bad("efficacious_indicator out of range".into())
            }
            Scenario::SingleIndicator if eta_shifted || self.has_direct_effects() => {
                bad("single_indicator takes no eta or direct shifts".into())
            }
            _ => Ok(()),
        }
    }
}

/// Lower-triangular factor of a correlation matrix, row-major.
fn cholesky(corr: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    let bad = |msg: &str| Err(Error::InvalidSpec(format!("noise_corr: {msg}")));
    if corr.len() != n || corr.iter().any(|r| r.len() != n) {
        return bad("wrong shape");
    }
    for i in 0..n {
        if (corr[i][i] - 1.0).abs() > 1e-12 {
            return bad("diagonal must be 1");
        }
        for j in 0..i {
            if (corr[i][j] - corr[j][i]).abs() > 1e-12 {
                return bad("not symmetric");
            }
        }
    }
    let matrix = nalgebra::DMatrix::from_fn(n, n, |i, j| corr[i][j]);
    match nalgebra::Cholesky::new(matrix) {
        Some(c) => {
            let l = c.l();
            Ok((0..n)
                .map(|i| (0..n).map(|j| l[(i, j)]).collect())
                .collect())
        }
        None => bad("not positive definite"),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Pure mixing of a seed with a key; used for stream and replicate seeds.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    splitmix64(seed ^ splitmix64(key))
}

#[derive(Clone, Copy)]
enum Role {
    Group,
    Latent,
    Confounder,
    Noise(usize),
}

impl Role {
    fn key(self) -> u64 {
        match self {
            Role::Group => 1,
            Role::Latent => 2,
            Role::Confounder => 3,
            Role::Noise(i) => 16 + i as u64,
        }
    }
}

fn stream(seed: u64, role: Role, subject: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, role.key()), subject as u64))
}

fn normal(seed: u64, role: Role, subject: usize) -> f64 {
    stream(seed, role, subject).sample(StandardNormal)
}

fn uniform(seed: u64, role: Role, subject: usize) -> f64 {
    stream(seed, role, subject).random::<f64>()
}

fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (z, q) in probs.iter().enumerate() {
        acc += q;
        if u < acc {
            return z;
        }
    }
    // u landed in the roundoff gap above the last cumulative sum
    probs.iter().rposition(|q| *q > 0.0).unwrap_or(0)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<IndicatorDataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.n_groups());
    let chol = spec
        .noise_corr
        .as_ref()
        .map(|c| cholesky(c, n))
        .transpose()?;
    let log_probs: Vec<f64> = spec.group_probs.iter().map(|q| q.ln()).collect();

    let mut values = Vec::with_capacity(n * spec.n_subjects);
    let mut group = Vec::with_capacity(spec.n_subjects);
    let mut xi = vec![0.0; n];
    let mut probs = vec![0.0; p];

    for k in 0..spec.n_subjects {
        let confounder = match spec.scenario {
            Scenario::Confounded => normal(seed, Role::Confounder, k),
            _ => 0.0,
        };
        let z = match spec.scenario {
            Scenario::Confounded => {
                let s = spec.confounder_strength * confounder;
                let top = log_probs
                    .iter()
                    .enumerate()
                    .map(|(z, lp)| lp + s * z as f64)
                    .fold(f64::NEG_INFINITY, f64::max);
                for (z, q) in probs.iter_mut().enumerate() {
                    *q = (log_probs[z] + s * z as f64 - top).exp();
                }
                let total: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|q| *q /= total);
                pick(&probs, uniform(seed, Role::Group, k))
            }
            Scenario::SingleIndicator => 0,
            _ => pick(&spec.group_probs, uniform(seed, Role::Group, k)),
        };

        let eta = spec.eta_mean
            + spec.eta_shift[z]
            + spec.confounder_strength * confounder
            + spec.eta_sd * normal(seed, Role::Latent, k);

        for (i, x) in xi.iter_mut().enumerate() {
            *x = match spec.noise_dist {
                NoiseDistribution::Gaussian => normal(seed, Role::Noise(i), k),
                NoiseDistribution::Uniform => {
                    3f64.sqrt() * (2.0 * uniform(seed, Role::Noise(i), k) - 1.0)
                }
            };
        }
        let row_start = values.len();
        for i in 0..n {
            let e = match &chol {
                Some(l) => (0..=i).map(|j| l[i][j] * xi[j]).sum(),
                None => xi[i],
            };
            values.push(spec.lambda[i] * eta + spec.direct(i, z) + spec.noise_sd[i] * e);
        }

        let z = match spec.scenario {
            Scenario::SingleIndicator => {
                let l = spec.efficacious_indicator;
                let q = spec.group_probs[1];
                let centered = values[row_start + l] - spec.lambda[l] * spec.eta_mean;
                let t = (q / (1.0 - q)).ln() + spec.outcome_slope * centered;
                usize::from(uniform(seed, Role::Group, k) < logistic(t))
            }
            _ => z,
        };
        group.push(z);
    }

    IndicatorDataset::new(
        values,
        n,
        group,
        (1..=n).map(|i| format!("x{i}")).collect(),
        (1..=p).map(|z| z.to_string()).collect(),
    )
}

/// Exact `E(X_i | Z = z)` for the structural and direct scenarios.
pub fn population_cell_means(spec: &ScenarioSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    match spec.scenario {
        Scenario::Structural | Scenario::Direct => Ok((0..spec.n)
            .map(|i| {
                (0..spec.n_groups())
                    .map(|z| {
                        spec.lambda[i] * (spec.eta_mean + spec.eta_shift[z]) + spec.direct(i, z)
                    })
                    .collect()
            })
            .collect()),
        other => Err(Error::Unsupported(format!(
            "population cell means for the {other:?} scenario"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cell_means;

    fn spec() -> ScenarioSpec {
        ScenarioSpec::structural(vec![0.9, 0.8, 0.7], vec![0.0, 0.3], 500).with_eta(1.0, 1.0)
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&spec(), 11).unwrap();
        let b = generate(&spec(), 11).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.groups(), b.groups());
        assert_ne!(generate(&spec(), 12).unwrap().values(), a.values());
    }

    #[test]
    fn adding_an_indicator_keeps_existing_draws() {
        let small = generate(&spec(), 3).unwrap();
        let mut wide = spec();
        wide.n = 4;
        wide.lambda.push(0.4);
        wide.noise_sd.push(1.0);
        let wide = generate(&wide, 3).unwrap();
        assert_eq!(small.groups(), wide.groups());
        for k in 0..small.n_subjects() {
            assert_eq!(small.row(k), &wide.row(k)[..3]);
        }
    }

    #[test]
    fn structural_population_means() {
        let s = ScenarioSpec::structural(vec![1.0, 2.0], vec![0.0, 1.0], 10);
        assert_eq!(
            population_cell_means(&s).unwrap(),
            vec![vec![0.0, 1.0], vec![0.0, 2.0]]
        );
    }

    #[test]
    fn direct_population_means() {
        let s = ScenarioSpec::structural(vec![1.0, 1.0], vec![0.0, 0.0], 10)
            .with_direct_shift(0, 1, 0.5);
        assert_eq!(s.scenario, Scenario::Direct);
        assert_eq!(
            population_cell_means(&s).unwrap(),
            vec![vec![0.0, 0.5], vec![0.0, 0.0]]
        );
    }

    #[test]
    fn no_pathway_means_equal_across_groups() {
        let s =
            ScenarioSpec::structural(vec![0.5, 1.5], vec![0.0, 0.0, 0.0], 10).with_eta(2.0, 1.0);
        for (row, l) in population_cell_means(&s).unwrap().iter().zip([0.5, 1.5]) {
            assert!(row.iter().all(|m| *m == l * 2.0));
        }
    }

    #[test]
    fn direct_effect_on_one_indicator_gives_rank_two() {
        let delta = 0.4;
        let s = ScenarioSpec::structural(vec![0.9, 0.5], vec![0.0, 0.0], 10)
            .with_eta(1.0, 1.0)
            .with_direct_shift(0, 1, delta);
        let m = population_cell_means(&s).unwrap();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        // [[l1, l1 + d], [l2, l2]]: det = -l2 d
        assert!((det + 0.5 * delta).abs() < 1e-15);
    }

    #[test]
    fn unsupported_scenarios_have_no_population_means() {
        assert!(matches!(
            population_cell_means(&spec().confounded(0.5)),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            population_cell_means(&spec().single_indicator(0, 1.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec();
        s.group_probs = vec![0.6, 0.6];
        assert!(generate(&s, 0).is_err());

        let mut s = spec();
        s.eta_sd = 0.0;
        assert!(s.validate().is_err());

        let mut s = spec();
        s.direct_shift = vec![vec![0.0, 1.0]; 3];
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));

        let mut s = spec().with_direct_shift(0, 1, 1.0);
        s.mixed_pathways = false;
        assert!(s.validate().is_err());

        let s = spec().with_noise_corr(vec![
            vec![1.0, 0.9, 0.9],
            vec![0.9, 1.0, -0.9],
            vec![0.9, -0.9, 1.0],
        ]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn sample_means_track_population_means() {
        let s = spec().with_subjects(100_000);
        let population = population_cell_means(&s).unwrap();
        let sample = cell_means(&generate(&s, 5).unwrap()).unwrap();
        // within-cell sd of X_i is sqrt(lambda^2 + 1) < 1.5
        let bound = 4.0 * 1.5 / (100_000.0f64 * 0.5).sqrt();
        for (ps, ss) in population.iter().zip(&sample.means) {
            for (p, s) in ps.iter().zip(ss) {
                assert!((p - s).abs() < bound, "{p} vs {s}");
            }
        }
    }

    #[test]
    fn correlated_noise_has_target_correlation() {
        let corr = vec![
            vec![1.0, 0.6, 0.0],
            vec![0.6, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let s = ScenarioSpec::structural(vec![1e-9, 1e-9, 1e-9], vec![0.0], 50_000)
            .with_noise_corr(corr);
        let d = generate(&s, 9).unwrap();
        let r: f64 = (0..d.n_subjects())
            .map(|k| d.value(k, 0) * d.value(k, 1))
            .sum::<f64>()
            / d.n_subjects() as f64;
        assert!((r - 0.6).abs() < 0.03, "{r}");
    }

    #[test]
    fn uniform_noise_has_unit_variance() {
        let s = ScenarioSpec::structural(vec![1e-9], vec![0.0], 50_000)
            .with_noise_dist(NoiseDistribution::Uniform);
        let d = generate(&s, 2).unwrap();
        let v: f64 = d.values().iter().map(|x| x * x).sum::<f64>() / d.n_subjects() as f64;
        assert!((v - 1.0).abs() < 0.03);
        assert!(d.values().iter().all(|x| x.abs() <= 3f64.sqrt()));
    }

    #[test]
    fn confounder_tilts_group_membership() {
        let s = spec().with_subjects(20_000).confounded(1.0);
        let d = generate(&s, 4).unwrap();
        let sizes = d.group_sizes();
        // symmetric logit around 1/2 keeps the margin near balanced
        assert!((sizes[1] as f64 / 20_000.0 - 0.5).abs() < 0.03);
        let cm = cell_means(&d).unwrap();
        // higher C raises both eta and the chance of group 2
        assert!(cm.means[0][1] - cm.means[0][0] > 0.3 + 0.5);
    }

    #[test]
    fn single_indicator_outcome_is_binary() {
        let s = spec().single_indicator(2, 1.5).with_subjects(2_000);
        let d = generate(&s, 8).unwrap();
        assert_eq!(d.n_groups(), 2);
        assert!(d.group_sizes().iter().all(|&c| c > 100));
    }
}
