//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use structest::diagnostics::{
    implied_reliability_ratios, scaled_contrasts, theorem1_residuals, ReliabilityVector,
};
use structest::estimator::{FitOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use structest::lrt::{run_stratified, run_test};
use structest::model::{cell_means, validate};
use structest::montecarlo::{power_curve, rejection_rate};
use structest::oracle::{weighted_lack_of_fit, weighted_rank1};
use structest::simulate::{generate, Scenario};
use structest::{IndicatorDataset, ScenarioSpec};
use thiserror::Error;

use crate::io::{read_csv, write_atomic, write_csv, CsvSchema, IoError};
use crate::report::{
    write_report, Diagnostics, Format, OracleCheck, ReportDocument, ReportResult, StratifiedReport,
    TestReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Input(#[from] IoError),
    #[error(transparent)]
    Model(#[from] structest::Error),
    #[error("{path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Model(e) | Self::Input(IoError::Dataset(e)) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "structest",
    version,
    about = "Test the structural interpretation of a univariate latent factor model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Likelihood-ratio test of rank-1 cell means against the saturated model
    Test(TestArgs),
    /// Write a synthetic dataset as CSV
    Simulate(SimulateArgs),
    /// Monte Carlo rejection rates for one or more scenario specs
    Calibrate(CalibrateArgs),
    /// Scaled mean contrasts and proportionality residuals
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Wide CSV file, one row per subject
    pub input: PathBuf,
    /// Indicator columns, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub indicators: Vec<String>,
    /// Group column
    #[arg(long)]
    pub group: String,
}

impl InputArgs {
    fn schema(&self, strata: &[String]) -> CsvSchema {
        CsvSchema {
            indicators: self.indicators.clone(),
            group: self.group.clone(),
            strata: strata.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (standard output when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Strata columns; the test runs within each combination and sums the statistics
    #[arg(long, value_delimiter = ',')]
    pub strata: Vec<String>,
    /// Convergence tolerance on the change in residual mean square
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Group label whose indicator means start the iteration
    #[arg(long)]
    pub ref_group: Option<String>,
    /// Cross-check the restricted fit against the spectral oracle
    #[arg(long)]
    pub oracle: bool,
    /// Include contrast diagnostics computed from the fitted loadings
    #[arg(long)]
    pub diagnostics: bool,
    /// Write the parsed dataset back out as CSV
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON scenario spec; overrides every other scenario flag
    #[arg(long, conflicts_with_all = ["scenario", "n", "p", "subjects", "lambda", "eta_shift"])]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value = "structural")]
    pub scenario: Scenario,
    /// Number of indicators
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Number of groups
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Number of subjects
    #[arg(long = "N", default_value_t = 1000)]
    pub subjects: usize,
    /// Loadings (default 0.9, 0.8, ... floored at 0.1)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda: Option<Vec<f64>>,
    /// Latent shift per group (default 0, 0.3, 0.6, ...)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub eta_shift: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub eta_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta_sd: f64,
    /// One-based indicator given a direct group effect
    #[arg(long, requires = "direct_effect")]
    pub direct_indicator: Option<usize>,
    /// One-based group receiving the direct effect (default: last group)
    #[arg(long, requires = "direct_indicator")]
    pub direct_group: Option<usize>,
    #[arg(long, requires = "direct_indicator", allow_negative_numbers = true)]
    pub direct_effect: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub confounder_strength: Option<f64>,
    /// One-based indicator driving the outcome in single_indicator
    #[arg(long, default_value_t = 1)]
    pub efficacious_indicator: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub outcome_slope: f64,
    #[arg(long, env = "STRUCTEST_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output file (standard output when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// JSON scenario spec, or a list of specs for a power curve
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, env = "STRUCTEST_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("loadings").required(true).args(["lambda", "implied"]))]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Loadings from outside the data, one per indicator
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda: Option<Vec<f64>>,
    /// Use the loadings implied by the restricted fit
    #[arg(long)]
    pub implied: bool,
    /// Group label the contrasts are taken against (default: first group)
    #[arg(long)]
    pub ref_group: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Runs the tool and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let invocation = args
        .iter()
        .map(|a| a.to_string_lossy())
        .collect::<Vec<_>>()
        .join(" ");
    match dispatch(cli.command, invocation) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, invocation: String) -> CliResult<()> {
    match command {
        Command::Test(a) => test(a, invocation),
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a, invocation),
        Command::Diagnose(a) => diagnose(a, invocation),
    }
}

fn group_index(dataset: &IndicatorDataset, label: &str) -> CliResult<usize> {
    dataset
        .group_names()
        .iter()
        .position(|g| g == label)
        .ok_or_else(|| CliError::Usage(format!("group {label:?} does not occur in the data")))
}

fn emit(doc: &ReportDocument, output: &OutputArgs) -> CliResult<()> {
    write_report(doc, output.out.as_deref(), output.format).map_err(|source| CliError::Output {
        path: output
            .out
            .as_ref()
            .map_or("<stdout>".into(), |p| p.display().to_string()),
        source,
    })
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    let result = match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(bytes)
        }
    };
    result.map_err(|source| CliError::Output {
        path: path.map_or("<stdout>".into(), |p| p.display().to_string()),
        source,
    })
}

fn dataset_csv(dataset: &IndicatorDataset, group_column: &str) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(dataset, group_column, &mut buf).expect("in-memory CSV write");
    buf
}

fn oracle_check(dataset: &IndicatorDataset, report: &mut TestReport) -> CliResult<()> {
    let cm = cell_means(dataset)?;
    let oracle = weighted_rank1(&cm)?;
    let fitted: Vec<Vec<f64>> = report
        .alpha
        .iter()
        .map(|a| report.beta.iter().map(|b| a * b).collect())
        .collect();
    let als = weighted_lack_of_fit(&cm, &fitted);
    let m = report.m_obs as f64;
    let full = report.sigma2_full * m;
    let statistic = if full > 0.0 {
        (m * ((full + oracle.lack_of_fit) / full).ln()).max(0.0)
    } else {
        0.0
    };
    report.oracle = Some(OracleCheck::new(
        oracle.method,
        oracle.lack_of_fit,
        als,
        statistic,
    ));
    Ok(())
}

fn diagnostics_for(
    dataset: &IndicatorDataset,
    lambda: ReliabilityVector,
    source: &str,
    ref_group: usize,
    implied_ratios: Option<Vec<f64>>,
) -> CliResult<Diagnostics> {
    let cm = cell_means(dataset)?;
    Ok(Diagnostics {
        lambda_source: source.into(),
        indicator_names: dataset.indicator_names().to_vec(),
        group_names: dataset.group_names().to_vec(),
        ref_group: dataset.group_names()[ref_group].clone(),
        scaled_contrasts: scaled_contrasts(&cm, &lambda, ref_group)?,
        theorem1_residuals: theorem1_residuals(&cm, &lambda)?,
        cell_means: cm.means,
        lambda: lambda.into(),
        implied_ratios,
    })
}

fn test(a: TestArgs, invocation: String) -> CliResult<()> {
    if a.tol.is_nan() || a.tol <= 0.0 || a.max_iter == 0 {
        return Err(CliError::Usage(
            "--tol must be positive and --max-iter at least 1".into(),
        ));
    }
    let dataset = read_csv(&a.input.input, &a.input.schema(&a.strata))?;
    if let Some(path) = &a.dump {
        write_bytes(Some(path), &dataset_csv(&dataset, &a.input.group))?;
    }
    let options = FitOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        ref_group: a
            .ref_group
            .as_deref()
            .map(|g| group_index(&dataset, g))
            .transpose()?,
    };
    let mut doc = ReportDocument::new(invocation);
    doc.dataset_summary = Some(validate(&dataset));
    let names = dataset.group_names();
    if a.strata.is_empty() {
        let result = run_test(&dataset, &options)?;
        let mut report = TestReport::new(&result, names);
        if a.oracle {
            oracle_check(&dataset, &mut report)?;
        }
        if a.diagnostics {
            let ratios = implied_reliability_ratios(&result.fit, 0).ok();
            let lambda = ReliabilityVector::implied(&result.fit)?;
            doc.diagnostics = Some(diagnostics_for(&dataset, lambda, "implied", 0, ratios)?);
        }
        doc.result = Some(ReportResult::Test(report));
    } else {
        if a.diagnostics {
            return Err(CliError::Usage(
                "--diagnostics is not available with --strata".into(),
            ));
        }
        let result = run_stratified(&dataset, &options)?;
        let mut report = StratifiedReport::new(&result, names);
        if a.oracle {
            for s in &mut report.per_stratum {
                let rows: Vec<usize> = {
                    let idx = dataset
                        .stratum_names()
                        .iter()
                        .position(|n| *n == s.label)
                        .expect("stratum label");
                    let strata = dataset.strata().expect("strata");
                    (0..strata.len()).filter(|&k| strata[k] == idx).collect()
                };
                oracle_check(&dataset.subset(&rows)?, &mut s.result)?;
            }
        }
        doc.result = Some(ReportResult::Stratified(report));
    }
    emit(&doc, &a.output)
}

fn spec_from_flags(a: &SimulateArgs) -> CliResult<ScenarioSpec> {
    if a.n == 0 || a.p == 0 {
        return Err(CliError::Usage("--n and --p must be positive".into()));
    }
    let lambda = a
        .lambda
        .clone()
        .unwrap_or_else(|| (0..a.n).map(|i| (0.9 - 0.1 * i as f64).max(0.1)).collect());
    if lambda.len() != a.n {
        return Err(CliError::Usage(format!(
            "--lambda has {} entries for --n {}",
            lambda.len(),
            a.n
        )));
    }
    let eta_shift = a
        .eta_shift
        .clone()
        .unwrap_or_else(|| (0..a.p).map(|z| 0.3 * z as f64).collect());
    if eta_shift.len() != a.p {
        return Err(CliError::Usage(format!(
            "--eta-shift has {} entries for --p {}",
            eta_shift.len(),
            a.p
        )));
    }
    let mut spec =
        ScenarioSpec::structural(lambda, eta_shift, a.subjects).with_eta(a.eta_mean, a.eta_sd);
    match a.scenario {
        Scenario::Structural => {}
        Scenario::Direct => {
            // direct effects without an explicit latent pathway
            if a.eta_shift.is_none() {
                spec.eta_shift = vec![0.0; a.p];
            }
            spec.scenario = Scenario::Direct;
            spec.mixed_pathways = spec.eta_shift.iter().any(|s| *s != 0.0);
        }
        Scenario::Confounded => spec = spec.confounded(a.confounder_strength.unwrap_or(0.5)),
        Scenario::SingleIndicator => {
            if a.efficacious_indicator == 0 || a.efficacious_indicator > a.n {
                return Err(CliError::Usage(
                    "--efficacious-indicator out of range".into(),
                ));
            }
            spec = spec.single_indicator(a.efficacious_indicator - 1, a.outcome_slope);
        }
    }
    if let (Some(i), Some(effect)) = (a.direct_indicator, a.direct_effect) {
        let z = a.direct_group.unwrap_or(a.p);
        if i == 0 || i > a.n || z == 0 || z > a.p {
            return Err(CliError::Usage(
                "--direct-indicator or --direct-group out of range".into(),
            ));
        }
        if a.scenario != Scenario::Structural && a.scenario != Scenario::Direct {
            return Err(CliError::Usage(
                "direct effects apply to the structural and direct scenarios".into(),
            ));
        }
        spec = spec.with_direct_shift(i - 1, z - 1, effect);
    }
    if a.confounder_strength.is_some() && a.scenario != Scenario::Confounded {
        return Err(CliError::Usage(
            "--confounder-strength needs --scenario confounded".into(),
        ));
    }
    Ok(spec)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Input(IoError::ParseError {
            row: e.line(),
            column: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let spec = match &a.spec {
        Some(path) => read_json(path)?,
        None => spec_from_flags(&a)?,
    };
    let dataset = generate(&spec, a.seed)?;
    write_bytes(a.out.as_deref(), &dataset_csv(&dataset, "z"))
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum SpecFile {
    One(Box<ScenarioSpec>),
    Many(Vec<ScenarioSpec>),
}

fn calibrate(a: CalibrateArgs, invocation: String) -> CliResult<()> {
    let rows = match read_json::<SpecFile>(&a.spec)? {
        SpecFile::One(spec) => vec![rejection_rate(&spec, a.alpha, a.replicates, a.seed)?],
        SpecFile::Many(specs) => power_curve(&specs, a.alpha, a.replicates, a.seed)?,
    };
    let mut doc = ReportDocument::new(invocation);
    doc.result = Some(ReportResult::Calibration(rows));
    emit(&doc, &a.output)
}

fn diagnose(a: DiagnoseArgs, invocation: String) -> CliResult<()> {
    let dataset = read_csv(&a.input.input, &a.input.schema(&[]))?;
    let ref_group = a
        .ref_group
        .as_deref()
        .map(|g| group_index(&dataset, g))
        .transpose()?
        .unwrap_or(0);
    let mut doc = ReportDocument::new(invocation);
    doc.dataset_summary = Some(validate(&dataset));
    let diagnostics = match &a.lambda {
        Some(lambda) => {
            let lambda = ReliabilityVector::new(lambda.clone())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if lambda.len() != dataset.n_indicators() {
                return Err(CliError::Usage(format!(
                    "--lambda has {} entries for {} indicators",
                    lambda.len(),
                    dataset.n_indicators()
                )));
            }
            diagnostics_for(&dataset, lambda, "supplied", ref_group, None)?
        }
        None => {
            let result = run_test(&dataset, &FitOptions::default())?;
            let ratios = implied_reliability_ratios(&result.fit, 0)?;
            let lambda = ReliabilityVector::implied(&result.fit)?;
            doc.result = Some(ReportResult::Test(TestReport::new(
                &result,
                dataset.group_names(),
            )));
            diagnostics_for(&dataset, lambda, "implied", ref_group, Some(ratios))?
        }
    };
    doc.diagnostics = Some(diagnostics);
    emit(&doc, &a.output)
}
