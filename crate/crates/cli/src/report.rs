//! Report documents and their JSON, CSV-table and text renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use structest::lrt::{StratifiedResult, TestResult};
use structest::oracle::OracleMethod;
use structest::{CalibrationResult, ValidationReport};

use crate::io::format_number as num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    CsvTable,
    Text,
}

/// Flat view of a single test for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub sigma2_restricted: f64,
    pub sigma2_full: f64,
    pub m_obs: usize,
    pub n_indicators: usize,
    pub n_groups: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_group: Option<String>,
    pub degenerate: bool,
    pub exact_fit: bool,
    pub mse_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
}

/// Independent restricted fit used to cross-check the alternating one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub method: String,
    pub lack_of_fit: f64,
    pub als_lack_of_fit: f64,
    pub statistic: f64,
}

impl OracleCheck {
    pub fn new(
        method: OracleMethod,
        lack_of_fit: f64,
        als_lack_of_fit: f64,
        statistic: f64,
    ) -> Self {
        let method = match method {
            OracleMethod::Spectral => "spectral",
            OracleMethod::Restarts => "restarts",
        };
        Self {
            method: method.into(),
            lack_of_fit,
            als_lack_of_fit,
            statistic,
        }
    }
}

impl TestReport {
    pub fn new(r: &TestResult, group_names: &[String]) -> Self {
        Self {
            statistic: r.statistic,
            df: r.df,
            p_value: r.p_value,
            sigma2_restricted: r.sigma2_restricted,
            sigma2_full: r.sigma2_full,
            m_obs: r.m_obs,
            n_indicators: r.n_indicators,
            n_groups: r.n_groups,
            alpha: r.fit.alpha.clone(),
            beta: r.fit.beta.clone(),
            converged: r.fit.converged,
            iterations: r.fit.iterations,
            ref_group: r.fit.ref_group.and_then(|z| group_names.get(z).cloned()),
            degenerate: r.degenerate,
            exact_fit: r.exact_fit,
            mse_trace: r.fit.mse_trace.clone(),
            oracle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub label: String,
    pub bonferroni_p: f64,
    pub result: TestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub per_stratum: Vec<StratumReport>,
    pub combined_statistic: f64,
    pub combined_df: usize,
    pub combined_p: f64,
}

impl StratifiedReport {
    pub fn new(r: &StratifiedResult, group_names: &[String]) -> Self {
        Self {
            per_stratum: r
                .per_stratum
                .iter()
                .map(|s| StratumReport {
                    label: s.label.clone(),
                    bonferroni_p: s.bonferroni_p,
                    result: TestReport::new(&s.result, group_names),
                })
                .collect(),
            combined_statistic: r.combined_statistic,
            combined_df: r.combined_df,
            combined_p: r.combined_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportResult {
    Test(TestReport),
    Stratified(StratifiedReport),
    Calibration(Vec<CalibrationResult>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `supplied` or `implied`.
    pub lambda_source: String,
    pub lambda: Vec<f64>,
    pub indicator_names: Vec<String>,
    pub group_names: Vec<String>,
    pub ref_group: String,
    /// `[indicator][group]`
    pub cell_means: Vec<Vec<f64>>,
    /// `[indicator][group]`
    pub scaled_contrasts: Vec<Vec<f64>>,
    /// `[i][j][group]`
    pub theorem1_residuals: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implied_ratios: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    pub invocation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_summary: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ReportResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl ReportDocument {
    pub fn new(invocation: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            dataset_summary: None,
            result: None,
            diagnostics: None,
        }
    }
}

pub fn render(doc: &ReportDocument, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc).expect("report serializes");
            s.push('\n');
            s
        }
        Format::CsvTable => csv_table(doc),
        Format::Text => text(doc),
    }
}

/// Writes atomically to `path`, or to standard output when `path` is `None`.
pub fn write_report(
    doc: &ReportDocument,
    path: Option<&Path>,
    format: Format,
) -> std::io::Result<()> {
    let body = render(doc, format);
    match path {
        Some(p) => crate::io::write_atomic(p, body.as_bytes()),
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(body.as_bytes())
        }
    }
}

pub fn read_report(path: &Path) -> std::io::Result<ReportDocument> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}

const TEST_COLUMNS: &str =
    "statistic,df,p_value,sigma2_restricted,sigma2_full,m_obs,converged,iterations,alpha,beta";

fn test_row(r: &TestReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        num(r.statistic),
        r.df,
        num(r.p_value),
        num(r.sigma2_restricted),
        num(r.sigma2_full),
        r.m_obs,
        r.converged,
        r.iterations,
        join(&r.alpha),
        join(&r.beta)
    )
}

fn csv_table(doc: &ReportDocument) -> String {
    let mut out = String::new();
    match &doc.result {
        Some(ReportResult::Test(r)) => {
            writeln!(out, "{TEST_COLUMNS}").unwrap();
            writeln!(out, "{}", test_row(r)).unwrap();
        }
        Some(ReportResult::Stratified(s)) => {
            writeln!(out, "stratum,bonferroni_p,{TEST_COLUMNS}").unwrap();
            for st in &s.per_stratum {
                writeln!(
                    out,
                    "{},{},{}",
                    csv_field(&st.label),
                    num(st.bonferroni_p),
                    test_row(&st.result)
                )
                .unwrap();
            }
            writeln!(
                out,
                "combined,,{},{},{},,,,,,,",
                num(s.combined_statistic),
                s.combined_df,
                num(s.combined_p)
            )
            .unwrap();
        }
        Some(ReportResult::Calibration(rows)) => {
            writeln!(
                out,
                "scenario,N,replicates,rejections,rate,ci_low,ci_high,alpha_level,seed"
            )
            .unwrap();
            for c in rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    c.spec.scenario,
                    c.spec.n_subjects,
                    c.replicates,
                    c.rejections,
                    num(c.rate),
                    num(c.ci_low),
                    num(c.ci_high),
                    num(c.alpha_level),
                    c.seed
                )
                .unwrap();
            }
        }
        None => {}
    }
    if let Some(d) = &doc.diagnostics {
        if doc.result.is_some() {
            out.push('\n');
        }
        write!(out, "indicator,lambda").unwrap();
        for g in &d.group_names {
            write!(out, ",mean_{0},contrast_{0}", csv_field(g)).unwrap();
        }
        writeln!(out).unwrap();
        for (i, name) in d.indicator_names.iter().enumerate() {
            write!(out, "{},{}", csv_field(name), num(d.lambda[i])).unwrap();
            for z in 0..d.group_names.len() {
                write!(
                    out,
                    ",{},{}",
                    num(d.cell_means[i][z]),
                    num(d.scaled_contrasts[i][z])
                )
                .unwrap();
            }
            writeln!(out).unwrap();
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn text_test(out: &mut String, r: &TestReport, indent: &str) {
    writeln!(
        out,
        "{indent}X2 = {:.4}, df = {}, p = {:.4e}",
        r.statistic, r.df, r.p_value
    )
    .unwrap();
    writeln!(
        out,
        "{indent}sigma2 restricted = {:.6}, full = {:.6}, M = {}",
        r.sigma2_restricted, r.sigma2_full, r.m_obs
    )
    .unwrap();
    writeln!(
        out,
        "{indent}alternating fit: {} after {} iterations{}",
        if r.converged {
            "converged"
        } else {
            "not converged"
        },
        r.iterations,
        r.ref_group
            .as_ref()
            .map(|g| format!(", started from group {g}"))
            .unwrap_or_default()
    )
    .unwrap();
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "{indent}alpha: {}", fmt(&r.alpha)).unwrap();
    writeln!(out, "{indent}beta:  {}", fmt(&r.beta)).unwrap();
    if r.degenerate {
        writeln!(
            out,
            "{indent}warning: every cell mean is zero; the restricted fit is identically zero"
        )
        .unwrap();
    }
    if r.exact_fit {
        writeln!(
            out,
            "{indent}note: both residual variances are zero (noiseless rank-1 data)"
        )
        .unwrap();
    }
    if let Some(o) = &r.oracle {
        writeln!(
            out,
            "{indent}oracle ({}): lack of fit {:.6e} vs alternating {:.6e}, X2 = {:.4}",
            o.method, o.lack_of_fit, o.als_lack_of_fit, o.statistic
        )
        .unwrap();
    }
}

fn text(doc: &ReportDocument) -> String {
    let mut out = String::new();
    if let Some(s) = &doc.dataset_summary {
        writeln!(
            out,
            "{} subjects, {} indicators, {} groups, {} observed values ({} missing)",
            s.n_subjects, s.n_indicators, s.n_groups, s.m_obs, s.n_missing
        )
        .unwrap();
        for (i, z) in &s.empty_cells {
            writeln!(
                out,
                "warning: indicator {} has no observations in group {}",
                s.indicator_names[*i], s.group_names[*z]
            )
            .unwrap();
        }
        for i in &s.constant_indicators {
            writeln!(
                out,
                "warning: indicator {} is constant",
                s.indicator_names[*i]
            )
            .unwrap();
        }
    }
    match &doc.result {
        Some(ReportResult::Test(r)) => text_test(&mut out, r, ""),
        Some(ReportResult::Stratified(s)) => {
            for st in &s.per_stratum {
                writeln!(
                    out,
                    "stratum {} (Bonferroni p = {:.4e}):",
                    st.label, st.bonferroni_p
                )
                .unwrap();
                text_test(&mut out, &st.result, "  ");
            }
            writeln!(
                out,
                "combined: X2 = {:.4}, df = {}, p = {:.4e}",
                s.combined_statistic, s.combined_df, s.combined_p
            )
            .unwrap();
        }
        Some(ReportResult::Calibration(rows)) => {
            for c in rows {
                writeln!(
                    out,
                    "{} N={}: {}/{} rejections at level {}, rate {:.4} [{:.4}, {:.4}]",
                    c.spec.scenario,
                    c.spec.n_subjects,
                    c.rejections,
                    c.replicates,
                    c.alpha_level,
                    c.rate,
                    c.ci_low,
                    c.ci_high
                )
                .unwrap();
            }
        }
        None => {}
    }
    if let Some(d) = &doc.diagnostics {
        writeln!(
            out,
            "scaled contrasts against group {} ({} loadings):",
            d.ref_group, d.lambda_source
        )
        .unwrap();
        let width = d
            .indicator_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(9);
        write!(out, "{:width$} {:>10}", "indicator", "lambda").unwrap();
        for g in &d.group_names {
            write!(out, " {:>12}", g).unwrap();
        }
        writeln!(out).unwrap();
        for (i, name) in d.indicator_names.iter().enumerate() {
            write!(out, "{:width$} {:>10.4}", name, d.lambda[i]).unwrap();
            for z in 0..d.group_names.len() {
                write!(out, " {:>12.5}", d.scaled_contrasts[i][z]).unwrap();
            }
            writeln!(out).unwrap();
        }
        let worst = d
            .theorem1_residuals
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        writeln!(
            out,
            "largest |lambda_i mean_j - lambda_j mean_i|: {worst:.5}"
        )
        .unwrap();
        if let Some(r) = &d.implied_ratios {
            let fmt = r
                .iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(
                out,
                "implied loading ratios to {}: {fmt}",
                d.indicator_names[0]
            )
            .unwrap();
        }
    }
    out
}
