//! Wide CSV input (one row per subject) and CSV dumps of datasets.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use structest::model::{is_missing, MISSING};
use structest::IndicatorDataset;
use thiserror::Error;

/// Joins the values of several strata columns into one label.
pub const STRATA_SEPARATOR: &str = "|";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// `row` counts data rows from 1; the header is row 0.
    #[error("row {row}, column {column:?}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("row {row}, column {column:?}: {value:?} is not a number")]
    NonNumericIndicator {
        row: usize,
        column: String,
        value: String,
    },

    #[error(transparent)]
    Dataset(#[from] structest::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvSchema {
    pub indicators: Vec<String>,
    pub group: String,
    pub strata: Vec<String>,
}

pub fn is_missing_field(field: &str) -> bool {
    field.is_empty() || field == "NA"
}

pub fn read_csv(path: &Path, schema: &CsvSchema) -> Result<IndicatorDataset, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv_from(file, schema)
}

pub fn read_csv_from<R: Read>(reader: R, schema: &CsvSchema) -> Result<IndicatorDataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| IoError::ParseError {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::MissingColumn(name.to_string()))
    };
    let indicator_cols = schema
        .indicators
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>, _>>()?;
    let group_col = column(&schema.group)?;
    let strata_cols = schema
        .strata
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut values = Vec::new();
    let mut groups = Vec::new();
    let mut strata = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| IoError::ParseError {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or_default();
        for (&c, name) in indicator_cols.iter().zip(&schema.indicators) {
            let raw = field(c);
            let v = if is_missing_field(raw) {
                MISSING
            } else {
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(IoError::NonNumericIndicator {
                            row,
                            column: name.clone(),
                            value: raw.to_string(),
                        })
                    }
                }
            };
            values.push(v);
        }
        let label = field(group_col);
        if is_missing_field(label) {
            return Err(IoError::ParseError {
                row,
                column: schema.group.clone(),
                message: "missing group label".into(),
            });
        }
        groups.push(label.to_string());
        if !strata_cols.is_empty() {
            let parts: Vec<&str> = strata_cols.iter().map(|&c| field(c)).collect();
            if let Some(i) = parts.iter().position(|p| is_missing_field(p)) {
                return Err(IoError::ParseError {
                    row,
                    column: schema.strata[i].clone(),
                    message: "missing stratum label".into(),
                });
            }
            strata.push(parts.join(STRATA_SEPARATOR));
        }
    }
    let dataset = IndicatorDataset::from_labels(
        values,
        schema.indicators.len(),
        &groups,
        schema.indicators.clone(),
    )?;
    Ok(if schema.strata.is_empty() {
        dataset
    } else {
        dataset.with_strata_labels(&strata)?
    })
}

/// Shortest decimal that parses back to the same value, in exponent form
/// outside `[1e-5, 1e16)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// As [`format_number`], with `NA` for missing values.
pub fn format_value(v: f64) -> String {
    if is_missing(v) {
        "NA".to_string()
    } else {
        format_number(v)
    }
}

/// Writes indicator columns, then `group_column`, then `stratum` when present.
pub fn write_csv<W: Write>(
    dataset: &IndicatorDataset,
    group_column: &str,
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset
        .indicator_names()
        .iter()
        .map(String::as_str)
        .collect();
    header.push(group_column);
    if dataset.strata().is_some() {
        header.push("stratum");
    }
    w.write_record(&header)?;
    for k in 0..dataset.n_subjects() {
        let mut record: Vec<String> = dataset.row(k).iter().map(|&v| format_value(v)).collect();
        record.push(dataset.group_names()[dataset.groups()[k]].clone());
        if let Some(s) = dataset.strata() {
            record.push(dataset.stratum_names()[s[k]].clone());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
