//! Dataset and saturated-model summary types.
//!
//! An [`IndicatorDataset`] holds `N` subjects by `n` indicators in row-major
//! order, a dense group index per subject and optional strata. Missing entries
//! are stored as `NaN` and every sum, mean and count in the crate is taken over
//! the non-missing entries only (available-case analysis).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker stored for a missing indicator value.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(x: f64) -> bool {
    x.is_nan()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorDataset {
    values: Vec<f64>,
    n_indicators: usize,
    group: Vec<usize>,
    strata: Option<Vec<usize>>,
    indicator_names: Vec<String>,
    group_names: Vec<String>,
    stratum_names: Vec<String>,
}

/// Maps text labels to dense indices in first-appearance order.
pub fn dense_labels<S: AsRef<str>>(labels: &[S]) -> (Vec<usize>, Vec<String>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut names = Vec::new();
    let dense = labels
        .iter()
        .map(|l| {
            let l = l.as_ref();
            *index.entry(l).or_insert_with(|| {
                names.push(l.to_string());
                names.len() - 1
            })
        })
        .collect();
    (dense, names)
}

impl IndicatorDataset {
    /// Builds a dataset from row-major values and dense group indices.
    pub fn new(
        values: Vec<f64>,
        n_indicators: usize,
        group: Vec<usize>,
        indicator_names: Vec<String>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        if n_indicators == 0 {
            return Err(Error::InvalidDataset("no indicator columns".into()));
        }
        if indicator_names.len() != n_indicators {
            return Err(Error::InvalidDataset(format!(
                "{} indicator names for {} indicators",
                indicator_names.len(),
                n_indicators
            )));
        }
        if !values.len().is_multiple_of(n_indicators) {
            return Err(Error::InvalidDataset(format!(
                "{} values do not fill rows of {} indicators",
                values.len(),
                n_indicators
            )));
        }
        let n_subjects = values.len() / n_indicators;
        if n_subjects == 0 {
            return Err(Error::InvalidDataset("no subjects".into()));
        }
        if group.len() != n_subjects {
            return Err(Error::InvalidDataset(format!(
                "{} group labels for {} subjects",
                group.len(),
                n_subjects
            )));
        }
        if group_names.is_empty() {
            return Err(Error::InvalidDataset("no groups".into()));
        }
        let mut seen = vec![false; group_names.len()];
        for &g in &group {
            if g >= group_names.len() {
                return Err(Error::InvalidDataset(format!(
                    "group index {g} out of range"
                )));
            }
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset(format!(
                "group {:?} has no subjects",
                group_names[g]
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidDataset("non-finite indicator value".into()));
        }
        if values.iter().all(|v| is_missing(*v)) {
            return Err(Error::InvalidDataset(
                "every indicator value is missing".into(),
            ));
        }
        Ok(Self {
            values,
            n_indicators,
            group,
            strata: None,
            indicator_names,
            group_names,
            stratum_names: Vec::new(),
        })
    }

    /// Builds a dataset from arbitrary group labels, indexed in first-appearance order.
    pub fn from_labels<S: AsRef<str>>(
        values: Vec<f64>,
        n_indicators: usize,
        group_labels: &[S],
        indicator_names: Vec<String>,
    ) -> Result<Self> {
        let (group, group_names) = dense_labels(group_labels);
        Self::new(values, n_indicators, group, indicator_names, group_names)
    }

    /// Attaches stratum labels, indexed in first-appearance order.
    pub fn with_strata_labels<S: AsRef<str>>(self, labels: &[S]) -> Result<Self> {
        let (strata, names) = dense_labels(labels);
        self.with_strata(strata, names)
    }

    pub fn with_strata(mut self, strata: Vec<usize>, stratum_names: Vec<String>) -> Result<Self> {
        if strata.len() != self.n_subjects() {
            return Err(Error::InvalidDataset(format!(
                "{} stratum labels for {} subjects",
                strata.len(),
                self.n_subjects()
            )));
        }
        if strata.iter().any(|&s| s >= stratum_names.len()) {
            return Err(Error::InvalidDataset("stratum index out of range".into()));
        }
        self.strata = Some(strata);
        self.stratum_names = stratum_names;
        Ok(self)
    }

    /// Stacks datasets sharing indicator and group names, tagging each part as one stratum.
    pub fn concat_strata(parts: &[(&str, &IndicatorDataset)]) -> Result<Self> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| Error::InvalidDataset("no datasets to stack".into()))?;
        let mut values = Vec::new();
        let mut group = Vec::new();
        let mut strata = Vec::new();
        let mut names = Vec::new();
        for (s, (label, part)) in parts.iter().enumerate() {
            if part.indicator_names != first.indicator_names
                || part.group_names != first.group_names
            {
                return Err(Error::InvalidDataset(format!(
                    "stratum {label:?} has different indicator or group names"
                )));
            }
            values.extend_from_slice(&part.values);
            group.extend_from_slice(&part.group);
            strata.extend(std::iter::repeat_n(s, part.n_subjects()));
            names.push(label.to_string());
        }
        Self::new(
            values,
            first.n_indicators,
            group,
            first.indicator_names.clone(),
            first.group_names.clone(),
        )?
        .with_strata(strata, names)
    }

    /// Rows `rows` of this dataset, keeping every group and name. Strata are dropped.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let n = self.n_indicators;
        let mut values = Vec::with_capacity(rows.len() * n);
        for &k in rows {
            values.extend_from_slice(self.row(k));
        }
        Self::new(
            values,
            n,
            rows.iter().map(|&k| self.group[k]).collect(),
            self.indicator_names.clone(),
            self.group_names.clone(),
        )
    }

    pub fn n_subjects(&self) -> usize {
        self.group.len()
    }

    pub fn n_indicators(&self) -> usize {
        self.n_indicators
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    /// Raw value, `NaN` when missing.
    #[inline]
    pub fn value(&self, subject: usize, indicator: usize) -> f64 {
        self.values[subject * self.n_indicators + indicator]
    }

    #[inline]
    pub fn row(&self, subject: usize) -> &[f64] {
        &self.values[subject * self.n_indicators..(subject + 1) * self.n_indicators]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn groups(&self) -> &[usize] {
        &self.group
    }

    pub fn strata(&self) -> Option<&[usize]> {
        self.strata.as_deref()
    }

    pub fn indicator_names(&self) -> &[String] {
        &self.indicator_names
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn stratum_names(&self) -> &[String] {
        &self.stratum_names
    }

    /// Number of non-missing entries, `M`.
    pub fn m_obs(&self) -> usize {
        self.values.iter().filter(|v| !is_missing(**v)).count()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups()];
        for &g in &self.group {
            sizes[g] += 1;
        }
        sizes
    }

    /// Per-cell sums and non-missing counts, both `n x p`.
    pub(crate) fn cell_sums(&self) -> CellSums {
        let (n, p) = (self.n_indicators, self.n_groups());
        let mut sums = vec![vec![0.0; p]; n];
        let mut counts = vec![vec![0usize; p]; n];
        for (k, &z) in self.group.iter().enumerate() {
            for (i, &x) in self.row(k).iter().enumerate() {
                if !is_missing(x) {
                    sums[i][z] += x;
                    counts[i][z] += 1;
                }
            }
        }
        CellSums { sums, counts }
    }

    /// Mean of the squared non-missing values.
    pub fn mean_square(&self) -> f64 {
        let (ss, m) = self
            .values
            .iter()
            .filter(|v| !is_missing(**v))
            .fold((0.0, 0usize), |(s, m), v| (s + v * v, m + 1));
        ss / m as f64
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CellSums {
    pub sums: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
}

impl CellSums {
    pub fn first_empty(&self) -> Option<(usize, usize)> {
        self.counts
            .iter()
            .enumerate()
            .find_map(|(i, row)| row.iter().position(|&c| c == 0).map(|z| (i, z)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_subjects: usize,
    pub n_indicators: usize,
    pub n_groups: usize,
    pub m_obs: usize,
    pub n_missing: usize,
    pub indicator_names: Vec<String>,
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
    /// `cell_counts[i][z]`: non-missing observations of indicator `i` in group `z`.
    pub cell_counts: Vec<Vec<usize>>,
    /// Zero-based `(indicator, group)` pairs without observations.
    pub empty_cells: Vec<(usize, usize)>,
    pub constant_indicators: Vec<usize>,
    pub empty_groups: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_strata: Option<usize>,
}

impl ValidationReport {
    pub fn has_flags(&self) -> bool {
        !self.empty_cells.is_empty()
            || !self.constant_indicators.is_empty()
            || !self.empty_groups.is_empty()
    }
}

pub fn validate(dataset: &IndicatorDataset) -> ValidationReport {
    let cells = dataset.cell_sums();
    let n = dataset.n_indicators();
    let m_obs = dataset.m_obs();
    let group_sizes = dataset.group_sizes();

    let mut empty_cells = Vec::new();
    for (i, row) in cells.counts.iter().enumerate() {
        for (z, &c) in row.iter().enumerate() {
            if c == 0 {
                empty_cells.push((i, z));
            }
        }
    }

    let constant_indicators = (0..n)
        .filter(|&i| {
            let mut observed = (0..dataset.n_subjects())
                .map(|k| dataset.value(k, i))
                .filter(|x| !is_missing(*x));
            match observed.next() {
                None => true,
                Some(first) => observed.all(|x| x == first),
            }
        })
        .collect();

    let empty_groups = group_sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 0)
        .map(|(z, _)| z)
        .collect();

    ValidationReport {
        n_subjects: dataset.n_subjects(),
        n_indicators: n,
        n_groups: dataset.n_groups(),
        m_obs,
        n_missing: n * dataset.n_subjects() - m_obs,
        indicator_names: dataset.indicator_names().to_vec(),
        group_names: dataset.group_names().to_vec(),
        group_sizes,
        cell_counts: cells.counts,
        empty_cells,
        constant_indicators,
        empty_groups,
        n_strata: dataset.strata().map(|_| dataset.stratum_names().len()),
    }
}

/// Per-indicator, per-group sample means: the saturated model's fitted values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeans {
    /// `means[i][z]`
    pub means: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    pub group_sizes: Vec<usize>,
}

impl CellMeans {
    pub fn n_indicators(&self) -> usize {
        self.means.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// True when each group's count is the same for every indicator.
    pub fn has_balanced_counts(&self) -> bool {
        (0..self.n_groups()).all(|z| self.counts.iter().all(|row| row[z] == self.counts[0][z]))
    }
}

pub fn cell_means(dataset: &IndicatorDataset) -> Result<CellMeans> {
    let cells = dataset.cell_sums();
    if let Some((indicator, group)) = cells.first_empty() {
        return Err(Error::EmptyCell { indicator, group });
    }
    let means = cells
        .sums
        .iter()
        .zip(&cells.counts)
        .map(|(s, c)| s.iter().zip(c).map(|(s, &c)| s / c as f64).collect())
        .collect();
    Ok(CellMeans {
        means,
        counts: cells.counts,
        group_sizes: dataset.group_sizes(),
    })
}
