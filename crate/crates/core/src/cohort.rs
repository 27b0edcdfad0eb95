//! Cohort data model: phase-1 variables, stratification, and sampling state.
//!
//! A [`CohortTable`] holds the phase-1 data for every subject (outcome,
//! covariates, auxiliaries), the stratum labels, and the phase-2 sampling
//! state: the indicator `R`, the expensive variable `X` where it has been
//! measured, and the sampling weights `w = 1/π`. Tables are immutable;
//! every update (adding a wave, adding an imputed column) derives a new
//! table, so concurrent readers are always safe.

use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result};

/// Per-stratum bookkeeping: phase-1 size, phase-2 size, and the within-stratum
/// standard deviation of the influence function used for allocation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StratumSummary {
    pub stratum: usize,
    /// Phase-1 count `N_h`.
    pub n_cohort: usize,
    /// Phase-2 count `n_h` (sampled so far).
    pub n_sampled: usize,
    /// Within-stratum standard deviation of the target influence function.
    pub sd: f64,
}

/// Immutable cohort table shared by the design, estimation, and simulation
/// machinery.
#[derive(Debug, Clone)]
pub struct CohortTable {
    n_rows: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    outcome: String,
    expensive_name: String,
    expensive: Vec<Option<f64>>,
    phase2: Vec<bool>,
    /// `1/π_i` where sampled, NaN sentinel elsewhere.
    weights: Vec<f64>,
    strata: Vec<usize>,
    n_strata: usize,
}

impl CohortTable {
    /// Builds a cohort with fully observed phase-1 columns, an expensive
    /// variable with per-row missingness, and no phase-2 sample drawn yet.
    ///
    /// The table starts with a single stratum; call [`CohortTable::stratify_by`]
    /// to attach a stratification.
    pub fn new(
        columns: Vec<(String, Vec<f64>)>,
        outcome: &str,
        expensive_name: &str,
        expensive: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n_rows = expensive.len();
        let mut names = Vec::with_capacity(columns.len());
        let mut data = Vec::with_capacity(columns.len());
        for (name, values) in columns {
            if names.contains(&name) {
                return Err(Error::InvalidCohort(format!("duplicate column `{name}`")));
            }
            if name == expensive_name {
                return Err(Error::InvalidCohort(format!(
                    "expensive variable `{name}` must not also be a phase-1 column"
                )));
            }
            if values.len() != n_rows {
                return Err(Error::ColumnLength {
                    column: name,
                    found: values.len(),
                    expected: n_rows,
                });
            }
            names.push(name);
            data.push(values);
        }
        if !names.iter().any(|n| n == outcome) {
            return Err(Error::MissingColumn(outcome.to_string()));
        }
        Ok(CohortTable {
            n_rows,
            names,
            columns: data,
            outcome: outcome.to_string(),
            expensive_name: expensive_name.to_string(),
            expensive,
            phase2: vec![false; n_rows],
            weights: vec![f64::NAN; n_rows],
            strata: vec![0; n_rows],
            n_strata: 1,
        })
    }

    /// Reads a cohort from CSV. A header row is required; every field is
    /// numeric; a missing expensive value is encoded as an empty field.
    /// Missing values are only allowed in the expensive column.
    pub fn from_csv<R: Read>(
        reader: R,
        outcome: &str,
        expensive_name: &str,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(|h| h.to_string())
            .collect();
        let x_idx = headers
            .iter()
            .position(|h| h == expensive_name)
            .ok_or_else(|| Error::MissingColumn(expensive_name.to_string()))?;

        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        let mut expensive: Vec<Option<f64>> = Vec::new();
        for (row_no, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            if record.len() != headers.len() {
                return Err(Error::Csv(format!(
                    "row {}: expected {} fields, found {}",
                    row_no + 1,
                    headers.len(),
                    record.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                if j == x_idx {
                    if field.is_empty() {
                        expensive.push(None);
                    } else {
                        expensive.push(Some(parse_field(field, &headers[j], row_no)?));
                    }
                } else {
                    if field.is_empty() {
                        return Err(Error::Csv(format!(
                            "row {}: column `{}` is empty; only `{}` may have missing values",
                            row_no + 1,
                            headers[j],
                            expensive_name
                        )));
                    }
                    columns[j].push(parse_field(field, &headers[j], row_no)?);
                }
            }
        }

        let named: Vec<(String, Vec<f64>)> = headers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != x_idx)
            .map(|(j, h)| (h.clone(), std::mem::take(&mut columns[j])))
            .collect();
        CohortTable::new(named, outcome, expensive_name, expensive)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_strata(&self) -> usize {
        self.n_strata
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome
    }

    pub fn expensive_name(&self) -> &str {
        &self.expensive_name
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn outcome(&self) -> &[f64] {
        self.column(&self.outcome).expect("outcome column exists")
    }

    /// Observed expensive value at `row`, if the row has been measured.
    pub fn expensive(&self, row: usize) -> Option<f64> {
        self.expensive[row]
    }

    pub fn is_sampled(&self, row: usize) -> bool {
        self.phase2[row]
    }

    /// Sampling weight `1/π` at a sampled row; NaN where unsampled.
    pub fn weight(&self, row: usize) -> f64 {
        self.weights[row]
    }

    pub fn stratum_of(&self, row: usize) -> usize {
        self.strata[row]
    }

    pub fn strata(&self) -> &[usize] {
        &self.strata
    }

    /// Row indices of the phase-2 sample, in row order.
    pub fn phase2_rows(&self) -> Vec<usize> {
        (0..self.n_rows).filter(|&i| self.phase2[i]).collect()
    }

    /// Phase-1 counts `N_h` per stratum.
    pub fn stratum_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_strata];
        for &h in &self.strata {
            counts[h] += 1;
        }
        counts
    }

    /// Phase-2 counts `n_h` per stratum.
    pub fn sampled_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_strata];
        for i in 0..self.n_rows {
            if self.phase2[i] {
                counts[self.strata[i]] += 1;
            }
        }
        counts
    }

    /// Per-stratum summaries with the supplied influence standard deviations
    /// (zeros when none are available yet).
    pub fn summaries(&self, sd: Option<&[f64]>) -> Vec<StratumSummary> {
        let n_cohort = self.stratum_counts();
        let n_sampled = self.sampled_counts();
        (0..self.n_strata)
            .map(|h| StratumSummary {
                stratum: h,
                n_cohort: n_cohort[h],
                n_sampled: n_sampled[h],
                sd: sd.map_or(0.0, |s| s[h]),
            })
            .collect()
    }

    /// Cross-classifies the listed discrete columns into strata.
    ///
    /// Cells are labeled `0..H-1` in lexicographic order of their value
    /// tuples; empty cells are omitted. Columns must be discrete (integral
    /// values); a continuous column is an error.
    pub fn stratify(&self, columns: &[&str]) -> Result<(Vec<usize>, Vec<StratumSummary>)> {
        if columns.is_empty() {
            return Err(Error::InvalidCohort(
                "stratification requires at least one column".to_string(),
            ));
        }
        let mut cols: Vec<&[f64]> = Vec::with_capacity(columns.len());
        for &name in columns {
            let values = self.column(name)?;
            if values
                .iter()
                .any(|v| !v.is_finite() || v.fract() != 0.0 || v.abs() > i64::MAX as f64)
            {
                return Err(Error::ContinuousStratifier(name.to_string()));
            }
            cols.push(values);
        }
        let keys: Vec<Vec<i64>> = (0..self.n_rows)
            .map(|i| cols.iter().map(|c| c[i] as i64).collect())
            .collect();
        let mut cells: BTreeMap<&Vec<i64>, usize> = BTreeMap::new();
        for key in &keys {
            *cells.entry(key).or_insert(0) += 1;
        }
        let labels: BTreeMap<&Vec<i64>, usize> = cells
            .keys()
            .enumerate()
            .map(|(label, &key)| (key, label))
            .collect();
        let strata: Vec<usize> = keys.iter().map(|k| labels[k]).collect();
        let summaries = cells
            .iter()
            .enumerate()
            .map(|(label, (_, &count))| StratumSummary {
                stratum: label,
                n_cohort: count,
                n_sampled: 0,
                sd: 0.0,
            })
            .collect();
        Ok((strata, summaries))
    }

    /// Returns a copy of the table stratified by the listed columns. Stratum
    /// labels are frozen from this point on; they are never recomputed
    /// mid-design.
    pub fn stratify_by(&self, columns: &[&str]) -> Result<(CohortTable, Vec<StratumSummary>)> {
        let (strata, summaries) = self.stratify(columns)?;
        let mut table = self.clone();
        table.n_strata = summaries.len();
        table.strata = strata;
        Ok((table, summaries))
    }

    /// Derives a table with an extra named column (used for imputed-X shadow
    /// columns). Never overwrites an existing column or the observed
    /// expensive values.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<CohortTable> {
        if self.has_column(name) || name == self.expensive_name {
            return Err(Error::InvalidCohort(format!(
                "column `{name}` already exists"
            )));
        }
        if values.len() != self.n_rows {
            return Err(Error::ColumnLength {
                column: name.to_string(),
                found: values.len(),
                expected: self.n_rows,
            });
        }
        let mut table = self.clone();
        table.names.push(name.to_string());
        table.columns.push(values);
        Ok(table)
    }

    /// Returns the design-stage copy of this table (no phase-2 sample, no
    /// observed X) together with the expensive values that were present,
    /// which act as the measurement oracle during a design run.
    pub fn split_oracle(&self) -> (CohortTable, Vec<Option<f64>>) {
        let mut table = self.clone();
        let oracle = std::mem::replace(&mut table.expensive, vec![None; self.n_rows]);
        table.phase2 = vec![false; self.n_rows];
        table.weights = vec![f64::NAN; self.n_rows];
        (table, oracle)
    }

    /// Records one wave of phase-2 measurements: marks `rows` as sampled with
    /// their measured X values and recomputes the stratified-SRS weights
    /// `w = N_h / n_h` for every sampled row (waves within a stratum are
    /// exchangeable draws, so the combined sample has π_h = n_h / N_h).
    pub fn with_wave(&self, rows: &[usize], x_values: &[f64]) -> Result<CohortTable> {
        if rows.len() != x_values.len() {
            return Err(Error::InvalidCohort(format!(
                "wave has {} rows but {} measurements",
                rows.len(),
                x_values.len()
            )));
        }
        let mut table = self.clone();
        for (&row, &x) in rows.iter().zip(x_values) {
            if row >= self.n_rows {
                return Err(Error::InvalidCohort(format!("row {row} out of range")));
            }
            if table.phase2[row] {
                return Err(Error::InvalidCohort(format!(
                    "row {row} sampled twice across waves"
                )));
            }
            table.phase2[row] = true;
            table.expensive[row] = Some(x);
        }
        let n_cohort = table.stratum_counts();
        let n_sampled = table.sampled_counts();
        for i in 0..table.n_rows {
            if table.phase2[i] {
                let h = table.strata[i];
                table.weights[i] = n_cohort[h] as f64 / n_sampled[h] as f64;
            }
        }
        Ok(table)
    }
}

fn parse_field(field: &str, column: &str, row_no: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::Csv(format!(
            "row {}: column `{}`: cannot parse `{}` as a number",
            row_no + 1,
            column,
            field
        ))
    })
}
