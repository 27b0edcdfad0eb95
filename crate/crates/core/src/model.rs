//! Model specifications, design matrices, and normal priors.

use nalgebra::{DMatrix, DVector};

use crate::cohort::CohortTable;
use crate::error::{Error, Result};

/// One design-matrix term. A linear spline contributes the two hinge columns
/// `min(a, knot)` and `max(a - knot, 0)`, so both slopes stay directly
/// interpretable.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Term {
    Main { column: String },
    Interaction { a: String, b: String },
    LinearSpline { column: String, knot: f64 },
}

impl Term {
    fn width(&self) -> usize {
        match self {
            Term::LinearSpline { .. } => 2,
            _ => 1,
        }
    }

    fn names(&self) -> Vec<String> {
        match self {
            Term::Main { column } => vec![column.clone()],
            Term::Interaction { a, b } => vec![format!("{a}:{b}")],
            Term::LinearSpline { column, knot } => vec![
                format!("min({column},{knot})"),
                format!("max({column}-{knot},0)"),
            ],
        }
    }
}

/// A logistic regression specification: response column plus ordered terms.
/// The design matrix always carries an intercept as its first column.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub terms: Vec<Term>,
}

impl ModelSpec {
    pub fn logistic(response: impl Into<String>, terms: Vec<Term>) -> Self {
        ModelSpec {
            response: response.into(),
            terms,
        }
    }

    /// Convenience constructor for a main-effects-only model.
    pub fn main_effects(response: impl Into<String>, columns: &[&str]) -> Self {
        ModelSpec::logistic(
            response,
            columns
                .iter()
                .map(|c| Term::Main {
                    column: c.to_string(),
                })
                .collect(),
        )
    }

    /// Number of coefficients including the intercept.
    pub fn n_coefficients(&self) -> usize {
        1 + self.terms.iter().map(Term::width).sum::<usize>()
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = vec!["(Intercept)".to_string()];
        for term in &self.terms {
            names.extend(term.names());
        }
        names
    }

    /// Coefficient index of the main effect of `column`, when present.
    pub fn coefficient_index(&self, column: &str) -> Option<usize> {
        let mut idx = 1;
        for term in &self.terms {
            if matches!(term, Term::Main { column: c } if c == column) {
                return Some(idx);
            }
            idx += term.width();
        }
        None
    }
}

/// Independent normal prior per coefficient; `+inf` variance marks a flat
/// (unpenalized) coordinate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorSpec {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PriorSpec {
    pub fn flat(p: usize) -> Self {
        PriorSpec {
            means: vec![0.0; p],
            variances: vec![f64::INFINITY; p],
        }
    }

    pub fn informative(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::InvalidModel(format!(
                "prior has {} means but {} variances",
                means.len(),
                variances.len()
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidModel(
                "prior variances must be positive".to_string(),
            ));
        }
        Ok(PriorSpec { means, variances })
    }

    /// Same shift and variance applied around every true coefficient, the
    /// form used for the simulation priors.
    pub fn shifted(truth: &[f64], shift: f64, variance: f64) -> Self {
        PriorSpec {
            means: truth.iter().map(|b| b + shift).collect(),
            variances: vec![variance; truth.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// True when every coordinate has finite variance.
    pub fn is_informative(&self) -> bool {
        self.variances.iter().all(|v| v.is_finite())
    }

    pub fn check_len(&self, p: usize) -> Result<()> {
        if self.len() != p {
            return Err(Error::InvalidModel(format!(
                "prior length {} does not match design width {}",
                self.len(),
                p
            )));
        }
        Ok(())
    }
}

/// Where design-matrix references to the expensive variable are resolved
/// from: the observed measurements, or a named imputed shadow column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XSource<'a> {
    Observed,
    Column(&'a str),
}

/// Builds the design matrix and response vector for `spec` over `rows`.
///
/// Column order is deterministic: intercept first, then the terms in spec
/// order. Interaction columns are elementwise products; spline terms emit
/// their two hinge columns. Rank deficiency is not checked here; the fit
/// rejects it.
pub fn build_design_matrix(
    table: &CohortTable,
    spec: &ModelSpec,
    x_source: XSource<'_>,
    rows: &[usize],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let xmat = build_design_only(table, spec, x_source, rows)?;
    let mut y = DVector::<f64>::zeros(rows.len());
    for (out_i, &row) in rows.iter().enumerate() {
        y[out_i] = resolve(table, x_source, &spec.response, row)?;
    }
    Ok((xmat, y))
}

fn resolve(table: &CohortTable, x_source: XSource<'_>, column: &str, row: usize) -> Result<f64> {
    if column == table.expensive_name() {
        match x_source {
            XSource::Observed => table
                .expensive(row)
                .ok_or_else(|| Error::ExpensiveUnobserved {
                    column: column.to_string(),
                    row,
                }),
            XSource::Column(name) => Ok(table.column(name)?[row]),
        }
    } else {
        Ok(table.column(column)?[row])
    }
}

/// The design matrix alone, without resolving the response; used to predict
/// over rows where the response (e.g. unmeasured X) is unavailable.
pub fn build_design_only(
    table: &CohortTable,
    spec: &ModelSpec,
    x_source: XSource<'_>,
    rows: &[usize],
) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = spec.n_coefficients();
    let value_of = |column: &str, row: usize| resolve(table, x_source, column, row);

    // Validate column references up front so errors do not depend on row order.
    for term in &spec.terms {
        let check = |c: &String| -> Result<()> {
            if c != table.expensive_name() {
                table.column(c)?;
            } else if let XSource::Column(name) = x_source {
                table.column(name)?;
            }
            Ok(())
        };
        match term {
            Term::Main { column } => check(column)?,
            Term::Interaction { a, b } => {
                check(a)?;
                check(b)?;
            }
            Term::LinearSpline { column, .. } => check(column)?,
        }
    }

    let mut xmat = DMatrix::<f64>::zeros(n, p);
    for (out_i, &row) in rows.iter().enumerate() {
        xmat[(out_i, 0)] = 1.0;
        let mut j = 1;
        for term in &spec.terms {
            match term {
                Term::Main { column } => {
                    xmat[(out_i, j)] = value_of(column, row)?;
                    j += 1;
                }
                Term::Interaction { a, b } => {
                    xmat[(out_i, j)] = value_of(a, row)? * value_of(b, row)?;
                    j += 1;
                }
                Term::LinearSpline { column, knot } => {
                    let a = value_of(column, row)?;
                    xmat[(out_i, j)] = a.min(*knot);
                    xmat[(out_i, j + 1)] = (a - knot).max(0.0);
                    j += 2;
                }
            }
        }
    }
    Ok(xmat)
}
