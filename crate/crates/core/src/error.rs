//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cohort: column `{0}` not found")]
    MissingColumn(String),

    #[error("cohort: column `{column}` has length {found}, expected {expected}")]
    ColumnLength {
        column: String,
        found: usize,
        expected: usize,
    },

    #[error("cohort: stratification column `{0}` is continuous; only discrete columns can define strata")]
    ContinuousStratifier(String),

    #[error("cohort: expensive variable `{column}` is unobserved at row {row}")]
    ExpensiveUnobserved { column: String, row: usize },

    #[error("cohort: {0}")]
    InvalidCohort(String),

    #[error("cohort: csv ingestion failed: {0}")]
    Csv(String),

    #[error("model: {0}")]
    InvalidModel(String),

    #[error("glm: IRLS did not converge after {iterations} iterations (max |score| = {score:.3e})")]
    NonConvergence {
        iterations: usize,
        score: f64,
        last_beta: Vec<f64>,
    },

    #[error("glm: separation detected (|linear predictor| exceeded {cap}); supply an informative prior")]
    Separation { cap: f64 },

    #[error("glm: information matrix is singular or not positive definite")]
    SingularInformation,

    #[error("glm: variance estimation requires n_h >= 2 in every stratum (stratum {stratum} has {n_h})")]
    StratumTooSmall { stratum: usize, n_h: usize },

    #[error("allocation: all strata have zero influence standard deviation; nothing to allocate on")]
    AllZeroSd,

    #[error("allocation: infeasible box constraints: {0}")]
    InfeasibleAllocation(String),

    #[error("raking: calibration infeasible: Newton failed to meet the constraint tolerance after {iterations} iterations (residual = {residual:.3e})")]
    CalibrationInfeasible { iterations: usize, residual: f64 },

    #[error("raking: auxiliary matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("design: {0}")]
    InvalidDesign(String),

    #[error("sim: {0}")]
    InvalidScenario(String),

    #[error("sim: design `{design}` failed on {failures} of {reps} replicates (> {limit_pct}% exclusion limit); first failure: {first}")]
    TooManyExclusions {
        design: String,
        failures: usize,
        reps: usize,
        limit_pct: f64,
        first: String,
    },
}
