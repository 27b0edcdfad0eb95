//! Optimal multi-wave two-phase sampling designs for regression parameters.
//!
//! In a two-phase study, cheap variables (outcome `Y`, covariates `Z`,
//! auxiliaries `A`) are available for a whole cohort, while an expensive
//! variable `X` can only be measured on a phase-2 subsample. This crate
//! selects that subsample so the design-based (weighted / raking) estimate of
//! a regression coefficient is as precise as possible:
//!
//! * [`cohort`] — the cohort table, stratification, and CSV ingestion.
//! * [`model`] — outcome/imputation model specifications, design matrices,
//!   and normal prior specifications.
//! * [`glm`] — weighted and prior-penalized logistic regression, per-subject
//!   influence functions, and design-based variance.
//! * [`allocation`] — continuous Neyman allocation and the exact
//!   integer-optimal allocation under box constraints.
//! * [`raking`] — generalized raking calibration to cohort totals of plug-in
//!   influence functions, and the calibrated estimator.
//! * [`design`] — single-wave and two-wave design execution, including the
//!   prior-informed wave-1 design and adaptive wave-2 allocation.
//! * [`sim`] — synthetic-cohort generation and Monte Carlo comparison of
//!   designs (MSE and empirical relative efficiency).

pub mod allocation;
pub mod cohort;
pub mod design;
pub mod error;
pub mod glm;
mod linalg;
pub mod model;
pub mod raking;
pub mod sim;

pub use error::{Error, Result};
