//! Generalized raking: calibration of sampling weights to cohort totals of
//! plug-in influence functions, and the calibrated (raking) estimator.
//!
//! Calibration minimizes the Poisson distance
//! `d(a, b) = a log(a/b) + (b - a)` between calibrated and design weights
//! subject to the constraints
//!
//! ```text
//! sum_sampled g_i w_i S_i = sum_cohort S_i,
//! ```
//!
//! which has the multiplicative solution `g_i = exp(S_i' lambda)`. The
//! multipliers are found by Newton's method on the convex dual
//! `sum_i w_i exp(S_i' lambda) - totals' lambda`.

use nalgebra::{DMatrix, DVector};

use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::glm::{self, FitResult, InfluenceSet};
use crate::linalg;
use crate::model::{self, ModelSpec, PriorSpec, XSource};

const MAX_NEWTON_ITER: usize = 100;
const RESIDUAL_TOL: f64 = 1e-10;
/// Ridge variance used to stabilize an imputation fit that separates; wide
/// enough to leave estimable coefficients untouched.
const STABILIZER_VARIANCE: f64 = 1e4;

/// Calibrated raking weights for one sample.
#[derive(Debug, Clone)]
pub struct RakingWeights {
    /// Multiplicative adjustment `g_i = exp(S_i' lambda)` per sampled row.
    pub multiplier: Vec<f64>,
    /// Calibrated weights `g_i w_i` per sampled row.
    pub calibrated: Vec<f64>,
    /// Lagrange multipliers, one per auxiliary column.
    pub lambda: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest remaining constraint violation, scaled by `1 + |total|`.
    pub max_residual: f64,
}

/// Full output of the calibrated analysis: weights, the re-fitted outcome
/// model under calibrated weights, and its design-based variance.
#[derive(Debug, Clone)]
pub struct RakingResult {
    pub weights: RakingWeights,
    pub calibrated_fit: FitResult,
    /// Design-based covariance of the calibrated coefficients, from
    /// calibration-residualized influence contributions.
    pub variance: DMatrix<f64>,
    /// Index of the expensive-variable coefficient in the outcome model.
    pub target_index: usize,
}

impl RakingResult {
    pub fn target_estimate(&self) -> f64 {
        self.calibrated_fit.beta[self.target_index]
    }

    pub fn target_se(&self) -> f64 {
        self.variance[(self.target_index, self.target_index)]
            .max(0.0)
            .sqrt()
    }
}

fn dual_state(
    aux: &DMatrix<f64>,
    totals: &DVector<f64>,
    weights: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
    let (n, q) = aux.shape();
    let mut value = -totals.dot(lambda);
    let mut gradient = -totals.clone();
    let mut hessian = DMatrix::<f64>::zeros(q, q);
    for i in 0..n {
        let row = aux.row(i);
        let exponent = row.transpose().dot(lambda);
        if exponent.abs() > 200.0 {
            return None; // heading for overflow; caller halves the step
        }
        let cw = weights[i] * exponent.exp();
        value += cw;
        for a in 0..q {
            gradient[a] += cw * row[a];
            for b in a..q {
                hessian[(a, b)] += cw * row[a] * row[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            hessian[(a, b)] = hessian[(b, a)];
        }
    }
    Some((value, gradient, hessian))
}

fn scaled_residual(gradient: &DVector<f64>, totals: &DVector<f64>) -> f64 {
    gradient
        .iter()
        .zip(totals.iter())
        .map(|(g, t)| g.abs() / (1.0 + t.abs()))
        .fold(0.0, f64::max)
}

/// Solves the calibration equations for `lambda` and returns the calibrated
/// weights. `sampled_aux` holds the auxiliary vector of each sampled row,
/// `cohort_totals` the known cohort column sums.
pub fn rake(
    sampled_aux: &DMatrix<f64>,
    cohort_totals: &DVector<f64>,
    base_weights: &DVector<f64>,
) -> Result<RakingWeights> {
    let (n, q) = sampled_aux.shape();
    if cohort_totals.len() != q {
        return Err(Error::InvalidModel(format!(
            "{q} auxiliary columns but {} totals",
            cohort_totals.len()
        )));
    }
    if base_weights.len() != n {
        return Err(Error::InvalidModel(format!(
            "{n} sampled rows but {} weights",
            base_weights.len()
        )));
    }
    if q > n {
        return Err(Error::InvalidModel(format!(
            "more auxiliary columns ({q}) than sampled rows ({n})"
        )));
    }
    let collinear = linalg::collinear_columns(sampled_aux);
    if !collinear.is_empty() {
        return Err(Error::RankDeficient {
            columns: collinear.iter().map(|j| format!("c{j}")).collect(),
        });
    }

    let mut lambda = DVector::<f64>::zeros(q);
    let (mut value, mut gradient, mut hessian) =
        dual_state(sampled_aux, cohort_totals, base_weights, &lambda)
            .expect("lambda = 0 cannot overflow");
    let mut residual = scaled_residual(&gradient, cohort_totals);
    let mut iterations = 0;

    while residual >= RESIDUAL_TOL && iterations < MAX_NEWTON_ITER {
        let direction = linalg::spd_solve(&hessian, &gradient)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &lambda - &direction * step;
            if let Some((v, g, h)) =
                dual_state(sampled_aux, cohort_totals, base_weights, &candidate)
            {
                if v <= value + 1e-12 * (1.0 + value.abs()) {
                    lambda = candidate;
                    value = v;
                    gradient = g;
                    hessian = h;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        residual = scaled_residual(&gradient, cohort_totals);
    }

    if residual >= RESIDUAL_TOL {
        return Err(Error::CalibrationInfeasible {
            iterations,
            residual,
        });
    }

    let multiplier: Vec<f64> = (0..n)
        .map(|i| sampled_aux.row(i).transpose().dot(&lambda).exp())
        .collect();
    let calibrated: Vec<f64> = multiplier
        .iter()
        .zip(base_weights.iter())
        .map(|(g, w)| g * w)
        .collect();
    Ok(RakingWeights {
        multiplier,
        calibrated,
        lambda,
        converged: true,
        iterations,
        max_residual: residual,
    })
}

/// Weighted logistic fit that falls back to a wide ridge when the
/// unpenalized fit separates. Small phase-2 samples routinely produce
/// quasi-separated imputation fits; the ridge reproduces the bounded
/// estimates a deviance-converged fitter would report.
pub(crate) fn fit_with_stabilizer(
    xmat: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<FitResult> {
    match glm::fit_weighted_logistic(xmat, y, w, None) {
        Ok(fit) => Ok(fit),
        Err(Error::Separation { .. }) | Err(Error::NonConvergence { .. }) => {
            let ridge = PriorSpec::informative(
                vec![0.0; xmat.ncols()],
                vec![STABILIZER_VARIANCE; xmat.ncols()],
            )?;
            glm::fit_weighted_logistic(xmat, y, w, Some(&ridge))
        }
        Err(e) => Err(e),
    }
}

/// Shadow column holding the plug-in imputed expensive variable.
pub const PLUGIN_XHAT: &str = "xhat_plugin";

/// Builds the plug-in auxiliary matrix: influence functions of the outcome
/// model fitted to the whole cohort with the expensive variable replaced by
/// its imputed probability.
///
/// Steps: (i) fit the imputation model on the phase-2 rows by weighted
/// logistic regression, (ii) impute `xhat` for every cohort row, (iii) fit
/// the outcome model on the full cohort using `xhat`, (iv) return that fit's
/// influence functions for all rows.
pub fn build_plugin_auxiliaries(
    table: &CohortTable,
    outcome_spec: &ModelSpec,
    imputation_spec: &ModelSpec,
) -> Result<DMatrix<f64>> {
    let sampled = table.phase2_rows();
    if sampled.is_empty() {
        return Err(Error::InvalidModel(
            "plug-in auxiliaries need a nonempty phase-2 sample".to_string(),
        ));
    }
    let observed: Vec<f64> = sampled
        .iter()
        .map(|&i| table.expensive(i).expect("sampled rows carry X"))
        .collect();
    if observed.iter().all(|&x| x == observed[0]) {
        return Err(Error::InvalidModel(
            "phase-2 sample must contain both values of the expensive variable".to_string(),
        ));
    }

    // (i) weighted imputation fit on the sampled rows.
    let (imp_x, imp_y) =
        model::build_design_matrix(table, imputation_spec, XSource::Observed, &sampled)?;
    let w = DVector::from_iterator(sampled.len(), sampled.iter().map(|&i| table.weight(i)));
    let imp_fit = fit_with_stabilizer(&imp_x, &imp_y, &w)?;

    // (ii) imputed probability for every cohort row.
    let all_rows: Vec<usize> = (0..table.n_rows()).collect();
    let imp_all = model::build_design_only(table, imputation_spec, XSource::Observed, &all_rows)?;
    let eta = &imp_all * &imp_fit.beta;
    let xhat: Vec<f64> = eta.iter().map(|&e| glm::expit(e)).collect();

    // (iii) full-cohort outcome fit with the imputed values.
    let shadowed = table.with_column(PLUGIN_XHAT, xhat)?;
    let (out_x, out_y) = model::build_design_matrix(
        &shadowed,
        outcome_spec,
        XSource::Column(PLUGIN_XHAT),
        &all_rows,
    )?;
    let ones = DVector::from_element(table.n_rows(), 1.0);
    let out_fit = glm::fit_weighted_logistic(&out_x, &out_y, &ones, None)?;

    // (iv) its influence functions over the whole cohort.
    let influence = glm::influence_functions(&out_fit, &out_x, &out_y, &ones, 0)?;
    Ok(influence.h)
}

/// Runs the calibrated analysis end to end: plug-in auxiliaries, raking to
/// their cohort totals (plus the count constraint), a weighted re-fit of the
/// outcome model under the calibrated weights, and the design-based variance
/// with calibration-residualized influence contributions.
pub fn raking_estimator(
    table: &CohortTable,
    outcome_spec: &ModelSpec,
    imputation_spec: &ModelSpec,
) -> Result<RakingResult> {
    let target_index = outcome_spec
        .coefficient_index(table.expensive_name())
        .ok_or_else(|| {
            Error::InvalidModel(format!(
                "outcome model has no main effect for `{}`",
                table.expensive_name()
            ))
        })?;
    let aux = build_plugin_auxiliaries(table, outcome_spec, imputation_spec)?;
    let n_cohort = table.n_rows();
    let p = aux.ncols();
    let q = p + 1;

    // Calibration matrix: all-ones count column plus the influence columns.
    let sampled = table.phase2_rows();
    let n = sampled.len();
    let mut s_mat = DMatrix::<f64>::zeros(n, q);
    for (r, &i) in sampled.iter().enumerate() {
        s_mat[(r, 0)] = 1.0;
        for j in 0..p {
            s_mat[(r, j + 1)] = aux[(i, j)];
        }
    }
    let mut totals = DVector::<f64>::zeros(q);
    totals[0] = n_cohort as f64;
    for j in 0..p {
        totals[j + 1] = aux.column(j).sum();
    }
    let base_w = DVector::from_iterator(n, sampled.iter().map(|&i| table.weight(i)));

    let coef_names = outcome_spec.coefficient_names();
    let weights = rake(&s_mat, &totals, &base_w).map_err(|e| match e {
        Error::RankDeficient { columns } => Error::RankDeficient {
            columns: columns
                .iter()
                .map(|c| {
                    let idx: usize = c.trim_start_matches('c').parse().unwrap_or(0);
                    if idx == 0 {
                        "(count)".to_string()
                    } else {
                        format!("h[{}]", coef_names[idx - 1])
                    }
                })
                .collect(),
        },
        other => other,
    })?;

    // Re-fit the outcome model under the calibrated weights (the final
    // analysis is strictly unpenalized).
    let (out_x, out_y) =
        model::build_design_matrix(table, outcome_spec, XSource::Observed, &sampled)?;
    let cal_w = DVector::from_column_slice(&weights.calibrated);
    let calibrated_fit = glm::fit_weighted_logistic(&out_x, &out_y, &cal_w, None)?;

    // Variance: residualize the weighted influence contributions on the
    // calibration columns, then apply the stratified fpc formula.
    let influence =
        glm::influence_functions(&calibrated_fit, &out_x, &out_y, &cal_w, target_index)?;
    let residualized = residualize(&influence.h, &s_mat)?;
    let strata_of_sampled: Vec<usize> = sampled.iter().map(|&i| table.stratum_of(i)).collect();
    let variance =
        glm::sandwich_variance(&residualized, &strata_of_sampled, &table.summaries(None))?;

    Ok(RakingResult {
        weights,
        calibrated_fit,
        variance,
        target_index,
    })
}

/// Least-squares residual of each column of `u` on the column span of `s`.
fn residualize(u: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = s.transpose() * s;
    let chol = linalg::spd_factor(&gram)?;
    let coeffs = chol.solve(&(s.transpose() * u));
    Ok(u - s * coeffs)
}

/// Plain (uncalibrated) weighted estimator with its design-based variance,
/// the baseline the raking estimator is compared against.
pub fn weighted_estimator(table: &CohortTable, outcome_spec: &ModelSpec) -> Result<RakingResult> {
    let target_index = outcome_spec
        .coefficient_index(table.expensive_name())
        .ok_or_else(|| {
            Error::InvalidModel(format!(
                "outcome model has no main effect for `{}`",
                table.expensive_name()
            ))
        })?;
    let sampled = table.phase2_rows();
    let (out_x, out_y) =
        model::build_design_matrix(table, outcome_spec, XSource::Observed, &sampled)?;
    let w = DVector::from_iterator(sampled.len(), sampled.iter().map(|&i| table.weight(i)));
    let fit = glm::fit_weighted_logistic(&out_x, &out_y, &w, None)?;
    let influence = glm::influence_functions(&fit, &out_x, &out_y, &w, target_index)?;
    let strata_of_sampled: Vec<usize> = sampled.iter().map(|&i| table.stratum_of(i)).collect();
    let variance =
        glm::sandwich_variance(&influence.h, &strata_of_sampled, &table.summaries(None))?;
    let n = sampled.len();
    Ok(RakingResult {
        weights: RakingWeights {
            multiplier: vec![1.0; n],
            calibrated: w.as_slice().to_vec(),
            lambda: DVector::zeros(0),
            converged: true,
            iterations: 0,
            max_residual: 0.0,
        },
        calibrated_fit: fit,
        variance,
        target_index,
    })
}

/// Influence functions of the full-cohort fit with the expensive variable
/// taken as fully observed; used by the full-data optimal design and as the
/// oracle in tests.
pub fn full_data_influence(
    table: &CohortTable,
    outcome_spec: &ModelSpec,
    target_index: usize,
) -> Result<InfluenceSet> {
    let all_rows: Vec<usize> = (0..table.n_rows()).collect();
    let (xmat, y) = model::build_design_matrix(table, outcome_spec, XSource::Observed, &all_rows)?;
    let ones = DVector::from_element(table.n_rows(), 1.0);
    let fit = glm::fit_weighted_logistic(&xmat, &y, &ones, None)?;
    glm::influence_functions(&fit, &xmat, &y, &ones, target_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn presatisfied_constraints_leave_weights_unchanged() {
        // Sample = cohort, weights 1: totals already match.
        let aux = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 1.0, -0.2, 1.0, 0.9, 1.0, 0.1]);
        let totals = DVector::from_column_slice(&[4.0, 1.3]);
        let w = DVector::from_element(4, 1.0);
        let raked = rake(&aux, &totals, &w).unwrap();
        assert_eq!(raked.iterations, 0);
        for g in &raked.multiplier {
            assert_abs_diff_eq!(*g, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn count_constraint_reproduces_the_ratio_adjustment() {
        let aux = DMatrix::from_element(3, 1, 1.0);
        let totals = DVector::from_column_slice(&[30.0]);
        let w = DVector::from_column_slice(&[2.0, 4.0, 6.0]);
        let raked = rake(&aux, &totals, &w).unwrap();
        // g_i w_i = w_i N / sum(w).
        for (cw, wi) in raked.calibrated.iter().zip([2.0, 4.0, 6.0]) {
            assert_abs_diff_eq!(*cw, wi * 30.0 / 12.0, epsilon = 1e-9);
        }
    }

    /// Independent oracle for the 2-d moment equations: coordinate-wise
    /// bisection iterated to a fixed point, no Newton steps involved.
    fn bisection_oracle(
        aux: &DMatrix<f64>,
        totals: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        let mut lambda = DVector::<f64>::zeros(2);
        for _ in 0..400 {
            for k in 0..2 {
                let mut lo = -20.0f64;
                let mut hi = 20.0f64;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let mut trial = lambda.clone();
                    trial[k] = mid;
                    let mut moment = 0.0;
                    for i in 0..aux.nrows() {
                        let e = aux.row(i).transpose().dot(&trial);
                        moment += w[i] * e.exp() * aux[(i, k)];
                    }
                    // The moment is increasing in lambda_k.
                    if moment < totals[k] {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lambda[k] = 0.5 * (lo + hi);
            }
        }
        lambda
    }

    #[test]
    fn newton_matches_the_bisection_oracle_in_two_dimensions() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let n = 50;
        let mut aux = DMatrix::<f64>::zeros(n, 2);
        let mut w = DVector::<f64>::zeros(n);
        for i in 0..n {
            aux[(i, 0)] = 1.0;
            aux[(i, 1)] = rng.random_range(-1.0..1.0);
            w[i] = rng.random_range(1.0..5.0);
        }
        // Totals slightly off the weighted sums so lambda != 0.
        let base = aux.transpose() * &w;
        let totals = DVector::from_column_slice(&[base[0] * 1.15, base[1] + 3.0]);
        let raked = rake(&aux, &totals, &w).unwrap();
        let oracle = bisection_oracle(&aux, &totals, &w);
        assert!((raked.lambda[0] - oracle[0]).abs() < 1e-6);
        assert!((raked.lambda[1] - oracle[1]).abs() < 1e-6);
    }

    #[test]
    fn residuals_meet_tolerance_and_multipliers_stay_positive() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.random_range(10..60);
            let q = rng.random_range(1..4usize).min(n);
            let mut aux = DMatrix::<f64>::zeros(n, q);
            let mut w = DVector::<f64>::zeros(n);
            for i in 0..n {
                for j in 0..q {
                    aux[(i, j)] = if j == 0 {
                        1.0
                    } else {
                        rng.random_range(-2.0..2.0)
                    };
                }
                w[i] = rng.random_range(1.0..6.0);
            }
            let reference = aux.transpose() * &w;
            let totals = DVector::from_fn(q, |j, _| {
                reference[j] * rng.random_range(0.85..1.2) + rng.random_range(-0.5..0.5)
            });
            match rake(&aux, &totals, &w) {
                Ok(raked) => {
                    assert!(raked.max_residual < 1e-8);
                    assert!(raked.multiplier.iter().all(|&g| g > 0.0));
                    // Verify the constraints directly.
                    for j in 0..q {
                        let achieved: f64 =
                            (0..n).map(|i| raked.calibrated[i] * aux[(i, j)]).sum();
                        assert!(
                            (achieved - totals[j]).abs() < 1e-8 * (1.0 + totals[j].abs()),
                            "column {j}"
                        );
                    }
                }
                Err(Error::CalibrationInfeasible { .. }) => {} // random totals can be unreachable
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn rank_deficiency_names_the_collinear_columns() {
        let mut aux = DMatrix::<f64>::zeros(6, 3);
        for i in 0..6 {
            aux[(i, 0)] = 1.0;
            aux[(i, 1)] = i as f64;
            aux[(i, 2)] = 3.0 * i as f64; // multiple of column 1
        }
        let totals = DVector::from_column_slice(&[6.0, 15.0, 45.0]);
        let w = DVector::from_element(6, 1.0);
        match rake(&aux, &totals, &w) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["c2"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn more_columns_than_rows_is_rejected() {
        let aux = DMatrix::<f64>::zeros(2, 3);
        let totals = DVector::<f64>::zeros(3);
        let w = DVector::from_element(2, 1.0);
        assert!(rake(&aux, &totals, &w).is_err());
    }

    /// Small synthetic two-phase cohort with a binary X, a surrogate A, and
    /// a logistic outcome; used by the plug-in tests.
    fn synthetic_cohort(n: usize, sens: f64, spec: f64, seed: u64) -> CohortTable {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xi = if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 };
            let ai = if xi == 1.0 {
                if rng.random::<f64>() < sens {
                    1.0
                } else {
                    0.0
                }
            } else if rng.random::<f64>() < spec {
                0.0
            } else {
                1.0
            };
            let zi: f64 = rng.random_range(0.0..1.0);
            let eta = -1.0 + 1.2 * xi + 0.8 * zi;
            let yi = if rng.random::<f64>() < glm::expit(eta) {
                1.0
            } else {
                0.0
            };
            x.push(xi);
            a.push(ai);
            z.push(zi);
            y.push(yi);
        }
        let table = CohortTable::new(
            vec![
                ("y".to_string(), y),
                ("a".to_string(), a),
                ("z".to_string(), z),
            ],
            "y",
            "x",
            x.into_iter().map(Some).collect(),
        )
        .unwrap();
        let (table, _) = table.stratify_by(&["a", "y"]).unwrap();
        table
    }

    fn sample_by_stratum(table: &CohortTable, per_stratum: usize, seed: u64) -> CohortTable {
        use rand::seq::IndexedRandom;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (design, oracle) = table.split_oracle();
        let mut rows = Vec::new();
        for h in 0..design.n_strata() {
            let members: Vec<usize> = (0..design.n_rows())
                .filter(|&i| design.stratum_of(i) == h)
                .collect();
            let mut chosen: Vec<usize> = members
                .choose_multiple(&mut rng, per_stratum.min(members.len()))
                .copied()
                .collect();
            chosen.sort_unstable();
            rows.extend(chosen);
        }
        let x: Vec<f64> = rows.iter().map(|&i| oracle[i].unwrap()).collect();
        design.with_wave(&rows, &x).unwrap()
    }

    #[test]
    fn perfect_surrogate_recovers_full_data_influence() {
        // A = X exactly: the plug-in auxiliaries should track the full-data
        // influence functions almost perfectly.
        let table = synthetic_cohort(5000, 1.0, 1.0, 99);
        let sampled = sample_by_stratum(&table, 400, 7);
        let outcome = ModelSpec::main_effects("y", &["x", "z"]);
        let imputation = ModelSpec::main_effects("x", &["a", "z"]);
        let aux = build_plugin_auxiliaries(&sampled, &outcome, &imputation).unwrap();
        let truth = full_data_influence(&table, &outcome, 1).unwrap();
        for j in 0..aux.ncols() {
            let a: Vec<f64> = aux.column(j).iter().copied().collect();
            let b: Vec<f64> = truth.h.column(j).iter().copied().collect();
            let corr = correlation(&a, &b);
            assert!(corr > 0.99, "component {j}: correlation {corr}");
        }
    }

    #[test]
    fn intercept_only_imputation_uses_the_weighted_mean() {
        let table = synthetic_cohort(600, 0.8, 0.8, 5);
        let sampled = sample_by_stratum(&table, 40, 11);
        let outcome = ModelSpec::main_effects("y", &["x", "z"]);
        let imputation = ModelSpec::logistic("x", vec![]);
        // A constant imputed X duplicates the intercept of the outcome
        // model, so the degenerate build reports the rank deficiency.
        assert!(matches!(
            build_plugin_auxiliaries(&sampled, &outcome, &imputation),
            Err(Error::SingularInformation)
        ));

        // The fitted probability of an intercept-only weighted logistic fit
        // is the weighted sample mean of X.
        let rows = sampled.phase2_rows();
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in &rows {
            num += sampled.weight(i) * sampled.expensive(i).unwrap();
            den += sampled.weight(i);
        }
        let mean = num / den;
        let (imp_x, imp_y) =
            model::build_design_matrix(&sampled, &imputation, XSource::Observed, &rows).unwrap();
        let w = DVector::from_iterator(rows.len(), rows.iter().map(|&i| sampled.weight(i)));
        let fit = glm::fit_weighted_logistic(&imp_x, &imp_y, &w, None).unwrap();
        assert_abs_diff_eq!(glm::expit(fit.beta[0]), mean, epsilon = 1e-8);
    }

    #[test]
    fn census_raking_equals_the_full_data_fit() {
        let table = synthetic_cohort(800, 0.9, 0.9, 31);
        // Sample everything.
        let (design, oracle) = table.split_oracle();
        let rows: Vec<usize> = (0..design.n_rows()).collect();
        let x: Vec<f64> = oracle.iter().map(|v| v.unwrap()).collect();
        let census = design.with_wave(&rows, &x).unwrap();

        let outcome = ModelSpec::main_effects("y", &["x", "z"]);
        let imputation = ModelSpec::main_effects("x", &["a", "z"]);
        let raked = raking_estimator(&census, &outcome, &imputation).unwrap();

        let all: Vec<usize> = (0..table.n_rows()).collect();
        let (xmat, y) =
            model::build_design_matrix(&table, &outcome, XSource::Observed, &all).unwrap();
        let ones = DVector::from_element(table.n_rows(), 1.0);
        let mle = glm::fit_weighted_logistic(&xmat, &y, &ones, None).unwrap();
        for j in 0..mle.beta.len() {
            assert_abs_diff_eq!(raked.calibrated_fit.beta[j], mle.beta[j], epsilon = 1e-10);
        }
        // The sampling term of the variance vanishes at a census.
        assert!(raked.variance.amax() < 1e-12);
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }
}
