//! Weighted and prior-penalized logistic regression with analytic influence
//! functions.
//!
//! The fit maximizes the penalized weighted log-likelihood
//!
//! ```text
//! l(b) = sum_i w_i [ y_i eta_i - log(1 + exp(eta_i)) ] - 1/2 sum_j (b_j - m_j)^2 / v_j
//! ```
//!
//! by iteratively reweighted least squares with step-halving. With flat
//! priors this is the weighted MLE; with informative normal priors it is the
//! MAP estimate, and the inverse of [`FitResult::total_information`] is the
//! Laplace posterior covariance.

use nalgebra::{DMatrix, DVector};

use crate::cohort::StratumSummary;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::PriorSpec;

const MAX_ITER: usize = 50;
const SCORE_TOL: f64 = 1e-8;
const REL_STEP_TOL: f64 = 1e-10;
/// Linear predictors beyond this magnitude indicate separation in an
/// unpenalized fit.
pub const ETA_CAP: f64 = 30.0;

/// Converged fit of the weighted / penalized logistic model.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: DVector<f64>,
    /// Fisher information of the penalized objective at `beta`:
    /// `X' diag(w mu (1-mu)) X + diag(1/v)`.
    pub total_information: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted binomial deviance (unpenalized part), `-2 sum w_i log-lik_i`.
    pub deviance: f64,
    /// Penalized log-likelihood at each accepted iterate; non-decreasing.
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn coefficients(&self) -> &[f64] {
        self.beta.as_slice()
    }
}

/// Per-subject influence vectors for one fit. Row `i` is the one-step
/// delta-beta `I^{-1} w_i (y_i - mu_i) x_i`, so the sum of rows approximates
/// the estimator's displacement directly.
#[derive(Debug, Clone)]
pub struct InfluenceSet {
    pub h: DMatrix<f64>,
    /// Index of the coefficient the design targets.
    pub target_column: usize,
}

impl InfluenceSet {
    /// The target-coefficient component for each subject.
    pub fn target(&self) -> Vec<f64> {
        self.h.column(self.target_column).iter().copied().collect()
    }
}

#[inline]
pub(crate) fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

struct Penalty {
    mean: DVector<f64>,
    precision: DVector<f64>,
}

impl Penalty {
    fn from_prior(prior: &PriorSpec, p: usize) -> Result<Self> {
        prior.check_len(p)?;
        Ok(Penalty {
            mean: DVector::from_column_slice(&prior.means),
            precision: DVector::from_iterator(
                p,
                prior
                    .variances
                    .iter()
                    .map(|&v| if v.is_finite() { 1.0 / v } else { 0.0 }),
            ),
        })
    }

    fn is_active(&self) -> bool {
        self.precision.iter().any(|&d| d > 0.0)
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        0.5 * beta
            .iter()
            .zip(self.mean.iter())
            .zip(self.precision.iter())
            .map(|((b, m), d)| d * (b - m) * (b - m))
            .sum::<f64>()
    }
}

/// Penalized weighted log-likelihood, score, and information at `beta`.
fn evaluate(
    xmat: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    penalty: &Penalty,
    beta: &DVector<f64>,
) -> (f64, DVector<f64>, DMatrix<f64>, f64) {
    let eta = xmat * beta;
    let mut loglik = 0.0;
    let mut resid = DVector::<f64>::zeros(y.len());
    let mut wdiag = DVector::<f64>::zeros(y.len());
    let mut max_eta = 0.0f64;
    for i in 0..y.len() {
        let e = eta[i];
        max_eta = max_eta.max(e.abs());
        let mu = expit(e);
        loglik += w[i] * (y[i] * e - log1p_exp(e));
        resid[i] = w[i] * (y[i] - mu);
        // Clamp inside the curvature term so the normal equations stay
        // positive definite even when a penalized fit runs far out.
        let mu_c = expit(e.clamp(-ETA_CAP, ETA_CAP));
        wdiag[i] = w[i] * mu_c * (1.0 - mu_c);
    }
    let mut score = xmat.transpose() * &resid;
    for j in 0..beta.len() {
        score[j] -= penalty.precision[j] * (beta[j] - penalty.mean[j]);
    }
    let mut info = DMatrix::<f64>::zeros(beta.len(), beta.len());
    // X' diag(wdiag) X accumulated column-wise.
    for i in 0..y.len() {
        let row = xmat.row(i);
        let wi = wdiag[i];
        for a in 0..beta.len() {
            let ra = row[a] * wi;
            for b in a..beta.len() {
                info[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..beta.len() {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
        info[(a, a)] += penalty.precision[a];
    }
    (loglik - penalty.value(beta), score, info, max_eta)
}

/// Fits the weighted logistic model, optionally penalized by independent
/// normal priors. `prior = None` means flat priors on every coefficient.
pub fn fit_weighted_logistic(
    xmat: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    prior: Option<&PriorSpec>,
) -> Result<FitResult> {
    let (n, p) = xmat.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidModel(format!(
            "design has {n} rows but response/weights have {}/{}",
            y.len(),
            w.len()
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidModel("empty design matrix".to_string()));
    }
    if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
        return Err(Error::InvalidModel(
            "weights must be positive and finite".to_string(),
        ));
    }
    if y.iter().any(|&yi| yi != 0.0 && yi != 1.0) {
        return Err(Error::InvalidModel(
            "response must be binary (0/1)".to_string(),
        ));
    }
    let flat = PriorSpec::flat(p);
    let penalty = Penalty::from_prior(prior.unwrap_or(&flat), p)?;
    let penalized = penalty.is_active();

    // Start at the prior mean when informative; zero otherwise.
    let mut beta = if penalized {
        penalty.mean.clone()
    } else {
        DVector::<f64>::zeros(p)
    };

    let mut trace = Vec::new();
    let (mut obj, mut score, mut info, mut max_eta) = evaluate(xmat, y, w, &penalty, &beta);
    trace.push(obj);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITER {
        if !penalized && max_eta > ETA_CAP {
            return Err(Error::Separation { cap: ETA_CAP });
        }
        let score_inf = score.amax();
        if score_inf < SCORE_TOL {
            converged = true;
            break;
        }
        let direction = linalg::spd_solve(&info, &score)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &direction * step;
            let (obj_new, score_new, info_new, max_eta_new) =
                evaluate(xmat, y, w, &penalty, &candidate);
            if obj_new >= obj - 1e-12 * (1.0 + obj.abs()) {
                let rel_step = (step * direction.amax()) / beta.amax().max(1.0);
                beta = candidate;
                obj = obj_new;
                score = score_new;
                info = info_new;
                max_eta = max_eta_new;
                trace.push(obj);
                accepted = true;
                iterations = iter + 1;
                if rel_step < REL_STEP_TOL {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = converged || score.amax() < SCORE_TOL;
            break;
        }
    }

    if !penalized && max_eta > ETA_CAP {
        return Err(Error::Separation { cap: ETA_CAP });
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            score: score.amax(),
            last_beta: beta.as_slice().to_vec(),
        });
    }

    // Weighted binomial deviance at the optimum.
    let eta = xmat * &beta;
    let deviance = 2.0
        * (0..n)
            .map(|i| w[i] * (log1p_exp(eta[i]) - y[i] * eta[i]))
            .sum::<f64>();

    Ok(FitResult {
        beta,
        total_information: info,
        converged,
        iterations,
        deviance,
        objective_trace: trace,
    })
}

/// One-step delta-beta influence functions for a converged fit:
/// `h_i = I^{-1} w_i (y_i - mu_i) x_i`.
pub fn influence_functions(
    fit: &FitResult,
    xmat: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    target_column: usize,
) -> Result<InfluenceSet> {
    if !fit.converged {
        return Err(Error::InvalidModel(
            "influence functions require a converged fit".to_string(),
        ));
    }
    let inv = linalg::spd_inverse(&fit.total_information)?;
    let (n, p) = xmat.shape();
    let eta = xmat * &fit.beta;
    let mut scores = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        let r = w[i] * (y[i] - expit(eta[i]));
        for j in 0..p {
            scores[(i, j)] = r * xmat[(i, j)];
        }
    }
    Ok(InfluenceSet {
        h: scores * inv, // inv is symmetric
        target_column,
    })
}

/// Sample standard deviation of the target influence component within each
/// stratum (zero for strata with fewer than two rows).
pub fn influence_stratum_sd(
    influence: &InfluenceSet,
    strata: &[usize],
    n_strata: usize,
) -> Vec<f64> {
    per_stratum_sd(&influence.target(), strata, n_strata)
}

pub(crate) fn per_stratum_sd(values: &[f64], strata: &[usize], n_strata: usize) -> Vec<f64> {
    let mut count = vec![0usize; n_strata];
    let mut mean = vec![0.0f64; n_strata];
    for (v, &h) in values.iter().zip(strata) {
        count[h] += 1;
        mean[h] += v;
    }
    for h in 0..n_strata {
        if count[h] > 0 {
            mean[h] /= count[h] as f64;
        }
    }
    let mut ss = vec![0.0f64; n_strata];
    for (v, &h) in values.iter().zip(strata) {
        let d = v - mean[h];
        ss[h] += d * d;
    }
    (0..n_strata)
        .map(|h| {
            if count[h] >= 2 {
                (ss[h] / (count[h] - 1) as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Design-based variance of the weighted estimator under stratified sampling
/// without replacement, with the finite-population correction `1 - n_h/N_h`.
///
/// `rows` are the influence vectors of the sampled rows (already weighted),
/// `strata` their stratum labels, and `summaries` supplies `N_h`. Any stratum
/// that contributes rows must contribute at least two.
pub fn sandwich_variance(
    rows: &DMatrix<f64>,
    strata: &[usize],
    summaries: &[StratumSummary],
) -> Result<DMatrix<f64>> {
    let (n, p) = rows.shape();
    if strata.len() != n {
        return Err(Error::InvalidModel(format!(
            "{n} influence rows but {} stratum labels",
            strata.len()
        )));
    }
    let n_strata = summaries.len();
    let mut count = vec![0usize; n_strata];
    for &h in strata {
        count[h] += 1;
    }
    for (h, &c) in count.iter().enumerate() {
        if c == 1 {
            return Err(Error::StratumTooSmall { stratum: h, n_h: c });
        }
    }
    let mut means = DMatrix::<f64>::zeros(n_strata, p);
    for (i, &h) in strata.iter().enumerate() {
        for j in 0..p {
            means[(h, j)] += rows[(i, j)];
        }
    }
    for h in 0..n_strata {
        if count[h] > 0 {
            for j in 0..p {
                means[(h, j)] /= count[h] as f64;
            }
        }
    }
    let mut variance = DMatrix::<f64>::zeros(p, p);
    let mut centered = DVector::<f64>::zeros(p);
    for (i, &h) in strata.iter().enumerate() {
        let n_h = count[h] as f64;
        let cap = summaries[h].n_cohort as f64;
        let fpc = 1.0 - n_h / cap;
        let factor = fpc * n_h / (n_h - 1.0);
        for j in 0..p {
            centered[j] = rows[(i, j)] - means[(h, j)];
        }
        for a in 0..p {
            for b in a..p {
                variance[(a, b)] += factor * centered[a] * centered[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            variance[(a, b)] = variance[(b, a)];
        }
    }
    Ok(variance)
}
