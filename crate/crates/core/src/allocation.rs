//! Continuous Neyman allocation and exact integer-optimal allocation with
//! box constraints.
//!
//! The integer allocation minimizes the stratified variance proxy
//!
//! ```text
//! sum_h N_h^2 sd_h^2 (1/n_h - 1/N_h)
//! ```
//!
//! by priority allocation: every stratum starts at its floor and the next
//! unit goes to the stratum with the largest priority
//! `N_h sd_h / sqrt(n_h (n_h + 1))` among those below their ceiling. Because
//! the objective is convex and separable in each `n_h`, the greedy path is
//! exactly optimal; the finite-population term is constant in `n_h`, so the
//! same path minimizes both the corrected and uncorrected forms.

use crate::cohort::StratumSummary;
use crate::error::{Error, Result};

/// Integer per-stratum sample sizes with the constraint metadata they were
/// produced under.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Allocation {
    pub n_h: Vec<usize>,
    /// Minimized variance proxy including the finite-population correction.
    pub objective: f64,
    pub floor: usize,
    pub ceilings: Vec<usize>,
}

impl Allocation {
    pub fn total(&self) -> usize {
        self.n_h.iter().sum()
    }
}

/// The continuous Neyman solution `n_h = n N_h sd_h / sum_k N_k sd_k`.
/// Strata with zero standard deviation receive zero (no flooring here).
pub fn neyman_continuous(summaries: &[StratumSummary], n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InfeasibleAllocation("total n must be positive".into()));
    }
    let denom: f64 = summaries
        .iter()
        .map(|s| s.n_cohort as f64 * s.sd)
        .sum();
    if denom <= 0.0 {
        return Err(Error::AllZeroSd);
    }
    Ok(summaries
        .iter()
        .map(|s| n as f64 * s.n_cohort as f64 * s.sd / denom)
        .collect())
}

/// Variance proxy of an integer allocation (infinite when a stratum with
/// positive sd receives nothing).
pub fn allocation_objective(summaries: &[StratumSummary], n_h: &[usize]) -> f64 {
    summaries
        .iter()
        .zip(n_h)
        .map(|(s, &m)| {
            if s.sd == 0.0 {
                0.0
            } else if m == 0 {
                f64::INFINITY
            } else {
                let cap = s.n_cohort as f64;
                (cap * s.sd).powi(2) * (1.0 / m as f64 - 1.0 / cap)
            }
        })
        .sum()
}

fn priority(n_cohort: usize, sd: f64, count: usize) -> f64 {
    if sd == 0.0 {
        0.0
    } else if count == 0 {
        f64::INFINITY
    } else {
        n_cohort as f64 * sd / ((count * (count + 1)) as f64).sqrt()
    }
}

/// Greedy continuation from `start`: grants `budget` further units one at a
/// time to the highest-priority stratum below its ceiling, ties broken by
/// lowest stratum index. Returns the final counts.
fn greedy_from(
    summaries: &[StratumSummary],
    start: &[usize],
    budget: usize,
    ceilings: &[usize],
) -> Result<Vec<usize>> {
    let mut counts = start.to_vec();
    for _ in 0..budget {
        let mut best: Option<(usize, f64)> = None;
        for (h, s) in summaries.iter().enumerate() {
            if counts[h] >= ceilings[h] {
                continue;
            }
            let p = priority(s.n_cohort, s.sd, counts[h]);
            // Priorities within a relative ulp-scale band count as tied, so
            // the lowest-index rule (and scale invariance) survives rounding.
            let better = match best {
                None => true,
                Some((_, bp)) => p > bp + 1e-12 * bp.abs(),
            };
            if better {
                best = Some((h, p));
            }
        }
        match best {
            Some((h, _)) => counts[h] += 1,
            None => {
                return Err(Error::InfeasibleAllocation(
                    "budget exceeds the total ceiling".into(),
                ))
            }
        }
    }
    Ok(counts)
}

/// Exact integer-optimal allocation of `n` units subject to
/// `floor <= n_h <= ceiling_h`. Ceilings default to the stratum sizes.
pub fn exact_integer_allocation(
    summaries: &[StratumSummary],
    n: usize,
    floor: usize,
    ceilings: Option<&[usize]>,
) -> Result<Allocation> {
    let h = summaries.len();
    if h == 0 {
        return Err(Error::InfeasibleAllocation("no strata".into()));
    }
    let ceilings: Vec<usize> = match ceilings {
        Some(c) => {
            if c.len() != h {
                return Err(Error::InfeasibleAllocation(format!(
                    "{} ceilings for {} strata",
                    c.len(),
                    h
                )));
            }
            c.iter()
                .zip(summaries)
                .map(|(&c, s)| c.min(s.n_cohort))
                .collect()
        }
        None => summaries.iter().map(|s| s.n_cohort).collect(),
    };
    for (idx, &cap) in ceilings.iter().enumerate() {
        if floor > cap {
            return Err(Error::InfeasibleAllocation(format!(
                "floor {floor} exceeds ceiling {cap} in stratum {idx}"
            )));
        }
    }
    let floor_total = floor * h;
    if floor_total > n {
        return Err(Error::InfeasibleAllocation(format!(
            "floor infeasible: per-stratum floor {floor} over {h} strata needs {floor_total} > n = {n}"
        )));
    }
    let ceiling_total: usize = ceilings.iter().sum();
    if n > ceiling_total {
        return Err(Error::InfeasibleAllocation(format!(
            "n = {n} exceeds the total ceiling {ceiling_total}"
        )));
    }
    if summaries.iter().all(|s| s.sd == 0.0) {
        return Err(Error::AllZeroSd);
    }
    let start = vec![floor; h];
    let n_h = greedy_from(summaries, &start, n - floor_total, &ceilings)?;
    let objective = allocation_objective(summaries, &n_h);
    Ok(Allocation {
        n_h,
        objective,
        floor,
        ceilings,
    })
}

/// Re-optimizes the remaining `n_total - sum(already)` units given the
/// counts already drawn at earlier waves and the updated standard
/// deviations. Strata at or above their unconstrained share receive zero;
/// oversampling is never reversed. Returns the wave-2 increments.
pub fn wave2_allocation(
    summaries: &[StratumSummary],
    n_total: usize,
    already: &[usize],
) -> Result<Vec<usize>> {
    let h = summaries.len();
    if already.len() != h {
        return Err(Error::InfeasibleAllocation(format!(
            "{} wave-1 counts for {} strata",
            already.len(),
            h
        )));
    }
    for (idx, (&a, s)) in already.iter().zip(summaries).enumerate() {
        if a > s.n_cohort {
            return Err(Error::InfeasibleAllocation(format!(
                "stratum {idx} already has {a} sampled of {} rows",
                s.n_cohort
            )));
        }
    }
    let drawn: usize = already.iter().sum();
    if drawn > n_total {
        return Err(Error::InfeasibleAllocation(format!(
            "already sampled {drawn} exceeds the total budget {n_total}"
        )));
    }
    let remaining = n_total - drawn;
    if remaining == 0 {
        return Ok(vec![0; h]);
    }
    let available: usize = summaries
        .iter()
        .zip(already)
        .map(|(s, &a)| s.n_cohort - a)
        .sum();
    if remaining > available {
        return Err(Error::InfeasibleAllocation(format!(
            "remaining budget {remaining} exceeds the {available} unsampled rows"
        )));
    }
    if summaries.iter().all(|s| s.sd == 0.0) {
        return Err(Error::AllZeroSd);
    }
    let ceilings: Vec<usize> = summaries.iter().map(|s| s.n_cohort).collect();
    let finals = greedy_from(summaries, already, remaining, &ceilings)?;
    Ok(finals
        .iter()
        .zip(already)
        .map(|(&f, &a)| f - a)
        .collect())
}
