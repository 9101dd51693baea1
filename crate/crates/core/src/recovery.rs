//! Recovery metrics and multi-trial recovery drivers.
//!
//! - `ρ_e(q) = min_i (1 − |⟨q, a_i/‖a_i‖⟩|)`, success when `ρ_e < 5·10⁻²`.
//! - Full-dictionary recovery repeats independent solves (seed `seed_base + t`
//!   for trial `t`) until every column has been hit.
//! - Filters are recovered only up to a cyclic shift and sign; [`align_shift`]
//!   finds both with one FFT cross-correlation.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdl::{build_preconditioner, deprecondition, CdlObjective, ConvProblem, ScaleConvention};
use crate::error::{invalid, shape, Error, Result};
use crate::fft::{cyclic_shift, Spectral};
use crate::io::fmt_f64;
use crate::model::{Dictionary, SpherePoint};
use crate::objective::SphereObjective;
use crate::optimize::{init_cdl, solve, SolveConfig};

/// `ρ_e` success bar.
pub const SUCCESS_THRESHOLD: f64 = 5e-2;
/// Aligned ℓ² error under which a filter counts as recovered.
pub const EPS_CDL: f64 = 0.1;
/// Ties in `|⟨q, a_i⟩|` within this margin go to the lower index.
const TIE_TOL: f64 = 1e-12;
/// Trials evaluated per parallel batch in [`cover_columns`]; fixed so the
/// result does not depend on the thread count.
const TRIAL_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub rho_e: f64,
    pub best_index: usize,
    pub success: bool,
}

pub fn recovery_error(q: &SpherePoint, dict: &Dictionary) -> RecoveryOutcome {
    recovery_error_with(q, dict, SUCCESS_THRESHOLD)
}

pub fn recovery_error_with(q: &SpherePoint, dict: &Dictionary, threshold: f64) -> RecoveryOutcome {
    let zeta = q.correlation(dict);
    let norms = dict.column_norms();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (z, nrm)) in zeta.iter().zip(norms).enumerate() {
        let inner = (z / nrm).abs();
        if inner > best.1 + TIE_TOL {
            best = (i, inner);
        }
    }
    let rho_e = (1.0 - best.1).clamp(0.0, 1.0);
    RecoveryOutcome {
        rho_e,
        best_index: best.0,
        success: rho_e < threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub outcome: RecoveryOutcome,
    pub cumulative_covered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryCoverage {
    pub m: usize,
    pub recovered: BTreeSet<usize>,
    pub trials_used: usize,
    pub per_trial: Vec<TrialRecord>,
}

impl DictionaryCoverage {
    pub fn complete(&self) -> bool {
        self.recovered.len() == self.m
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["trial", "seed", "rho_e", "best_index", "success", "cumulative_covered"])?;
        for r in &self.per_trial {
            w.write_record([
                r.trial.to_string(),
                r.seed.to_string(),
                fmt_f64(r.outcome.rho_e),
                r.outcome.best_index.to_string(),
                r.outcome.success.to_string(),
                r.cumulative_covered.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `trial(t, seed_base + t)` for `t = 0, 1, …` until all `m` columns
/// are covered or the budget is spent. Trials run in parallel batches but are
/// folded in trial order, so the result is independent of scheduling.
pub fn cover_columns<F>(m: usize, budget: usize, seed_base: u64, trial: F) -> Result<DictionaryCoverage>
where
    F: Fn(usize, u64) -> Result<RecoveryOutcome> + Sync,
{
    if budget == 0 {
        return invalid("trial budget must be at least 1");
    }
    let mut cov = DictionaryCoverage {
        m,
        recovered: BTreeSet::new(),
        trials_used: 0,
        per_trial: Vec::new(),
    };
    let mut start = 0;
    while start < budget && !cov.complete() {
        let end = (start + TRIAL_BATCH).min(budget);
        let outcomes: Vec<Result<RecoveryOutcome>> = (start..end)
            .into_par_iter()
            .map(|t| trial(t, seed_base.wrapping_add(t as u64)))
            .collect();
        for (t, out) in (start..end).zip(outcomes) {
            let outcome = out?;
            if outcome.success {
                cov.recovered.insert(outcome.best_index);
            }
            cov.trials_used = t + 1;
            cov.per_trial.push(TrialRecord {
                trial: t,
                seed: seed_base.wrapping_add(t as u64),
                outcome,
                cumulative_covered: cov.recovered.len(),
            });
            if cov.complete() {
                break;
            }
        }
        start = end;
    }
    Ok(cov)
}

/// Independent solves of `obj` from uniform random starts, scored against `truth`.
pub fn recover_full<O: SphereObjective + ?Sized>(
    obj: &O,
    truth: &Dictionary,
    solver: &SolveConfig,
    budget: usize,
    seed_base: u64,
) -> Result<DictionaryCoverage> {
    if obj.dim() != truth.n() {
        return shape("objective and reference dictionary dimensions differ");
    }
    cover_columns(truth.m(), budget, seed_base, |_, seed| {
        let q0 = SpherePoint::random(obj.dim(), seed, 0);
        let cfg = SolveConfig { seed, ..*solver };
        let res = solve(obj, &q0, &cfg)?;
        Ok(recovery_error(&res.q_star, truth))
    })
}

/// `⌈8·m·ln m⌉`, at least 1.
pub fn default_full_budget(m: usize) -> usize {
    ((8.0 * m as f64 * (m as f64).ln()).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub shift: usize,
    pub sign: f64,
    /// `‖sign·s_shift[a_true] − a_est‖` after normalizing both.
    pub error: f64,
}

/// Shift and sign minimizing `‖s·s_ℓ[a_true] − a_est‖`.
pub fn align_shift(a_est: &[f64], a_true: &[f64]) -> Result<Alignment> {
    let n = a_est.len();
    if n == 0 || a_true.len() != n {
        return shape(format!("alignment needs equal non-empty lengths, got {n} and {}", a_true.len()));
    }
    let est = normalized(a_est)?;
    let tru = normalized(a_true)?;
    let corr = Spectral::new(n).correlate(&est, &tru);
    let mut best = (0, 0.0_f64);
    for (l, r) in corr.iter().enumerate() {
        if r.abs() > best.1.abs() + TIE_TOL {
            best = (l, *r);
        }
    }
    let sign = if best.1 < 0.0 { -1.0 } else { 1.0 };
    let shifted = cyclic_shift(&tru, best.0 as isize);
    let error = shifted
        .iter()
        .zip(&est)
        .map(|(t, e)| (sign * t - e).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(Alignment {
        shift: best.0,
        sign,
        error,
    })
}

fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Numerical("cannot align a zero or non-finite vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterRecoveryConfig {
    pub solver: SolveConfig,
    pub budget: usize,
    pub eps: f64,
    pub convention: ScaleConvention,
    pub seed: u64,
}

impl FilterRecoveryConfig {
    /// Budget `10·K`, tolerance [`EPS_CDL`], default solver and convention.
    pub fn for_k(k: usize, seed: u64) -> Self {
        FilterRecoveryConfig {
            solver: SolveConfig { seed, ..SolveConfig::default() },
            budget: 10 * k,
            eps: EPS_CDL,
            convention: ScaleConvention::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub filter: usize,
    pub shift: usize,
    pub sign: f64,
    pub aligned_error: f64,
    pub recovered: bool,
    /// Trial that produced the best alignment, if any trial ran.
    pub trial: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecovery {
    pub filters: Vec<FilterResult>,
    pub trials_used: usize,
    /// Recovered filter estimates `a⋆` per trial.
    pub estimates: Vec<Vec<f64>>,
}

impl FilterRecovery {
    pub fn all_recovered(&self) -> bool {
        self.filters.iter().all(|f| f.recovered)
    }

    pub fn unrecovered(&self) -> Vec<usize> {
        self.filters.iter().filter(|f| !f.recovered).map(|f| f.filter).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["filter", "shift", "sign", "aligned_error", "recovered"])?;
        for f in &self.filters {
            w.write_record([
                f.filter.to_string(),
                f.shift.to_string(),
                fmt_f64(f.sign),
                fmt_f64(f.aligned_error),
                f.recovered.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Data-initialized CDL solves, each de-preconditioned and aligned against
/// every true filter; stops once all filters are within `eps`.
pub fn recover_filters(problem: &ConvProblem, cfg: &FilterRecoveryConfig) -> Result<FilterRecovery> {
    if cfg.budget == 0 {
        return invalid("trial budget must be at least 1");
    }
    let k = problem.k();
    let precond = build_preconditioner(&problem.measurements, problem.theta, k, cfg.convention)?;
    let obj = CdlObjective::new(&problem.measurements, precond.clone(), problem.theta, k)?;
    let mut filters: Vec<FilterResult> = (0..k)
        .map(|filter| FilterResult {
            filter,
            shift: 0,
            sign: 1.0,
            aligned_error: f64::INFINITY,
            recovered: false,
            trial: None,
        })
        .collect();
    let mut estimates = Vec::new();
    let mut trials_used = 0;
    for t in 0..cfg.budget {
        trials_used = t + 1;
        let seed = cfg.seed.wrapping_add(t as u64);
        let q0 = match init_cdl(&problem.measurements, &precond, None, seed) {
            Ok(q) => q,
            Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        };
        let res = solve(&obj, &q0, &SolveConfig { seed, ..cfg.solver })?;
        let a = deprecondition(&res.q_star, &precond)?;
        for (kk, truth) in problem.filters.filters().iter().enumerate() {
            let al = align_shift(a.coords().as_slice(), truth.as_slice())?;
            let slot = &mut filters[kk];
            if al.error < slot.aligned_error {
                *slot = FilterResult {
                    filter: kk,
                    shift: al.shift,
                    sign: al.sign,
                    aligned_error: al.error,
                    recovered: al.error <= cfg.eps,
                    trial: Some(t),
                };
            }
        }
        estimates.push(a.into_coords().iter().cloned().collect());
        if filters.iter().all(|f| f.recovered) {
            break;
        }
    }
    Ok(FilterRecovery {
        filters,
        trials_used,
        estimates,
    })
}

/// `a/‖a‖` for each filter, convenient when comparing against estimates.
pub fn unit_filters(problem: &ConvProblem) -> Vec<DVector<f64>> {
    problem.filters.filters().iter().map(|f| f.normalize()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_point_on_identity() {
        let q = SpherePoint::from_slice(&[1.0, 1.0, 1.0]).unwrap();
        let out = recovery_error(&q, &Dictionary::identity(3));
        assert!((out.rho_e - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-15);
        assert!(!out.success);
        assert_eq!(out.best_index, 0);
    }

    #[test]
    fn align_recovers_shift_and_sign() {
        let t = [0.3, -1.0, 2.0, 0.5, 0.1];
        let est: Vec<f64> = cyclic_shift(&t, 3).iter().map(|x| -x).collect();
        let al = align_shift(&est, &t).unwrap();
        assert_eq!(al.shift, 3);
        assert_eq!(al.sign, -1.0);
        assert!(al.error < 1e-12);
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(cover_columns(2, 0, 0, |_, _| unreachable!()).is_err());
    }

    #[test]
    fn budget_formula() {
        assert_eq!(default_full_budget(1), 1);
        assert_eq!(default_full_budget(32), (8.0 * 32.0 * 32f64.ln()).ceil() as usize);
    }
}
