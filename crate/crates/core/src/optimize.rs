//! First-order solvers on the sphere and the second-order saddle escape.
//!
//! - [`power_step`]: `q ↦ P_S(−∇φ(q))`, monotone for the concave quartic
//!   objectives in this crate.
//! - [`rgd_step`] / [`backtracking_step`]: projected Riemannian gradient
//!   descent `q ↦ P_S(q − τ·grad φ(q))`.
//! - [`escape_saddle`]: Lanczos on the tangent-space Hessian, then a step
//!   along the most negative curvature direction.
//! - [`solve`]: the descent/escape loop with gradient, budget and stall stops.
//! - [`init_cdl`]: the preconditioned-sample initialization for CDL.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cdl::Preconditioner;
use crate::error::{invalid, shape, Error, Result};
use crate::model::{ObservationSet, SpherePoint};
use crate::objective::{random_tangent, SphereObjective};
use crate::rng::{self, Purpose};

/// Backtracking gives up once the trial step falls below this.
pub const MIN_STEP: f64 = 1e-16;
/// Lanczos iteration cap.
pub const LANCZOS_MAX_ITERS: usize = 200;
/// Lanczos residual tolerance, relative to the largest Ritz value magnitude (floored at 1).
pub const LANCZOS_RESIDUAL: f64 = 1e-8;
/// Stall window: the objective must move by a relative `STALL_RTOL` within this many iterations.
pub const STALL_WINDOW: usize = 20;
pub const STALL_RTOL: f64 = 1e-15;
/// Halvings tried when an escape step overshoots.
const ESCAPE_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Power,
    Rgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    Fixed { tau: f64 },
    Backtracking { alpha0: f64, shrink: f64, c1: f64 },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Backtracking {
            alpha0: 1.0,
            shrink: 0.5,
            c1: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Escape {
    #[default]
    Off,
    /// Escape when the smallest tangent eigenvalue is below `−curv_tol`.
    Eig { curv_tol: f64, step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub method: Method,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step: StepPolicy,
    pub escape: Escape,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            method: Method::Power,
            max_iters: 10_000,
            grad_tol: 1e-8,
            step: StepPolicy::default(),
            escape: Escape::Off,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return invalid(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        match self.step {
            StepPolicy::Fixed { tau } if !(tau > 0.0 && tau.is_finite()) => {
                return invalid(format!("fixed step must be positive and finite, got {tau}"))
            }
            StepPolicy::Backtracking { alpha0, shrink, c1 } => {
                if !(alpha0 > 0.0 && alpha0.is_finite()) {
                    return invalid(format!("alpha0 must be positive, got {alpha0}"));
                }
                if !(shrink > 0.0 && shrink < 1.0) || !(c1 > 0.0 && c1 < 1.0) {
                    return invalid(format!(
                        "backtracking needs shrink, c1 in (0,1); got shrink={shrink}, c1={c1}"
                    ));
                }
            }
            _ => {}
        }
        if let Escape::Eig { curv_tol, step } = self.escape {
            if curv_tol.is_nan() || curv_tol < 0.0 {
                return invalid("curv_tol must be non-negative");
            }
            if !(step > 0.0 && step.is_finite()) {
                return invalid(format!("escape step must be positive, got {step}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub q_star: SpherePoint,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// `φ` at the initial point and after every accepted step or escape.
    pub objective_trace: Vec<f64>,
    pub termination: Termination,
    pub escapes_taken: usize,
}

#[derive(Serialize)]
struct SolveResultJson<'a> {
    q_star: &'a SpherePoint,
    iterations: usize,
    final_grad_norm: f64,
    termination: Termination,
    escapes_taken: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_trace: Option<&'a [f64]>,
}

impl SolveResult {
    pub fn to_json(&self, include_trace: bool) -> Result<String> {
        let view = SolveResultJson {
            q_star: &self.q_star,
            iterations: self.iterations,
            final_grad_norm: self.final_grad_norm,
            termination: self.termination,
            escapes_taken: self.escapes_taken,
            objective_trace: include_trace.then_some(self.objective_trace.as_slice()),
        };
        Ok(serde_json::to_string_pretty(&view)?)
    }

    pub fn final_value(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}

/// `P_S(q − τ·grad φ(q))`.
pub fn rgd_step<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint, tau: f64) -> Result<SpherePoint> {
    if !(tau > 0.0) {
        return invalid(format!("step size must be positive, got {tau}"));
    }
    q.retract(&(obj.rgrad(q) * -tau))
}

/// One Armijo backtracking step. Returns the new point and accepted τ, or
/// `None` once τ drops below [`MIN_STEP`].
pub fn backtracking_step<O: SphereObjective + ?Sized>(
    obj: &O,
    q: &SpherePoint,
    alpha0: f64,
    shrink: f64,
    c1: f64,
) -> Result<Option<(SpherePoint, f64)>> {
    let g = obj.rgrad(q);
    let g2 = g.norm_squared();
    let f0 = obj.value(q);
    let mut tau = alpha0;
    while tau >= MIN_STEP {
        let cand = q.retract(&(&g * -tau))?;
        if obj.value(&cand) <= f0 - c1 * tau * g2 {
            return Ok(Some((cand, tau)));
        }
        tau *= shrink;
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerStep {
    pub point: SpherePoint,
    /// `∇φ(q) = 0` exactly; `point` is `q` unchanged.
    pub critical: bool,
}

/// `P_S(−∇φ(q))`, signed to maximize `⟨q⁺, q⟩`.
pub fn power_step<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint) -> Result<PowerStep> {
    power_step_from_grad(q, obj.egrad(q))
}

/// [`power_step`] with the Euclidean gradient `g = ∇φ(q)` already evaluated.
pub fn power_step_from_grad(q: &SpherePoint, g: DVector<f64>) -> Result<PowerStep> {
    if g.iter().all(|x| *x == 0.0) {
        return Ok(PowerStep {
            point: q.clone(),
            critical: true,
        });
    }
    let next = SpherePoint::project(-g)?;
    let point = if next.coords().dot(q.coords()) < 0.0 {
        next.negated()
    } else {
        next
    };
    Ok(PowerStep {
        point,
        critical: false,
    })
}

/// The step size at which an RGD step coincides with a power step:
/// `τ = −1/(qᵀ∇φ(q))`, positive whenever `φ(q) < 0`.
pub fn power_equivalent_step<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint) -> f64 {
    -1.0 / q.coords().dot(&obj.egrad(q))
}

/// Smallest eigenpair of the Riemannian Hessian restricted to the tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentEigenpair {
    pub value: f64,
    /// Unit tangent vector.
    pub vector: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Lanczos with full reorthogonalization on `Hess φ(q)` restricted to `q⊥`.
/// On breakdown the Krylov space is extended with a fresh random tangent
/// direction until the tangent space (dimension n−1) is exhausted.
pub fn min_tangent_eigenpair<O: SphereObjective + ?Sized>(
    obj: &O,
    q: &SpherePoint,
    seed: u64,
) -> Result<TangentEigenpair> {
    let n = q.dim();
    if n < 2 {
        return invalid("tangent space of S^0 is trivial");
    }
    let mut rng = rng::stream(seed, 0, Purpose::Lanczos);
    let cap = LANCZOS_MAX_ITERS.min(n - 1);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cap);
    let mut alphas: Vec<f64> = Vec::with_capacity(cap);
    let mut betas: Vec<f64> = Vec::with_capacity(cap);
    let mut v = random_tangent(&mut rng, q);
    let mut best = None;

    for it in 0..cap {
        let hv = obj.rhess_vec(q, &v);
        let alpha = v.dot(&hv);
        let mut w = hv - &v * alpha;
        if let Some(prev) = basis.last() {
            w -= prev * *betas.last().unwrap();
        }
        basis.push(v.clone());
        alphas.push(alpha);
        // full reorthogonalization (twice is enough)
        for _ in 0..2 {
            w = q.project_tangent(&w);
            for b in &basis {
                w -= b * b.dot(&w);
            }
        }

        let ritz = smallest_ritz(&alphas, &betas, &basis);
        let hv = obj.rhess_vec(q, &ritz.1);
        let residual = (hv - &ritz.1 * ritz.0).norm();
        let scale = ritz.2.max(1.0);
        let converged = residual <= LANCZOS_RESIDUAL * scale;
        best = Some(TangentEigenpair {
            value: ritz.0,
            vector: ritz.1,
            residual,
            iterations: it + 1,
            converged,
        });
        if converged || basis.len() == cap {
            break;
        }

        let beta = w.norm();
        let hnorm = alphas.iter().map(|a| a.abs()).fold(0.0, f64::max).max(1e-300);
        if beta > 1e-12 * hnorm {
            betas.push(beta);
            v = w / beta;
        } else {
            // invariant subspace: restart in its orthogonal complement
            match fresh_direction(&mut rng, q, &basis) {
                Some(d) => {
                    betas.push(0.0);
                    v = d;
                }
                None => break,
            }
        }
    }
    best.ok_or_else(|| Error::Numerical("Lanczos produced no Ritz pair".into()))
}

fn fresh_direction<R: Rng + ?Sized>(
    rng: &mut R,
    q: &SpherePoint,
    basis: &[DVector<f64>],
) -> Option<DVector<f64>> {
    for _ in 0..8 {
        let mut d = random_tangent(rng, q);
        for _ in 0..2 {
            for b in basis {
                d -= b * b.dot(&d);
            }
            d = q.project_tangent(&d);
        }
        let norm = d.norm();
        if norm > 1e-8 {
            return Some(d / norm);
        }
    }
    None
}

/// Smallest eigenpair of the Lanczos tridiagonal lifted back to R^n, plus
/// the largest Ritz magnitude (used to scale the residual test).
fn smallest_ritz(alphas: &[f64], betas: &[f64], basis: &[DVector<f64>]) -> (f64, DVector<f64>, f64) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    let spread = eig.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let y = eig.eigenvectors.column(imin);
    let mut x = DVector::zeros(basis[0].len());
    for (b, c) in basis.iter().zip(y.iter()) {
        x += b * *c;
    }
    let norm = x.norm();
    (lmin, x / norm, spread)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeOutcome {
    pub eigenpair: Option<TangentEigenpair>,
    /// The improved point, when a strict-saddle direction was found and followed.
    pub point: Option<SpherePoint>,
}

/// Tries to leave a near-critical point along negative curvature.
///
/// Returns the better of `P_S(q ± s·v)` for the first `s` in
/// `step, step/2, …` that strictly lowers `φ`; no point when the smallest
/// tangent eigenvalue is `≥ −curv_tol` (a second-order point) or Lanczos did
/// not converge.
pub fn escape_saddle<O: SphereObjective + ?Sized>(
    obj: &O,
    q: &SpherePoint,
    curv_tol: f64,
    step: f64,
    seed: u64,
) -> Result<EscapeOutcome> {
    if curv_tol.is_infinite() {
        return Ok(EscapeOutcome {
            eigenpair: None,
            point: None,
        });
    }
    let eig = min_tangent_eigenpair(obj, q, seed)?;
    if !eig.converged || eig.value >= -curv_tol {
        return Ok(EscapeOutcome {
            eigenpair: Some(eig),
            point: None,
        });
    }
    let f0 = obj.value(q);
    let mut s = step;
    for _ in 0..=ESCAPE_HALVINGS {
        let plus = q.retract(&(&eig.vector * s))?;
        let minus = q.retract(&(&eig.vector * -s))?;
        let (fp, fm) = (obj.value(&plus), obj.value(&minus));
        let (cand, fc) = if fp <= fm { (plus, fp) } else { (minus, fm) };
        if fc < f0 {
            return Ok(EscapeOutcome {
                eigenpair: Some(eig),
                point: Some(cand),
            });
        }
        s *= 0.5;
    }
    Ok(EscapeOutcome {
        eigenpair: Some(eig),
        point: None,
    })
}

/// Runs the configured method from `q0`.
pub fn solve<O: SphereObjective + ?Sized>(obj: &O, q0: &SpherePoint, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if q0.dim() != obj.dim() {
        return shape(format!(
            "initial point has dimension {} but the objective has {}",
            q0.dim(),
            obj.dim()
        ));
    }
    let mut q = q0.clone();
    let mut trace = vec![obj.value(&q)];
    let mut iterations = 0;
    let mut escapes = 0;
    let termination = loop {
        let egrad = obj.egrad(&q);
        let gnorm = q.project_tangent(&egrad).norm();
        if gnorm < cfg.grad_tol {
            if let Escape::Eig { curv_tol, step } = cfg.escape {
                if iterations < cfg.max_iters {
                    let seed = cfg.seed.wrapping_add(escapes as u64);
                    if let Some(next) = escape_saddle(obj, &q, curv_tol, step, seed)?.point {
                        q = next;
                        trace.push(obj.value(&q));
                        escapes += 1;
                        iterations += 1;
                        continue;
                    }
                }
            }
            break Termination::GradTol;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIters;
        }
        match cfg.method {
            Method::Power => {
                let st = power_step_from_grad(&q, egrad)?;
                if st.critical {
                    break Termination::GradTol;
                }
                q = st.point;
            }
            Method::Rgd => match cfg.step {
                StepPolicy::Fixed { tau } => q = rgd_step(obj, &q, tau)?,
                StepPolicy::Backtracking { alpha0, shrink, c1 } => {
                    match backtracking_step(obj, &q, alpha0, shrink, c1)? {
                        Some((next, _)) => q = next,
                        None => break Termination::Stalled,
                    }
                }
            },
        }
        iterations += 1;
        trace.push(obj.value(&q));
        let t = trace.len() - 1;
        if t >= STALL_WINDOW {
            let (now, then) = (trace[t], trace[t - STALL_WINDOW]);
            if (now - then).abs() <= STALL_RTOL * now.abs().max(then.abs())
                && obj.rgrad(&q).norm() >= cfg.grad_tol
            {
                break Termination::Stalled;
            }
        }
    };
    let final_grad_norm = obj.rgrad(&q).norm();
    Ok(SolveResult {
        q_star: q,
        iterations,
        final_grad_norm,
        objective_trace: trace,
        termination,
        escapes_taken: escapes,
    })
}

/// `P_S(P·y_ℓ)` for the (0-based) sample `ℓ`; a uniformly drawn sample when `ell` is `None`.
pub fn init_cdl(
    obs: &ObservationSet,
    precond: &Preconditioner,
    ell: Option<usize>,
    seed: u64,
) -> Result<SpherePoint> {
    let p = obs.p();
    if p == 0 {
        return invalid("no measurements to initialize from");
    }
    if precond.n() != obs.n() {
        return shape("preconditioner and measurement lengths differ");
    }
    let ell = match ell {
        Some(l) if l >= p => return invalid(format!("sample index {l} out of range 0..{p}")),
        Some(l) => l,
        None => rng::stream(seed, 0, Purpose::Sample).random_range(0..p),
    };
    let py = precond.apply(obs.sample(ell).as_slice());
    SpherePoint::project(DVector::from_vec(py))
        .map_err(|_| Error::Numerical(format!("measurement {ell} is zero; pick another sample")))
}
