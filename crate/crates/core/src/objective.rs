//! ℓ⁴ objectives on the sphere and their Riemannian derivatives.
//!
//! With Euclidean gradient `∇f` and Hessian `∇²f`, the sphere's Riemannian
//! derivatives at `q` are
//!
//! ```text
//! grad f(q) = P_{q⊥} ∇f(q)
//! Hess f(q) = P_{q⊥} (∇²f(q) − ⟨q, ∇f(q)⟩ I) P_{q⊥}
//! ```
//!
//! Implementors of [`SphereObjective`] only supply the Euclidean pieces.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::model::{bg_draw, check_theta, Dictionary, ObservationSet, SpherePoint};
use crate::rng::{self, Purpose};
use crate::DENSE_HESSIAN_MAX_DIM;

pub trait SphereObjective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, q: &SpherePoint) -> f64;

    /// Euclidean gradient of the (homogeneous) extension to R^n.
    fn egrad(&self, q: &SpherePoint) -> DVector<f64>;

    /// Euclidean Hessian applied to `v`.
    fn ehess_vec(&self, q: &SpherePoint, v: &DVector<f64>) -> DVector<f64>;

    /// Dense Euclidean Hessian; the default assembles it column by column.
    fn ehess(&self, q: &SpherePoint) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            h.set_column(j, &self.ehess_vec(q, &e));
        }
        h
    }

    fn rgrad(&self, q: &SpherePoint) -> DVector<f64> {
        q.project_tangent(&self.egrad(q))
    }

    fn rhess_vec(&self, q: &SpherePoint, v: &DVector<f64>) -> DVector<f64> {
        let pv = q.project_tangent(v);
        let shift = q.coords().dot(&self.egrad(q));
        let hv = self.ehess_vec(q, &pv) - &pv * shift;
        q.project_tangent(&hv)
    }

    /// Dense Riemannian Hessian; refused above [`DENSE_HESSIAN_MAX_DIM`].
    fn rhess(&self, q: &SpherePoint) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_HESSIAN_MAX_DIM {
            return invalid(format!(
                "dense Hessian refused for n = {n} > {DENSE_HESSIAN_MAX_DIM}; use rhess_vec"
            ));
        }
        let x = q.coords();
        let proj = DMatrix::<f64>::identity(n, n) - x * x.transpose();
        let shift = x.dot(&self.egrad(q));
        let inner = self.ehess(q) - DMatrix::<f64>::identity(n, n) * shift;
        let h = &proj * inner * &proj;
        // symmetrize away rounding asymmetry
        Ok((&h + h.transpose()) * 0.5)
    }
}

/// Population objective `φ_T(q) = −¼‖Aᵀq‖₄⁴`.
#[derive(Debug, Clone)]
pub struct TensorObjective {
    dict: Dictionary,
}

impl TensorObjective {
    pub fn new(dict: Dictionary) -> Self {
        TensorObjective { dict }
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }
}

impl SphereObjective for TensorObjective {
    fn dim(&self) -> usize {
        self.dict.n()
    }

    fn value(&self, q: &SpherePoint) -> f64 {
        let zeta = q.correlation(&self.dict);
        -0.25 * zeta.iter().map(|z| z.powi(4)).sum::<f64>()
    }

    fn egrad(&self, q: &SpherePoint) -> DVector<f64> {
        let zeta = q.correlation(&self.dict);
        -(self.dict.entries() * zeta.map(|z| z * z * z))
    }

    fn ehess_vec(&self, q: &SpherePoint, v: &DVector<f64>) -> DVector<f64> {
        let zeta = q.correlation(&self.dict);
        let av = self.dict.entries().tr_mul(v);
        let w = zeta.zip_map(&av, |z, a| z * z * a);
        -(self.dict.entries() * w) * 3.0
    }

    fn ehess(&self, q: &SpherePoint) -> DMatrix<f64> {
        let zeta = q.correlation(&self.dict);
        let a = self.dict.entries();
        let mut scaled = a.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= zeta[j] * zeta[j];
        }
        -(scaled * a.transpose()) * 3.0
    }
}

/// Finite-sample objective `φ_DL(q) = −c_DL Σ_k (qᵀy_k)⁴` with
/// `c_DL = 1/(12θ(1−θ)p)`.
#[derive(Debug, Clone)]
pub struct OdlObjective {
    y: DMatrix<f64>,
    theta: f64,
    c: f64,
}

impl OdlObjective {
    pub fn new(obs: &ObservationSet, theta: f64) -> Result<Self> {
        Self::from_matrix(obs.entries().clone(), theta)
    }

    pub fn from_matrix(y: DMatrix<f64>, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if y.ncols() == 0 || y.nrows() == 0 {
            return shape("observation matrix must be non-empty");
        }
        let c = normalizer(theta, y.ncols());
        Ok(OdlObjective { y, theta, c })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn normalizer(&self) -> f64 {
        self.c
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.y
    }
}

/// `1/(12θ(1−θ)·count)`.
pub fn normalizer(theta: f64, count: usize) -> f64 {
    1.0 / (12.0 * theta * (1.0 - theta) * count as f64)
}

impl SphereObjective for OdlObjective {
    fn dim(&self) -> usize {
        self.y.nrows()
    }

    fn value(&self, q: &SpherePoint) -> f64 {
        let u = self.y.tr_mul(q.coords());
        -self.c * u.iter().map(|x| x.powi(4)).sum::<f64>()
    }

    fn egrad(&self, q: &SpherePoint) -> DVector<f64> {
        let u = self.y.tr_mul(q.coords());
        -(&self.y * u.map(|x| x * x * x)) * (4.0 * self.c)
    }

    fn ehess_vec(&self, q: &SpherePoint, v: &DVector<f64>) -> DVector<f64> {
        let u = self.y.tr_mul(q.coords());
        let w = self.y.tr_mul(v);
        let s = u.zip_map(&w, |a, b| a * a * b);
        -(&self.y * s) * (12.0 * self.c)
    }

    fn ehess(&self, q: &SpherePoint) -> DMatrix<f64> {
        let u = self.y.tr_mul(q.coords());
        let mut scaled = self.y.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= u[j] * u[j];
        }
        -(scaled * self.y.transpose()) * (12.0 * self.c)
    }
}

/// Monte-Carlo check of the expectation identity relating `φ_DL` and `φ_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationGap {
    /// Sample mean of `φ_DL(q)` (the mean of the p per-sample terms).
    pub monte_carlo_mean: f64,
    /// Standard error of that mean.
    pub standard_error: f64,
    /// `φ_T(q) − θ/(2(1−θ))·K²`.
    pub predicted: f64,
    /// `φ_T(q) − θ/(4(1−θ))·‖ζ‖₂⁴`, the exact BG(θ) expectation for any A.
    pub predicted_exact: f64,
    pub phi_t: f64,
}

pub fn expectation_gap(
    dict: &Dictionary,
    theta: f64,
    q: &SpherePoint,
    p: usize,
    seed: u64,
) -> Result<ExpectationGap> {
    check_theta(theta)?;
    if p == 0 {
        return invalid("expectation_gap needs p >= 1");
    }
    if q.dim() != dict.n() {
        return shape("point and dictionary dimensions differ");
    }
    let zeta = q.correlation(dict);
    let phi_t = -0.25 * zeta.iter().map(|z| z.powi(4)).sum::<f64>();
    let k = dict.overcompleteness();
    let zeta_sq = zeta.norm_squared();
    let predicted = phi_t - theta / (2.0 * (1.0 - theta)) * k * k;
    let predicted_exact = phi_t - theta / (4.0 * (1.0 - theta)) * zeta_sq * zeta_sq;

    let scale = 1.0 / (12.0 * theta * (1.0 - theta));
    let mut rng = rng::stream(seed, 0, Purpose::Code);
    let m = dict.m();
    // Welford running mean/variance over the per-sample terms.
    let (mut mean, mut m2) = (0.0_f64, 0.0_f64);
    for k in 0..p {
        let s: f64 = (0..m).map(|i| zeta[i] * bg_draw(&mut rng, theta)).sum();
        let term = -scale * s.powi(4);
        let delta = term - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (term - mean);
    }
    let var = if p > 1 { m2 / (p - 1) as f64 } else { 0.0 };
    Ok(ExpectationGap {
        monte_carlo_mean: mean,
        standard_error: (var / p as f64).sqrt(),
        predicted,
        predicted_exact,
        phi_t,
    })
}

/// Random tangent direction at `q` (unit norm), drawn from `rng`.
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, q: &SpherePoint) -> DVector<f64> {
    loop {
        let v = q.project_tangent(&rng::gaussian_vector(rng, q.dim()));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}
