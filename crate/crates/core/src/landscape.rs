//! Numerical certificates for the landscape of `φ_T(q) = −¼‖Aᵀq‖₄⁴`.
//!
//! - Region split: `R_C` is where `φ_T(q) ≤ −ξ·μ^{2/3}·(κ^{4/3})·‖ζ‖₃²`
//!   (the κ factor only in CDL mode) and `R_N` is its complement.
//! - At a critical point every correlation `ζ_i = a_iᵀq` solves
//!   `ζ_i³ − α_iζ_i + β_i = 0` with `α_i = ‖ζ‖₄⁴/‖a_i‖²` and
//!   `β_i = Σ_{j≠i}⟨a_i,a_j⟩ζ_j³/‖a_i‖²`. When `|β| ≤ α^{3/2}/4` the real
//!   roots sit in three disjoint intervals around `0` and `±√α`.
//! - In `R_N` some column direction has curvature below `−4‖ζ‖₄⁴‖ζ‖_∞²`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::model::{Dictionary, SpherePoint};
use crate::objective::{SphereObjective, TensorObjective};
use crate::DENSE_HESSIAN_MAX_DIM;

/// Default `ξ_DL`; the geometry results need `ξ_DL > 2⁶`.
pub const XI_DL: f64 = 65.0;
/// Default constants in `ξ_CDL = C₀·η^{−2/3}` (`C₀ > 5`, `η < 2⁻⁶` required).
pub const C0_CDL: f64 = 6.0;
pub const ETA_CDL: f64 = 1.0 / 128.0;
/// Points within this distance of the region threshold are labeled boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Slack on the `|β| ≤ α^{3/2}/4` precondition to absorb rounding.
const PRECONDITION_SLACK: f64 = 1e-12;

pub fn xi_cdl(c0: f64, eta: f64) -> f64 {
    c0 * eta.powf(-2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub xi: f64,
    pub mu: f64,
    /// Condition number of the filter stack; 1 for ODL.
    pub kappa: f64,
}

impl RegionParams {
    pub fn dl(mu: f64) -> Self {
        RegionParams {
            xi: XI_DL,
            mu,
            kappa: 1.0,
        }
    }

    pub fn cdl(mu: f64, kappa: f64) -> Self {
        RegionParams {
            xi: xi_cdl(C0_CDL, ETA_CDL),
            mu,
            kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "R_N")]
    RN,
    #[serde(rename = "R_C")]
    RC,
    #[serde(rename = "boundary")]
    Boundary,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::RN => "R_N",
            Region::RC => "R_C",
            Region::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionClassification {
    pub region: Region,
    pub phi_t: f64,
    /// Right-hand side `−ξ·μ^{2/3}·(κ^{4/3})·‖ζ‖₃²`.
    pub threshold: f64,
}

pub fn classify_region(
    dict: &Dictionary,
    q: &SpherePoint,
    params: &RegionParams,
    cdl_mode: bool,
) -> RegionClassification {
    let zeta = q.correlation(dict);
    let phi_t = -0.25 * zeta.iter().map(|z| z.powi(4)).sum::<f64>();
    let norm3 = zeta.iter().map(|z| z.abs().powi(3)).sum::<f64>().powf(1.0 / 3.0);
    if params.xi.is_infinite() {
        return RegionClassification {
            region: Region::RN,
            phi_t,
            threshold: f64::NEG_INFINITY,
        };
    }
    let kappa_factor = if cdl_mode { params.kappa.powf(4.0 / 3.0) } else { 1.0 };
    let threshold = -params.xi * params.mu.powf(2.0 / 3.0) * kappa_factor * norm3 * norm3;
    let region = if (phi_t - threshold).abs() <= BOUNDARY_TOL {
        Region::Boundary
    } else if phi_t < threshold {
        Region::RC
    } else {
        Region::RN
    };
    RegionClassification {
        region,
        phi_t,
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// The intervals `I₁ = [−2|β|/α, 2|β|/α]`, `I₂ = √α ± 2|β|/α`,
/// `I₃ = −√α ± 2|β|/α` that contain the real roots of `z³ − αz + β`.
pub fn cubic_root_intervals(alpha: f64, beta: f64) -> Result<[Interval; 3]> {
    if !(alpha > 0.0) || !beta.is_finite() {
        return invalid(format!("need alpha > 0 and finite beta, got ({alpha}, {beta})"));
    }
    let limit = alpha.powf(1.5) / 4.0;
    if beta.abs() > limit * (1.0 + PRECONDITION_SLACK) {
        return invalid(format!(
            "|beta| = {} exceeds alpha^(3/2)/4 = {limit}; the interval bound does not apply",
            beta.abs()
        ));
    }
    let r = 2.0 * beta.abs() / alpha;
    let s = alpha.sqrt();
    Ok([
        Interval { lo: -r, hi: r },
        Interval { lo: s - r, hi: s + r },
        Interval { lo: -s - r, hi: -s + r },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalThresholds {
    pub grad_tol: f64,
    /// Curvature tolerance relative to `‖ζ‖₄⁴`.
    pub curv_rel_tol: f64,
    /// Cubic residual tolerance relative to `α_i^{3/2}`.
    pub resid_tol: f64,
}

impl Default for CriticalThresholds {
    fn default() -> Self {
        CriticalThresholds {
            grad_tol: 1e-6,
            curv_rel_tol: 1e-8,
            resid_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Classification {
    NearSolution { index: usize, inner_product: f64 },
    StrictSaddle,
    NonCritical,
    Indeterminate,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::NearSolution { .. } => "near_solution",
            Classification::StrictSaddle => "strict_saddle",
            Classification::NonCritical => "non_critical",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub region: RegionClassification,
    pub grad_norm: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub hess_min_eig: f64,
    pub hess_min_vec: Vec<f64>,
    pub classification: Classification,
    /// Indices with `|ζ_i| > 2|β_i|/α_i`.
    pub big_coordinates: Vec<usize>,
    /// `max_i |ζ_i³ − α_iζ_i + β_i| / α_i^{3/2}`.
    pub max_cubic_residual: f64,
    /// The cubic condition holds to `resid_tol` (meaningful at critical points).
    pub cubic_consistent: bool,
    /// `max_i |⟨a_i/‖a_i‖, q⟩|` and its index.
    pub best_index: usize,
    pub max_inner_product: f64,
}

impl LandscapeReport {
    /// A second-order point far from every column: the outcome the geometry rules out.
    pub fn is_spurious_minimizer(&self, curv_tol: f64) -> bool {
        self.grad_norm_is_critical() && self.hess_min_eig >= -curv_tol && self.max_inner_product < 0.5
    }

    fn grad_norm_is_critical(&self) -> bool {
        !matches!(self.classification, Classification::NonCritical)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Smallest eigenpair of the dense Riemannian Hessian on the tangent space.
///
/// The Hessian annihilates `q`, so adding `c·qqᵀ` with `c` above the spectral
/// radius moves that direction to the top without touching the rest.
pub fn tangent_min_eig<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint) -> Result<(f64, DVector<f64>)> {
    if q.dim() < 2 {
        return invalid("tangent space of S^0 is trivial");
    }
    let h = obj.rhess(q)?;
    let c = h.norm() + 1.0;
    let x = q.coords();
    let shifted = h + x * x.transpose() * c;
    let eig = SymmetricEigen::new(shifted);
    let (i, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("n >= 2");
    Ok((val, eig.eigenvectors.column(i).into_owned()))
}

pub fn critical_point_report(
    dict: &Dictionary,
    q: &SpherePoint,
    region: &RegionParams,
    cdl_mode: bool,
    th: &CriticalThresholds,
) -> Result<LandscapeReport> {
    if q.dim() != dict.n() {
        return shape("point and dictionary dimensions differ");
    }
    if dict.n() > DENSE_HESSIAN_MAX_DIM {
        return invalid(format!("landscape reports need n <= {DENSE_HESSIAN_MAX_DIM}"));
    }
    let obj = TensorObjective::new(dict.clone());
    let zeta = q.correlation(dict);
    let zeta4: f64 = zeta.iter().map(|z| z.powi(4)).sum();
    let gram = dict.gram();
    let norms = dict.column_norms();
    let m = dict.m();
    let cubes = zeta.map(|z| z * z * z);
    let mixed = gram * &cubes;

    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    let mut big = Vec::new();
    let mut max_resid: f64 = 0.0;
    for i in 0..m {
        let nn = norms[i] * norms[i];
        let a = zeta4 / nn;
        let b = (mixed[i] - gram[(i, i)] * cubes[i]) / nn;
        if a > 0.0 {
            let resid = (cubes[i] - a * zeta[i] + b).abs() / a.powf(1.5);
            max_resid = max_resid.max(resid);
            if zeta[i].abs() > 2.0 * b.abs() / a {
                big.push(i);
            }
        }
        alphas.push(a);
        betas.push(b);
    }

    let (best_index, max_inner) = (0..m)
        .map(|i| (i, zeta[i].abs() / norms[i]))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc });

    let grad_norm = obj.rgrad(q).norm();
    let (hess_min_eig, hess_min_vec) = tangent_min_eig(&obj, q)?;
    let curv_tol = th.curv_rel_tol * zeta4;

    let classification = if grad_norm >= th.grad_tol {
        Classification::NonCritical
    } else if hess_min_eig < -curv_tol {
        Classification::StrictSaddle
    } else if big.len() == 1 {
        let i = big[0];
        Classification::NearSolution {
            index: i,
            inner_product: zeta[i].abs() / norms[i],
        }
    } else {
        // no big coordinate, or several with a PSD Hessian: flag for inspection
        Classification::Indeterminate
    };

    Ok(LandscapeReport {
        region: classify_region(dict, q, region, cdl_mode),
        grad_norm,
        alphas,
        betas,
        hess_min_eig,
        hess_min_vec: hess_min_vec.iter().cloned().collect(),
        classification,
        big_coordinates: big,
        max_cubic_residual: max_resid,
        cubic_consistent: max_resid <= th.resid_tol,
        best_index,
        max_inner_product: max_inner,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureCertificate {
    /// Column achieving the most negative `a_iᵀ Hess φ_T(q) a_i`.
    pub index: usize,
    pub rayleigh: f64,
    /// `−4‖ζ‖₄⁴‖ζ‖_∞²`.
    pub bound: f64,
    pub holds: bool,
    /// `K ≤ 3/(1 + 6μ + 6ξ^{3/5}μ^{2/5})`.
    pub k_condition: bool,
}

/// Column-direction negative-curvature certificate; columns must be unit norm.
pub fn negative_curvature_certificate(
    dict: &Dictionary,
    q: &SpherePoint,
    xi: f64,
) -> Result<CurvatureCertificate> {
    if q.dim() != dict.n() {
        return shape("point and dictionary dimensions differ");
    }
    if dict.norm_residual() > 1e-8 {
        return invalid("curvature certificate needs unit-norm columns");
    }
    let obj = TensorObjective::new(dict.clone());
    let h = obj.rhess(q)?;
    let a = dict.entries();
    let ha = &h * a;
    let (index, rayleigh) = (0..dict.m())
        .map(|i| (i, a.column(i).dot(&ha.column(i))))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let zeta = q.correlation(dict);
    let zeta4: f64 = zeta.iter().map(|z| z.powi(4)).sum();
    let zinf = zeta.amax();
    let bound = -4.0 * zeta4 * zinf * zinf;
    Ok(CurvatureCertificate {
        index,
        rayleigh,
        bound,
        holds: rayleigh < bound,
        k_condition: k_condition(dict.overcompleteness(), dict.coherence(), xi),
    })
}

pub fn k_condition(k: f64, mu: f64, xi: f64) -> bool {
    let denom = 1.0 + 6.0 * mu + 6.0 * xi.powf(0.6) * mu.powf(0.4);
    k <= 3.0 / denom * (1.0 + 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub seed: u64,
    pub region: String,
    pub grad_norm: f64,
    pub min_eig: f64,
    pub classification: String,
    pub best_index: usize,
    pub inner_product: f64,
}

impl BatchRow {
    pub fn from_report(seed: u64, r: &LandscapeReport) -> Self {
        let (best_index, inner_product) = match r.classification {
            Classification::NearSolution { index, inner_product } => (index, inner_product),
            _ => (r.best_index, r.max_inner_product),
        };
        BatchRow {
            seed,
            region: r.region.region.as_str().to_string(),
            grad_norm: r.grad_norm,
            min_eig: r.hess_min_eig,
            classification: r.classification.as_str().to_string(),
            best_index,
            inner_product,
        }
    }
}

/// Reports for many points in parallel; output order follows the input.
pub fn report_batch(
    dict: &Dictionary,
    points: &[(u64, SpherePoint)],
    region: &RegionParams,
    cdl_mode: bool,
    th: &CriticalThresholds,
) -> Result<Vec<BatchRow>> {
    points
        .par_iter()
        .map(|(seed, q)| critical_point_report(dict, q, region, cdl_mode, th).map(|r| BatchRow::from_report(*seed, &r)))
        .collect()
}

pub fn write_batch_csv(path: &Path, rows: &[BatchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "region", "grad_norm", "min_eig", "classification", "best_index", "inner_product"])?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.region.clone(),
            crate::io::fmt_f64(r.grad_norm),
            crate::io::fmt_f64(r.min_eig),
            r.classification.clone(),
            r.best_index.to_string(),
            crate::io::fmt_f64(r.inner_product),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Dense `Aᵀ Hess A` restricted to columns, exposed for diagnostics.
pub fn column_curvatures(dict: &Dictionary, q: &SpherePoint) -> Result<DVector<f64>> {
    let h: DMatrix<f64> = TensorObjective::new(dict.clone()).rhess(q)?;
    let a = dict.entries();
    let ha = &h * a;
    Ok(DVector::from_fn(dict.m(), |i, _| a.column(i).dot(&ha.column(i))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_for_alpha4_beta1() {
        let iv = cubic_root_intervals(4.0, 1.0).unwrap();
        assert_eq!((iv[0].lo, iv[0].hi), (-0.5, 0.5));
        assert_eq!((iv[1].lo, iv[1].hi), (1.5, 2.5));
        assert_eq!((iv[2].lo, iv[2].hi), (-2.5, -1.5));
    }

    #[test]
    fn precondition_enforced() {
        assert!(cubic_root_intervals(1.0, 0.25).is_ok());
        assert!(cubic_root_intervals(1.0, 0.26).is_err());
        assert!(cubic_root_intervals(0.0, 0.0).is_err());
    }

    #[test]
    fn identity_component_is_near_solution() {
        let d = Dictionary::identity(4);
        let r = critical_point_report(
            &d,
            &SpherePoint::basis(4, 0),
            &RegionParams::dl(0.0),
            false,
            &CriticalThresholds::default(),
        )
        .unwrap();
        assert_eq!(r.classification, Classification::NearSolution { index: 0, inner_product: 1.0 });
        assert!(r.alphas.iter().all(|a| (a - 1.0).abs() < 1e-15));
        assert!(r.betas.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn k_condition_incoherent() {
        assert!(k_condition(3.0, 0.0, 65.0));
        assert!(!k_condition(3.0 + 1e-6, 0.0, 65.0));
    }
}
