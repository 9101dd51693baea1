//! Independent reference implementations used as test oracles. Each one is
//! deliberately naive: loops, brute-force scans and difference quotients.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sphere4::objective::{random_tangent, SphereObjective};
use sphere4::rng::{self, Purpose, StreamRng};
use sphere4::SpherePoint;

/// Gradient finite-difference step.
pub const H_GRAD: f64 = 1e-5;
/// Hessian finite-difference step.
pub const H_HESS: f64 = 1e-4;

pub fn rng(seed: u64) -> StreamRng {
    rng::stream(seed, 0, Purpose::Query)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn vec_rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// `t ↦ φ(P_S(q + t·v))`.
pub fn along<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint, v: &DVector<f64>, t: f64) -> f64 {
    obj.value(&q.retract(&(v * t)).unwrap())
}

/// Central first difference of `φ` along tangent `v`.
pub fn fd_directional<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint, v: &DVector<f64>) -> f64 {
    (along(obj, q, v, H_GRAD) - along(obj, q, v, -H_GRAD)) / (2.0 * H_GRAD)
}

/// Central second difference of `φ` along tangent `v`; metric projection is
/// a second-order retraction, so this approximates `vᵀ Hess φ(q) v`.
pub fn fd_second<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint, v: &DVector<f64>) -> f64 {
    let f0 = obj.value(q);
    (along(obj, q, v, H_HESS) - 2.0 * f0 + along(obj, q, v, -H_HESS)) / (H_HESS * H_HESS)
}

pub fn tangent<R: Rng>(rng: &mut R, q: &SpherePoint) -> DVector<f64> {
    random_tangent(rng, q)
}

/// Triple-loop matrix product.
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * b[(k, j)];
            }
            c[(i, j)] = s;
        }
    }
    c
}

/// Time-domain circular convolution `(a ⊛ b)_i = Σ_j a_j b_{(i−j) mod n}`.
pub fn conv_naive(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| a[j] * b[(i + n - j) % n]).sum())
        .collect()
}

/// Brute-force coherence over all column pairs.
pub fn coherence_naive(a: &DMatrix<f64>) -> f64 {
    let m = a.ncols();
    let mut mu: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let ci = a.column(i);
                let cj = a.column(j);
                mu = mu.max((ci.dot(&cj) / (ci.norm() * cj.norm())).abs());
            }
        }
    }
    mu
}

/// Real roots of `z³ − αz + β` by a dense sign-change scan followed by bisection.
pub fn cubic_roots(alpha: f64, beta: f64) -> Vec<f64> {
    let f = |z: f64| z * z * z - alpha * z + beta;
    let bound = 1.0 + alpha.abs() + beta.abs();
    let steps = 20_000;
    let mut roots = Vec::new();
    let mut prev = -bound;
    let mut fprev = f(prev);
    for s in 1..=steps {
        let z = -bound + 2.0 * bound * s as f64 / steps as f64;
        let fz = f(z);
        if fprev == 0.0 {
            roots.push(prev);
        } else if fprev * fz < 0.0 {
            let (mut lo, mut hi) = (prev, z);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = z;
        fprev = fz;
    }
    if fprev == 0.0 {
        roots.push(prev);
    }
    // a double root touches zero without a sign change; recover it from f' = 0
    if roots.len() < 3 && alpha > 0.0 {
        for z in [(alpha / 3.0).sqrt(), -(alpha / 3.0).sqrt()] {
            if f(z).abs() <= 1e-12 * (1.0 + alpha.powf(1.5)) && !roots.iter().any(|r| (r - z).abs() < 1e-6) {
                roots.push(z);
            }
        }
    }
    roots
}

/// Brute-force scan over all 2n (shift, sign) pairs.
pub fn align_naive(est: &[f64], truth: &[f64]) -> (usize, f64, f64) {
    let n = est.len();
    let ne = est.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nt = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut best = (0, 1.0, f64::INFINITY);
    for l in 0..n {
        for s in [1.0, -1.0] {
            let err = (0..n)
                .map(|i| (s * truth[(i + n - l) % n] / nt - est[i] / ne).powi(2))
                .sum::<f64>()
                .sqrt();
            if err < best.2 - 1e-12 {
                best = (l, s, err);
            }
        }
    }
    best
}

/// Expected coupon-collector time `m·H_m`.
pub fn coupon_expectation(m: usize) -> f64 {
    m as f64 * (1..=m).map(|k| 1.0 / k as f64).sum::<f64>()
}

/// Orthonormal basis of the tangent space `q⊥` (n−1 columns), by Gram-Schmidt on `[q | I]`.
pub fn tangent_basis(q: &SpherePoint) -> Vec<DVector<f64>> {
    let n = q.dim();
    let mut basis: Vec<DVector<f64>> = vec![q.coords().clone()];
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                e -= b * b.dot(&e);
            }
        }
        let norm = e.norm();
        if norm > 1e-8 && basis.len() < n {
            basis.push(e / norm);
        }
    }
    basis.remove(0);
    basis
}

/// Riemannian gradient assembled from central differences along a tangent basis.
pub fn fd_rgrad<O: SphereObjective + ?Sized>(obj: &O, q: &SpherePoint) -> DVector<f64> {
    tangent_basis(q)
        .iter()
        .fold(DVector::zeros(q.dim()), |acc, b| acc + b * fd_directional(obj, q, b))
}
