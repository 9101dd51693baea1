//! Domain types and generators: dictionaries, sparse codes, sphere points,
//! observations and convolutional filter banks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::fft::Spectral;
use crate::rng::{self, Purpose};

/// Tolerance on `| ‖q‖ − 1 |` for sphere points.
pub const UNIT_TOL: f64 = 1e-12;

/// An `n × m` dictionary with cached Gram data.
#[derive(Debug, Clone)]
pub struct Dictionary {
    entries: DMatrix<f64>,
    gram: DMatrix<f64>,
    column_norms: Vec<f64>,
    coherence: f64,
}

impl Dictionary {
    /// Wraps a matrix. Columns must be finite and nonzero.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (n, m) = entries.shape();
        if n == 0 || m == 0 {
            return shape("dictionary must be non-empty");
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return invalid("dictionary has non-finite entries");
        }
        let column_norms: Vec<f64> = entries.column_iter().map(|c| c.norm()).collect();
        if let Some(j) = column_norms.iter().position(|&c| c == 0.0) {
            return invalid(format!("dictionary column {j} is zero"));
        }
        let gram = entries.transpose() * &entries;
        let coherence = coherence_from_gram(&gram, &column_norms);
        Ok(Dictionary {
            entries,
            gram,
            column_norms,
            coherence,
        })
    }

    pub fn identity(n: usize) -> Self {
        Dictionary::new(DMatrix::identity(n, n)).expect("identity is a valid dictionary")
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m(&self) -> usize {
        self.entries.ncols()
    }

    /// Overcompleteness `K = m / n`.
    pub fn overcompleteness(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }

    /// `AᵀA`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.entries.column(i).into_owned()
    }

    pub fn unit_column(&self, i: usize) -> DVector<f64> {
        self.column(i) / self.column_norms[i]
    }

    /// Mutual coherence `max_{i≠j} |⟨a_i/‖a_i‖, a_j/‖a_j‖⟩|` (0 when m = 1).
    pub fn coherence(&self) -> f64 {
        self.coherence
    }

    /// `‖(n/m)·A·Aᵀ − I‖_F`.
    pub fn frame_residual(&self) -> f64 {
        frame_residual(&self.entries)
    }

    /// `max_i | ‖a_i‖ − 1 |`.
    pub fn norm_residual(&self) -> f64 {
        self.column_norms
            .iter()
            .map(|c| (c - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Correlation vector `ζ = Aᵀq`.
    pub fn correlate(&self, q: &DVector<f64>) -> DVector<f64> {
        self.entries.tr_mul(q)
    }
}

fn coherence_from_gram(gram: &DMatrix<f64>, norms: &[f64]) -> f64 {
    let m = norms.len();
    let mut mu: f64 = 0.0;
    for j in 0..m {
        for i in (j + 1)..m {
            let c = (gram[(i, j)] / (norms[i] * norms[j])).abs();
            mu = mu.max(c);
        }
    }
    mu
}

/// Coherence of an arbitrary matrix; zero columns are rejected.
pub fn coherence(a: &DMatrix<f64>) -> Result<f64> {
    Dictionary::new(a.clone()).map(|d| d.coherence())
}

pub fn frame_residual(a: &DMatrix<f64>) -> f64 {
    let (n, m) = a.shape();
    let s = (a * a.transpose()) * (n as f64 / m as f64) - DMatrix::<f64>::identity(n, n);
    s.norm()
}

/// Welch lower bound `√((m−n)/((m−1)n))` on the coherence of m unit vectors in R^n.
pub fn welch_bound(n: usize, m: usize) -> f64 {
    if m <= n || m < 2 {
        return 0.0;
    }
    ((m - n) as f64 / ((m - 1) as f64 * n as f64)).sqrt()
}

/// Parameters of the alternating UNTF construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UntfConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for UntfConfig {
    fn default() -> Self {
        UntfConfig {
            max_iters: 5000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UntfReport {
    pub converged: bool,
    pub iterations: usize,
    pub frame_residual: f64,
    pub norm_residual: f64,
}

/// Generates a unit-norm tight frame by alternating between the tight-frame
/// projection `A ← ((m/n)AAᵀ)^{-1/2} A` and column normalization, starting
/// from an `N(0, 1/n)` matrix.
///
/// On non-convergence the best iterate seen is returned with
/// `converged = false`.
pub fn make_untf(n: usize, m: usize, seed: u64, cfg: UntfConfig) -> Result<(Dictionary, UntfReport)> {
    if n == 0 || m < n {
        return invalid(format!("make_untf needs 1 <= n <= m (got n={n}, m={m})"));
    }
    if cfg.max_iters == 0 || !(cfg.tol > 0.0) {
        return invalid("make_untf needs max_iters >= 1 and tol > 0");
    }
    let mut rng = rng::stream(seed, 0, Purpose::Dictionary);
    let mut a = rng::gaussian_matrix(&mut rng, n, m, 1.0 / (n as f64).sqrt());
    let ratio = m as f64 / n as f64;

    let mut best: Option<(DMatrix<f64>, f64, f64, usize)> = None;
    for it in 1..=cfg.max_iters {
        let s = (&a * a.transpose()) * ratio;
        let eig = SymmetricEigen::new(s);
        let lmax = eig.eigenvalues.max();
        let floor = 1e-14 * lmax;
        let inv_sqrt = DVector::from_iterator(
            n,
            eig.eigenvalues.iter().map(|&l| 1.0 / l.max(floor).sqrt()),
        );
        let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        a = w * a;
        for mut col in a.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        let fr = frame_residual(&a);
        let nr = a
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max);
        let score = fr.max(nr);
        if best.as_ref().map_or(true, |b| score < b.1.max(b.2)) {
            best = Some((a.clone(), fr, nr, it));
        }
        if fr <= cfg.tol && nr <= cfg.tol {
            let dict = Dictionary::new(a)?;
            return Ok((
                dict,
                UntfReport {
                    converged: true,
                    iterations: it,
                    frame_residual: fr,
                    norm_residual: nr,
                },
            ));
        }
    }
    let (a, fr, nr, _) = best.expect("at least one iteration ran");
    Ok((
        Dictionary::new(a)?,
        UntfReport {
            converged: false,
            iterations: cfg.max_iters,
            frame_residual: fr,
            norm_residual: nr,
        },
    ))
}

/// Bernoulli-Gaussian sparse code `X = B ⊙ G`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    entries: DMatrix<f64>,
    theta: f64,
}

impl SparseCode {
    /// Wraps a given code matrix, e.g. one read from disk.
    pub fn new(entries: DMatrix<f64>, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if entries.iter().any(|x| !x.is_finite()) {
            return invalid("code entries must be finite");
        }
        Ok(SparseCode { entries, theta })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn nonzero_fraction(&self) -> f64 {
        let nnz = self.entries.iter().filter(|&&x| x != 0.0).count();
        nnz as f64 / self.entries.len() as f64
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        invalid(format!("theta must lie in (0,1), got {theta}"))
    }
}

/// One BG(θ) draw: Bernoulli mask first, Gaussian only for unmasked entries.
#[inline]
pub fn bg_draw<R: Rng + ?Sized>(rng: &mut R, theta: f64) -> f64 {
    if rng.random::<f64>() < theta {
        rng.sample(StandardNormal)
    } else {
        0.0
    }
}

/// Samples an `m × p` BG(θ) matrix, column-major, from the `Code` stream of `seed`.
pub fn sample_bg(m: usize, p: usize, theta: f64, seed: u64) -> Result<SparseCode> {
    check_theta(theta)?;
    let mut rng = rng::stream(seed, 0, Purpose::Code);
    let entries = DMatrix::from_fn(m, p, |_, _| bg_draw(&mut rng, theta));
    Ok(SparseCode { entries, theta })
}

/// A point on the unit sphere S^{n-1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct SpherePoint {
    coords: DVector<f64>,
}

impl From<SpherePoint> for Vec<f64> {
    fn from(q: SpherePoint) -> Self {
        q.coords.iter().cloned().collect()
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpherePoint::project(DVector::from_vec(v))
    }
}

impl SpherePoint {
    /// Metric projection `v ↦ v/‖v‖`.
    pub fn project(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Numerical(
                "cannot project a zero or non-finite vector onto the sphere".into(),
            ));
        }
        Ok(SpherePoint { coords: v / norm })
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::project(DVector::from_column_slice(v))
    }

    /// Standard basis vector `e_i`.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        SpherePoint { coords: v }
    }

    pub fn random(n: usize, seed: u64, trial: u64) -> Self {
        let mut rng = rng::stream(seed, trial, Purpose::Init);
        SpherePoint {
            coords: rng::uniform_sphere(&mut rng, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn negated(&self) -> Self {
        SpherePoint {
            coords: -&self.coords,
        }
    }

    /// `ζ(q) = Aᵀq`.
    pub fn correlation(&self, dict: &Dictionary) -> DVector<f64> {
        dict.correlate(&self.coords)
    }

    /// Projection of `v` onto the tangent space `{ w : ⟨w, q⟩ = 0 }`.
    pub fn project_tangent(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.coords * self.coords.dot(v)
    }

    /// Retraction `q + v ↦ (q + v)/‖q + v‖`.
    pub fn retract(&self, v: &DVector<f64>) -> Result<Self> {
        Self::project(&self.coords + v)
    }
}

/// `Y = A·X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    entries: DMatrix<f64>,
}

impl ObservationSet {
    pub fn new(entries: DMatrix<f64>) -> Self {
        ObservationSet { entries }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of samples (columns).
    pub fn p(&self) -> usize {
        self.entries.ncols()
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.entries.column(i).into_owned()
    }
}

pub fn synth_odl(dict: &Dictionary, code: &SparseCode) -> Result<ObservationSet> {
    if dict.m() != code.entries.nrows() {
        return shape(format!(
            "dictionary has {} columns but code has {} rows",
            dict.m(),
            code.entries.nrows()
        ));
    }
    Ok(ObservationSet::new(dict.entries() * code.entries()))
}

/// Spikiness `|ζ_(1)| / |ζ_(2)|` of the two largest magnitudes.
///
/// Returns `f64::INFINITY` when the second-largest magnitude is zero.
pub fn spikiness(zeta: &[f64]) -> Result<f64> {
    if zeta.len() < 2 {
        return invalid("spikiness needs at least two entries");
    }
    let (mut first, mut second) = (0.0_f64, 0.0_f64);
    for &z in zeta {
        let a = z.abs();
        if a > first {
            second = first;
            first = a;
        } else if a > second {
            second = a;
        }
    }
    if second == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(first / second)
}

/// K filters of length n that generate the stacked circulant `A₀ = [C_{a_1} … C_{a_K}]`.
#[derive(Debug, Clone)]
pub struct FilterBank {
    filters: Vec<DVector<f64>>,
    kappa: f64,
    sigma_min: f64,
}

impl FilterBank {
    /// Singular values of `A₀` are `√(Σ_k |â_k(ω)|²)` over the DFT bins ω.
    pub fn new(filters: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = filters.first() else {
            return invalid("filter bank needs at least one filter");
        };
        let n = first.len();
        if n == 0 || filters.iter().any(|f| f.len() != n) {
            return shape("all filters must share a positive length");
        }
        let spectral = Spectral::new(n);
        let mut power = vec![0.0; n];
        for f in &filters {
            for (acc, c) in power.iter_mut().zip(spectral.forward(f.as_slice())) {
                *acc += c.norm_sqr();
            }
        }
        let smax = power.iter().cloned().fold(0.0, f64::max).sqrt();
        let smin = power.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
        if !(smin > 0.0) {
            return Err(Error::Numerical(
                "stacked circulant of the filters is rank deficient (sigma_min = 0)".into(),
            ));
        }
        Ok(FilterBank {
            filters,
            kappa: smax / smin,
            sigma_min: smin,
        })
    }

    /// K filters drawn uniformly from S^{n-1}; redraws on a singular stack.
    pub fn random_sphere(n: usize, k: usize, seed: u64) -> Result<Self> {
        if n == 0 || k == 0 {
            return invalid("filter bank needs n >= 1 and K >= 1");
        }
        let mut rng = rng::stream(seed, 0, Purpose::Filters);
        for _ in 0..64 {
            let filters = (0..k).map(|_| rng::uniform_sphere(&mut rng, n)).collect();
            match FilterBank::new(filters) {
                Ok(fb) => return Ok(fb),
                Err(Error::Numerical(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Numerical("could not draw a well-posed filter bank".into()))
    }

    pub fn filters(&self) -> &[DVector<f64>] {
        &self.filters
    }

    pub fn n(&self) -> usize {
        self.filters[0].len()
    }

    pub fn k(&self) -> usize {
        self.filters.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    /// Dense `A₀ ∈ R^{n × nK}`.
    pub fn stacked_circulant(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a0 = DMatrix::zeros(n, n * self.k());
        for (k, f) in self.filters.iter().enumerate() {
            for j in 0..n {
                for i in 0..n {
                    a0[(i, k * n + j)] = f[(i + n - j) % n];
                }
            }
        }
        a0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_untf_is_orthogonal() {
        let (d, rep) = make_untf(4, 4, 3, UntfConfig::default()).unwrap();
        assert!(rep.converged);
        let a = d.entries();
        let err = (a * a.transpose() - DMatrix::<f64>::identity(4, 4)).norm();
        assert!(err < 1e-10);
        assert!(d.norm_residual() < 1e-10);
    }

    #[test]
    fn untf_rejects_m_below_n() {
        assert!(make_untf(4, 3, 0, UntfConfig::default()).is_err());
    }

    #[test]
    fn spikiness_cases() {
        let mut z = vec![0.1; 6];
        z[0] = 1.0;
        assert!((spikiness(&z).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(spikiness(&[1.0, 1.0]).unwrap(), 1.0);
        assert!((spikiness(&[0.9, -0.3, 0.05]).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(spikiness(&[1.0, 0.0, 0.0]).unwrap(), f64::INFINITY);
        assert!(spikiness(&[1.0]).is_err());
    }

    #[test]
    fn coherence_edge_cases() {
        assert_eq!(Dictionary::identity(5).coherence(), 0.0);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.3, 0.5, 1.0, -0.7]);
        assert!((coherence(&a).unwrap() - 1.0).abs() < 1e-12);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(coherence(&z).is_err());
    }

    #[test]
    fn bg_extremes() {
        let x = sample_bg(10, 10, 1e-12, 4).unwrap();
        assert!(x.entries().iter().all(|&v| v == 0.0));
        let x = sample_bg(10, 10, 1.0 - 1e-12, 4).unwrap();
        assert_eq!(x.nonzero_fraction(), 1.0);
        assert!(sample_bg(3, 3, 1.0, 0).is_err());
        assert!(sample_bg(3, 3, 0.0, 0).is_err());
    }

    #[test]
    fn synth_shapes() {
        let d = Dictionary::identity(3);
        let x = sample_bg(4, 2, 0.5, 1).unwrap();
        assert!(synth_odl(&d, &x).is_err());
    }

    #[test]
    fn delta_filter_bank_is_perfectly_conditioned() {
        let mut delta = DVector::zeros(8);
        delta[0] = 1.0;
        let fb = FilterBank::new(vec![delta]).unwrap();
        assert!((fb.kappa() - 1.0).abs() < 1e-12);
        assert!((fb.sigma_min() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_point_projection() {
        let q = SpherePoint::from_slice(&[3.0, 4.0]).unwrap();
        assert!((q.coords().norm() - 1.0).abs() < UNIT_TOL);
        assert!(SpherePoint::from_slice(&[0.0, 0.0]).is_err());
        let t = q.project_tangent(&DVector::from_vec(vec![1.0, 1.0]));
        assert!(t.dot(q.coords()).abs() < 1e-15);
    }
}
