//! Convolutional dictionary learning: circulant operators, the spectral
//! preconditioner, and the CDL objective evaluated through FFTs.
//!
//! Conventions: `C_v` is the circulant matrix whose j-th column is the
//! cyclic shift `s_j[v]`, so `C_v x = v ⊛ x` and `C_vᵀ q` is the circular
//! correlation of `q` with `v` (in frequency: `conj(v̂)·q̂`).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::fft::Spectral;
use crate::model::{bg_draw, check_theta, FilterBank, ObservationSet, SpherePoint};
use crate::objective::{normalizer, OdlObjective, SphereObjective};
use crate::rng::{self, Purpose};

/// Relative floor applied to the averaged power spectrum.
pub const SPECTRAL_FLOOR: f64 = 1e-10;

/// Measurements per parallel work unit in the CDL objective.
const CHUNK: usize = 128;

#[derive(Debug, Clone)]
pub struct CirculantOp {
    generator: Vec<f64>,
    spectrum: Vec<Complex64>,
    spectral: Spectral,
}

impl CirculantOp {
    pub fn new(generator: &[f64]) -> Self {
        let spectral = Spectral::new(generator.len());
        let spectrum = spectral.forward(generator);
        CirculantOp {
            generator: generator.to_vec(),
            spectrum,
            spectral,
        }
    }

    pub fn len(&self) -> usize {
        self.generator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generator.is_empty()
    }

    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// `C_g v = g ⊛ v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let fv = self.spectral.forward(v);
        let prod: Vec<Complex64> = self.spectrum.iter().zip(&fv).map(|(a, b)| a * b).collect();
        self.spectral.inverse_real(&prod)
    }

    /// `C_gᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let fv = self.spectral.forward(v);
        let prod: Vec<Complex64> = self
            .spectrum
            .iter()
            .zip(&fv)
            .map(|(a, b)| a.conj() * b)
            .collect();
        self.spectral.inverse_real(&prod)
    }

    pub fn materialize(&self) -> DMatrix<f64> {
        circulant_matrix(&self.generator)
    }
}

/// Dense circulant with column j equal to `s_j[g]`.
pub fn circulant_matrix(g: &[f64]) -> DMatrix<f64> {
    let n = g.len();
    DMatrix::from_fn(n, n, |i, j| g[(i + n - j) % n])
}

/// Scalar used to normalize `(1/p)·Σ_i |ŷ_i|²` before the inverse square root.
///
/// All conventions give the same preconditioner up to a positive scalar;
/// only `TightFrame` makes `P·A₀` approximately satisfy `K⁻¹(PA₀)(PA₀)ᵀ ≈ I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleConvention {
    /// `θ·K²·n`.
    #[default]
    MainText,
    /// `θ·n`.
    AppendixH,
    /// `θ·K·n`.
    TightFrame,
}

impl ScaleConvention {
    pub fn scale(self, theta: f64, k: usize, n: usize) -> f64 {
        let (k, n) = (k as f64, n as f64);
        match self {
            ScaleConvention::MainText => theta * k * k * n,
            ScaleConvention::AppendixH => theta * n,
            ScaleConvention::TightFrame => theta * k * n,
        }
    }
}

/// Circulant SPD preconditioner `P = F* diag(ŵ) F`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preconditioner {
    /// Per-bin weights `ŵ`.
    pub spectrum_weights: Vec<f64>,
    pub scale_convention: ScaleConvention,
    /// True if any power bin had to be raised to the spectral floor.
    #[serde(default)]
    pub floored: bool,
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Preconditioner {
            spectrum_weights: vec![1.0; n],
            scale_convention: ScaleConvention::MainText,
            floored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.spectrum_weights.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.scale_spectrum(v, |w| w)
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        self.scale_spectrum(v, |w| 1.0 / w)
    }

    fn scale_spectrum(&self, v: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let spectral = Spectral::new(self.n());
        let mut fv = spectral.forward(v);
        for (c, &w) in fv.iter_mut().zip(&self.spectrum_weights) {
            *c *= f(w);
        }
        spectral.inverse_real(&fv)
    }

    /// Generator `p = F⁻¹ ŵ` of the circulant `P = C_p`.
    pub fn generator(&self) -> Vec<f64> {
        let spectral = Spectral::new(self.n());
        let w: Vec<Complex64> = self
            .spectrum_weights
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        spectral.inverse_real(&w)
    }

    pub fn materialize(&self) -> DMatrix<f64> {
        circulant_matrix(&self.generator())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Preconditioner = serde_json::from_str(s)?;
        if p.spectrum_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return invalid("preconditioner weights must be positive and finite");
        }
        Ok(p)
    }
}

/// Builds `P = ((scale·p)⁻¹ Σ_i C_{y_i} C_{y_i}ᵀ)^{-1/2}` from measurement
/// spectra. Columns of `obs` are the measurements.
pub fn build_preconditioner(
    obs: &ObservationSet,
    theta: f64,
    k: usize,
    convention: ScaleConvention,
) -> Result<Preconditioner> {
    check_theta(theta)?;
    let (n, p) = (obs.n(), obs.p());
    if p == 0 || n == 0 {
        return invalid("preconditioner needs at least one non-empty measurement");
    }
    if k == 0 {
        return invalid("K must be positive");
    }
    let spectral = Spectral::new(n);
    let mut power = vec![0.0; n];
    for col in obs.entries().column_iter() {
        let yh = spectral.forward(col.as_slice());
        for (acc, c) in power.iter_mut().zip(&yh) {
            *acc += c.norm_sqr();
        }
    }
    let inv_p = 1.0 / p as f64;
    power.iter_mut().for_each(|x| *x *= inv_p);
    let max_bin = power.iter().cloned().fold(0.0, f64::max);
    if !(max_bin > 0.0) {
        return Err(Error::Numerical("all measurements are zero".into()));
    }
    let floor = SPECTRAL_FLOOR * max_bin;
    let mut floored = false;
    let scale = convention.scale(theta, k, n);
    let spectrum_weights = power
        .iter()
        .map(|&x| {
            let x = if x < floor {
                floored = true;
                floor
            } else {
                x
            };
            (x / scale).powf(-0.5)
        })
        .collect();
    Ok(Preconditioner {
        spectrum_weights,
        scale_convention: convention,
        floored,
    })
}

/// `y_i = Σ_k a_k ⊛ x_{ik}`; each code vector is the K blocks `x_{i1}, …, x_{iK}`
/// of length n laid end to end.
pub fn circ_embed(filters: &FilterBank, codes: &[DVector<f64>]) -> Result<ObservationSet> {
    let (n, k) = (filters.n(), filters.k());
    if let Some(bad) = codes.iter().position(|c| c.len() != n * k) {
        return shape(format!(
            "code {bad} has length {} but n*K = {}",
            codes[bad].len(),
            n * k
        ));
    }
    let spectral = Spectral::new(n);
    let filter_spectra: Vec<Vec<Complex64>> = filters
        .filters()
        .iter()
        .map(|f| spectral.forward(f.as_slice()))
        .collect();
    let mut y = DMatrix::zeros(n, codes.len());
    for (i, code) in codes.iter().enumerate() {
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for (kk, fs) in filter_spectra.iter().enumerate() {
            let xh = spectral.forward(&code.as_slice()[kk * n..(kk + 1) * n]);
            for ((a, f), x) in acc.iter_mut().zip(fs).zip(&xh) {
                *a += f * x;
            }
        }
        y.set_column(i, &DVector::from_vec(spectral.inverse_real(&acc)));
    }
    Ok(ObservationSet::new(y))
}

/// A synthetic CDL instance: filters, BG(θ) codes and the measurements.
#[derive(Debug, Clone)]
pub struct ConvProblem {
    pub filters: FilterBank,
    pub codes: Vec<DVector<f64>>,
    pub measurements: ObservationSet,
    pub theta: f64,
}

impl ConvProblem {
    /// Filters uniform on S^{n-1}, codes BG(θ), measurements by circular convolution.
    pub fn generate(n: usize, k: usize, theta: f64, p: usize, seed: u64) -> Result<Self> {
        check_theta(theta)?;
        if p == 0 {
            return invalid("need at least one measurement");
        }
        let filters = FilterBank::random_sphere(n, k, seed)?;
        Self::with_filters(filters, theta, p, seed)
    }

    pub fn with_filters(filters: FilterBank, theta: f64, p: usize, seed: u64) -> Result<Self> {
        check_theta(theta)?;
        let len = filters.n() * filters.k();
        let mut rng = rng::stream(seed, 0, Purpose::Code);
        let codes: Vec<DVector<f64>> = (0..p)
            .map(|_| DVector::from_fn(len, |_, _| bg_draw(&mut rng, theta)))
            .collect();
        let measurements = circ_embed(&filters, &codes)?;
        Ok(ConvProblem {
            filters,
            codes,
            measurements,
            theta,
        })
    }

    pub fn n(&self) -> usize {
        self.filters.n()
    }

    pub fn k(&self) -> usize {
        self.filters.k()
    }
}

/// `φ_CDL(q) = −c_CDL Σ_i ‖C_{y_iᵖ}ᵀ q‖₄⁴` with `y_iᵖ = p ⊛ y_i` and
/// `c_CDL = 1/(12θ(1−θ)np)`.
#[derive(Debug, Clone)]
pub struct CdlObjective {
    /// DFTs of the preconditioned measurements.
    spectra: Vec<Vec<Complex64>>,
    precond: Preconditioner,
    spectral: Spectral,
    n: usize,
    theta: f64,
    k: usize,
    c: f64,
}

impl CdlObjective {
    pub fn new(obs: &ObservationSet, precond: Preconditioner, theta: f64, k: usize) -> Result<Self> {
        check_theta(theta)?;
        let (n, p) = (obs.n(), obs.p());
        if precond.n() != n {
            return shape(format!("preconditioner has length {} but n = {n}", precond.n()));
        }
        if p == 0 {
            return invalid("need at least one measurement");
        }
        let spectral = Spectral::new(n);
        let spectra = obs
            .entries()
            .column_iter()
            .map(|col| {
                let mut s = spectral.forward(col.as_slice());
                for (c, &w) in s.iter_mut().zip(&precond.spectrum_weights) {
                    *c *= w;
                }
                s
            })
            .collect();
        Ok(CdlObjective {
            spectra,
            precond,
            spectral,
            n,
            theta,
            k,
            c: normalizer(theta, n * p),
        })
    }

    pub fn preconditioner(&self) -> &Preconditioner {
        &self.precond
    }

    pub fn p(&self) -> usize {
        self.spectra.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn normalizer(&self) -> f64 {
        self.c
    }

    /// Preconditioned measurement `y_iᵖ` in the time domain.
    pub fn preconditioned_sample(&self, i: usize) -> Vec<f64> {
        self.spectral.inverse_real(&self.spectra[i])
    }

    /// Dense reference: `[C_{y_1ᵖ} … C_{y_pᵖ}]` as an ODL objective over np columns.
    pub fn dense_equivalent(&self) -> Result<OdlObjective> {
        let (n, p) = (self.n, self.p());
        let mut y = DMatrix::zeros(n, n * p);
        for i in 0..p {
            let c = circulant_matrix(&self.preconditioned_sample(i));
            y.view_mut((0, i * n), (n, n)).copy_from(&c);
        }
        OdlObjective::from_matrix(y, self.theta)
    }

    /// Time-domain `C_{y_iᵖ}ᵀ x` for every measurement of a chunk.
    fn correlations(&self, range: std::ops::Range<usize>, xh: &[Complex64]) -> Vec<Vec<f64>> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        range
            .map(|i| {
                for ((b, y), x) in buf.iter_mut().zip(&self.spectra[i]).zip(xh) {
                    *b = y.conj() * x;
                }
                self.spectral.inverse_real(&buf)
            })
            .collect()
    }

    /// Evaluates `Σ_i C_{y_iᵖ} f_i` in frequency, with the per-chunk partial
    /// sums combined pairwise so the result is independent of thread count.
    fn accumulate<F>(&self, per_sample: F) -> Vec<Complex64>
    where
        F: Fn(usize, &mut Vec<Complex64>) + Sync,
    {
        let p = self.p();
        let chunks: Vec<Vec<Complex64>> = (0..p.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![Complex64::new(0.0, 0.0); self.n];
                for i in c * CHUNK..((c + 1) * CHUNK).min(p) {
                    per_sample(i, &mut acc);
                }
                acc
            })
            .collect();
        pairwise_sum(chunks, self.n)
    }
}

fn pairwise_sum(mut parts: Vec<Vec<Complex64>>, n: usize) -> Vec<Complex64> {
    if parts.is_empty() {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}

impl SphereObjective for CdlObjective {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, q: &SpherePoint) -> f64 {
        let qh = self.spectral.forward(q.coords().as_slice());
        let p = self.p();
        let partial: Vec<f64> = (0..p.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                self.correlations(c * CHUNK..((c + 1) * CHUNK).min(p), &qh)
                    .iter()
                    .map(|u| u.iter().map(|x| x.powi(4)).sum::<f64>())
                    .sum::<f64>()
            })
            .collect();
        -self.c * partial.iter().sum::<f64>()
    }

    fn egrad(&self, q: &SpherePoint) -> DVector<f64> {
        let qh = self.spectral.forward(q.coords().as_slice());
        let total = self.accumulate(|i, acc| {
            let u = &self.correlations(i..i + 1, &qh)[0];
            let cubed: Vec<f64> = u.iter().map(|x| x * x * x).collect();
            let ch = self.spectral.forward(&cubed);
            for ((a, y), c) in acc.iter_mut().zip(&self.spectra[i]).zip(&ch) {
                *a += y * c;
            }
        });
        DVector::from_vec(self.spectral.inverse_real(&total)) * (-4.0 * self.c)
    }

    fn ehess_vec(&self, q: &SpherePoint, v: &DVector<f64>) -> DVector<f64> {
        let qh = self.spectral.forward(q.coords().as_slice());
        let vh = self.spectral.forward(v.as_slice());
        let total = self.accumulate(|i, acc| {
            let u = &self.correlations(i..i + 1, &qh)[0];
            let w = &self.correlations(i..i + 1, &vh)[0];
            let s: Vec<f64> = u.iter().zip(w).map(|(a, b)| a * a * b).collect();
            let sh = self.spectral.forward(&s);
            for ((a, y), c) in acc.iter_mut().zip(&self.spectra[i]).zip(&sh) {
                *a += y * c;
            }
        });
        DVector::from_vec(self.spectral.inverse_real(&total)) * (-12.0 * self.c)
    }
}

/// `a⋆ = P_sphere(P⁻¹ q⋆)`.
pub fn deprecondition(q: &SpherePoint, precond: &Preconditioner) -> Result<SpherePoint> {
    if q.dim() != precond.n() {
        return shape("point and preconditioner lengths differ");
    }
    SpherePoint::project(DVector::from_vec(precond.apply_inverse(q.coords().as_slice())))
}

/// `‖K⁻¹(PA₀)(PA₀)ᵀ − I‖_F`, computed from the circulant spectra.
pub fn preconditioned_frame_residual(filters: &FilterBank, precond: &Preconditioner) -> f64 {
    let n = filters.n();
    let spectral = Spectral::new(n);
    let mut power = vec![0.0; n];
    for f in filters.filters() {
        for (acc, c) in power.iter_mut().zip(spectral.forward(f.as_slice())) {
            *acc += c.norm_sqr();
        }
    }
    let k = filters.k() as f64;
    power
        .iter()
        .zip(&precond.spectrum_weights)
        .map(|(s, w)| (w * w * s / k - 1.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circulant_columns_are_shifts() {
        let g = [1.0, 2.0, 3.0, 4.0];
        let c = circulant_matrix(&g);
        for j in 0..4 {
            let col: Vec<f64> = c.column(j).iter().cloned().collect();
            assert_eq!(col, crate::fft::cyclic_shift(&g, j as isize));
        }
    }

    #[test]
    fn identity_preconditioner_is_identity() {
        let p = Preconditioner::identity(5);
        let v = [0.3, -1.0, 2.0, 0.1, 0.0];
        let out = p.apply(&v);
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_measurements_rejected() {
        let obs = ObservationSet::new(DMatrix::zeros(4, 3));
        assert!(build_preconditioner(&obs, 0.1, 1, ScaleConvention::MainText).is_err());
    }

    #[test]
    fn preconditioner_json_roundtrip() {
        let p = Preconditioner {
            spectrum_weights: vec![0.5, 2.0, 2.0],
            scale_convention: ScaleConvention::AppendixH,
            floored: false,
        };
        let back = Preconditioner::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back.spectrum_weights, p.spectrum_weights);
        assert_eq!(back.scale_convention, ScaleConvention::AppendixH);
        assert!(Preconditioner::from_json(r#"{"spectrum_weights":[0.0],"scale_convention":"main_text"}"#).is_err());
    }
}
