//! Length-n complex FFT plans for circular convolution of real signals.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized DFT of a real signal.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.n);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse DFT (scaled by 1/n), keeping the real part.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        debug_assert_eq!(spectrum.len(), self.n);
        let mut buf = spectrum.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Circular convolution `a ⊛ b` (indices modulo n).
    pub fn convolve(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let fa = self.forward(a);
        let fb = self.forward(b);
        let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
        self.inverse_real(&prod)
    }

    /// Circular cross-correlation `r_l = Σ_i a_i · b_{i-l}`, i.e. `r_l = ⟨a, s_l[b]⟩`.
    pub fn correlate(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let fa = self.forward(a);
        let fb = self.forward(b);
        let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect();
        self.inverse_real(&prod)
    }
}

/// Cyclic shift `s_l[v]`, with `s_l[v]_i = v_{(i - l) mod n}`.
pub fn cyclic_shift(v: &[f64], l: isize) -> Vec<f64> {
    let n = v.len() as isize;
    if n == 0 {
        return Vec::new();
    }
    (0..n).map(|i| v[(i - l).rem_euclid(n) as usize]).collect()
}

/// Cyclic reversal `(v_0, v_{n-1}, ..., v_1)`.
pub fn cyclic_reverse(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| v[(n - i) % n]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_and_reverse() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(cyclic_shift(&v, 1), vec![4.0, 1.0, 2.0, 3.0]);
        assert_eq!(cyclic_shift(&v, -1), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(cyclic_reverse(&v), vec![1.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn correlation_peaks_at_shift() {
        let s = Spectral::new(5);
        let b = [0.3, -1.0, 2.0, 0.5, 0.1];
        let a = cyclic_shift(&b, 2);
        let r = s.correlate(&a, &b);
        let (best, _) = r
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
        assert_eq!(best, 2);
    }
}
