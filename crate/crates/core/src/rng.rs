//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by
//! `(seed, trial, purpose)`. ChaCha is counter based, so distinct keys give
//! independent streams and a trial's draws do not depend on how many other
//! trials ran before it or on which thread it ran.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Keeps e.g. the dictionary of trial 3 and the
/// initial point of trial 3 on different streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Dictionary = 1,
    Code = 2,
    Init = 3,
    Filters = 4,
    Sample = 5,
    Lanczos = 6,
    Query = 7,
}

pub fn stream(seed: u64, trial: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Column-major fill with i.i.d. N(0, sigma²) entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    sigma: f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Uniform draw from the unit sphere in R^n (normalized Gaussian).
pub fn uniform_sphere<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let g = gaussian_vector(rng, n);
        let norm = g.norm();
        if norm > 1e-300 {
            return g / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(9, 2, Purpose::Init).random()).collect();
        let mut s = stream(9, 2, Purpose::Init);
        let b: Vec<u64> = (0..4).map(|_| s.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut other = stream(9, 3, Purpose::Init);
        let mut other_purpose = stream(9, 2, Purpose::Code);
        assert_ne!(b[0], other.random::<u64>());
        assert_ne!(b[0], other_purpose.random::<u64>());
    }

    #[test]
    fn sphere_draw_is_unit() {
        let mut rng = stream(1, 0, Purpose::Query);
        for n in 1..20 {
            let v = uniform_sphere(&mut rng, n);
            assert!((v.norm() - 1.0).abs() < 1e-14);
        }
    }
}
