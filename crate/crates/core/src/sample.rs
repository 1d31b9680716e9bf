//! Seeded random generators for manifold-valued test data.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::spd::{spectral_compose, Mat, SpdMatrix, SymMatrix};

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the sign fix).
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let qr = gaussian(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

/// Symmetric matrix with entries uniform in `[-bound, bound]`.
pub fn sym<R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> SymMatrix {
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-bound..=bound);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymMatrix::new_unchecked(m)
}

/// Skew-symmetric matrix with Gaussian entries scaled by `scale`.
pub fn skew<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Mat {
    let g = gaussian(rng, n, n) * scale;
    (&g - g.transpose()) * 0.5
}

/// SPD matrix with a Haar-random eigenbasis and log-eigenvalues uniform in
/// `[-spread, spread]`.
pub fn spd_with_spread<R: Rng + ?Sized>(rng: &mut R, n: usize, spread: f64) -> SpdMatrix {
    let q = orthogonal(rng, n);
    let d = DVector::from_fn(n, |_, _| rng.gen_range(-spread..=spread).exp());
    SpdMatrix::new_unchecked(spectral_compose(&q, &d))
}

/// SPD matrix with eigenvalues in roughly `[0.2, 5]`.
pub fn spd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SpdMatrix {
    spd_with_spread(rng, n, 1.6)
}
