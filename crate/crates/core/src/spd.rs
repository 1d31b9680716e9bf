//! Dense symmetric positive-definite matrices and the linear algebra the rest
//! of the crate is built on: validation, eigendecomposition, matrix exp/log,
//! Cholesky log-determinants, the Stein distance, padding and normalization.
//!
//! Everything here is a pure function over immutable values.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{GeoError, Result};

/// Dense real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;

/// Relative asymmetry accepted by the symmetric constructors.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Radicands of the Stein distance in `[-STEIN_GUARD, 0)` are rounding noise.
pub const STEIN_GUARD: f64 = 1e-12;

/// Eigenvalue floor reported by diagnostics (validation itself uses Cholesky).
pub const EIGEN_FLOOR: f64 = 1e-12;

fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(GeoError::dim(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(GeoError::dim(format!("{what}: empty matrix")));
    }
    Ok(())
}

fn max_asymmetry(m: &Mat) -> (f64, f64) {
    let n = m.nrows();
    let mut asym = 0.0f64;
    let mut scale = 1.0f64;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(m[(i, j)].abs());
            if j > i {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
    }
    (asym, scale)
}

fn check_symmetric(m: &Mat, what: &str) -> Result<()> {
    check_square(m, what)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::domain(format!("{what}: non-finite entry")));
    }
    let (asym, scale) = max_asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(GeoError::domain(format!(
            "{what}: asymmetry {asym:e} exceeds tolerance"
        )));
    }
    Ok(())
}

/// `(M + Mᵀ) / 2` without any validation beyond squareness.
pub(crate) fn sym_part(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Symmetric (not necessarily definite) matrix, e.g. a tangent vector at the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        check_symmetric(&m, "SymMatrix")?;
        Ok(SymMatrix(sym_part(&m)))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Mat::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(Mat::from_diagonal(&DVector::from_row_slice(d)))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(GeoError::dim(format!("expected {} entries, got {}", n * n, data.len())));
        }
        Self::new(Mat::from_row_slice(n, n, data))
    }

    pub(crate) fn new_unchecked(m: Mat) -> Self {
        SymMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

/// Symmetric positive-definite matrix. Construction validates symmetry and
/// definiteness (Cholesky), so every value of this type is on the manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(Mat);

impl SpdMatrix {
    /// Validates `m` (symmetry within tolerance, then Cholesky of its symmetric part).
    pub fn new(m: Mat) -> Result<Self> {
        check_symmetric(&m, "SpdMatrix")?;
        let s = sym_part(&m);
        if Cholesky::new(s.clone()).is_none() {
            return Err(GeoError::domain("matrix is not positive definite (Cholesky failed)"));
        }
        Ok(SpdMatrix(s))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(GeoError::dim(format!("expected {} entries, got {}", n * n, data.len())));
        }
        Self::new(Mat::from_row_slice(n, n, data))
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(Mat::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(Mat::from_diagonal(&DVector::from_row_slice(d)))
    }

    /// Wraps a matrix already known to be SPD (results of SPD-preserving ops).
    pub(crate) fn new_unchecked(m: Mat) -> Self {
        SpdMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Smallest eigenvalue; diagnostics only.
    pub fn min_eigenvalue(&self) -> f64 {
        eig_raw(&self.0).map(|e| e.values[e.values.len() - 1]).unwrap_or(f64::NAN)
    }
}

impl AsRef<Mat> for SpdMatrix {
    fn as_ref(&self) -> &Mat {
        &self.0
    }
}

impl AsRef<Mat> for SymMatrix {
    fn as_ref(&self) -> &Mat {
        &self.0
    }
}

/// True when `m` admits a Cholesky factorization after symmetrization.
pub fn is_spd(m: &Mat) -> bool {
    m.nrows() == m.ncols()
        && m.iter().all(|v| v.is_finite())
        && Cholesky::new(sym_part(m)).is_some()
}

/// Eigendecomposition of a symmetric matrix: eigenvalues in descending order,
/// orthonormal eigenvectors as the matching columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub values: DVector<f64>,
    pub vectors: Mat,
}

impl EigenPair {
    /// `Φ diag(f(λ)) Φᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let scaled = DVector::from_iterator(self.values.len(), self.values.iter().map(|&l| f(l)));
        spectral_compose(&self.vectors, &scaled)
    }

    pub fn reconstruct(&self) -> Mat {
        self.map(|l| l)
    }
}

pub(crate) fn spectral_compose(vectors: &Mat, diag: &DVector<f64>) -> Mat {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= diag[j];
    }
    sym_part(&(scaled * vectors.transpose()))
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Result<SymMatrix> {
    check_square(m, "symmetrize")?;
    Ok(SymMatrix(sym_part(m)))
}

/// Householder reduction of the symmetric `n×n` matrix in `v` (row-major) to
/// tridiagonal form. On return `v` holds the accumulated orthogonal transform,
/// `d` the diagonal and `e` the subdiagonal (in `e[1..]`).
fn tridiagonalize(v: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on the tridiagonal `(d, e)`, accumulating rotations
/// into `v`. Fails when more than `cap` sweeps are needed.
fn tridiagonal_ql(v: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64], cap: usize) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let mut sweeps = 0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                sweeps += 1;
                if sweeps > cap {
                    return Err(GeoError::numeric(format!("eigensolver exceeded {cap} sweeps")));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Eigendecomposition of the symmetric matrix `m` (only its symmetric part is used).
///
/// Householder tridiagonalization followed by implicit QL, capped at `64·N`
/// sweeps. Columns are sign-normalized so that the entry of largest magnitude
/// is positive (first such entry on ties).
pub(crate) fn eig_raw(m: &Mat) -> Result<EigenPair> {
    let n = m.nrows();
    if n == 0 || n != m.ncols() {
        return Err(GeoError::dim("eigendecomposition of a non-square matrix"));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(GeoError::domain("eigendecomposition of a non-finite matrix"));
    }
    let s = sym_part(m);
    let mut v: Vec<f64> = (0..n * n).map(|k| s[(k / n, k % n)]).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, n, &mut d, &mut e);
    tridiagonal_ql(&mut v, n, &mut d, &mut e, 64 * n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap_or(std::cmp::Ordering::Equal));
    let values = DVector::from_iterator(n, order.iter().map(|&i| d[i]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 1..n {
            if v[i * n + src].abs() > v[pivot * n + src].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * v[i * n + src];
        }
    }
    Ok(EigenPair { values, vectors })
}

pub fn sym_eig(s: &SymMatrix) -> Result<EigenPair> {
    eig_raw(&s.0)
}

/// Matrix exponential of a symmetric matrix; always SPD.
pub fn spd_exp(s: &SymMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    Ok(SpdMatrix(eig.map(f64::exp)))
}

/// Principal matrix logarithm `Φ log(Λ) Φᵀ`.
pub fn spd_log(p: &SpdMatrix) -> Result<SymMatrix> {
    let eig = eig_raw(&p.0)?;
    let min = eig.values.min();
    if min <= 0.0 {
        return Err(GeoError::domain(format!(
            "matrix logarithm of a matrix with eigenvalue {min:e}"
        )));
    }
    Ok(SymMatrix(eig.map(f64::ln)))
}

fn cholesky_log_det(m: &Mat) -> Result<f64> {
    let chol = Cholesky::new(sym_part(m))
        .ok_or_else(|| GeoError::domain("log-determinant of a non-SPD matrix"))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `log det P` as twice the sum of the logs of the Cholesky diagonal.
pub fn log_det(p: &SpdMatrix) -> Result<f64> {
    cholesky_log_det(&p.0)
}

/// Stein distance `sqrt(log det((X+Y)/2) − ½ log det(XY))`.
pub fn stein_distance(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(GeoError::dim(format!(
            "stein_distance: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let mid = (&x.0 + &y.0) * 0.5;
    let radicand = cholesky_log_det(&mid)? - 0.5 * (log_det(x)? + log_det(y)?);
    if radicand >= 0.0 {
        Ok(radicand.sqrt())
    } else if radicand >= -STEIN_GUARD {
        Ok(0.0)
    } else {
        Err(GeoError::domain(format!("negative Stein radicand {radicand:e}")))
    }
}

/// Embeds `x` centrally in an `(N+2p)`-square matrix whose border is zero off
/// the diagonal and `rho` on it. The result is block diagonal, hence SPD.
pub fn pad_spd(x: &SpdMatrix, width: usize, rho: f64) -> Result<SpdMatrix> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(GeoError::param(format!("pad diagonal must be positive, got {rho}")));
    }
    Ok(SpdMatrix(pad_raw(&x.0, width, rho)))
}

pub(crate) fn pad_raw(x: &Mat, width: usize, rho: f64) -> Mat {
    if width == 0 {
        return x.clone();
    }
    let n = x.nrows();
    let m = n + 2 * width;
    let mut out = Mat::zeros(m, m);
    for i in 0..m {
        if i < width || i >= width + n {
            out[(i, i)] = rho;
        }
    }
    out.view_mut((width, width), (n, n)).copy_from(x);
    out
}

/// `X / ‖X‖_F`.
pub fn frobenius_normalize(x: &SpdMatrix) -> SpdMatrix {
    let norm = x.0.norm();
    assert!(norm > 0.0, "SPD matrix with zero Frobenius norm");
    SpdMatrix(&x.0 / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(n: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(n, n, v)
    }

    #[test]
    fn symmetrize_examples() {
        assert_eq!(symmetrize(&m(2, &[1., 2., 0., 1.])).unwrap().as_matrix(), &m(2, &[1., 1., 1., 1.]));
        let s = m(2, &[3., 1., 1., 2.]);
        assert_eq!(symmetrize(&s).unwrap().as_matrix(), &s);
        assert_eq!(symmetrize(&m(2, &[0., 4., -4., 0.])).unwrap().as_matrix(), &Mat::zeros(2, 2));
        assert!(matches!(symmetrize(&Mat::zeros(2, 3)), Err(GeoError::Dimension(_))));
    }

    #[test]
    fn eig_examples() {
        let e = sym_eig(&SymMatrix::new(Mat::identity(2, 2)).unwrap()).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0]);
        assert_eq!(e.vectors, Mat::identity(2, 2));

        let e = sym_eig(&SymMatrix::from_diagonal(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 1.0]);

        let e = sym_eig(&SymMatrix::from_row_slice(2, &[2., 1., 1., 2.]).unwrap()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        for j in 0..2 {
            let col = e.vectors.column(j);
            let pivot = col.iamax();
            assert!(col[pivot] > 0.0);
        }
    }

    #[test]
    fn eig_invariants_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 3, 7, 16] {
            let s = sample::sym(&mut rng, n, 2.0);
            let e = sym_eig(&s).unwrap();
            let ortho = (e.vectors.transpose() * &e.vectors - Mat::identity(n, n)).norm();
            assert!(ortho <= 1e-10);
            let rec = (e.reconstruct() - s.as_matrix()).norm();
            assert!(rec <= 1e-10 * s.as_matrix().norm().max(1e-300));
            assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn exp_log_examples() {
        assert_eq!(spd_exp(&SymMatrix::zeros(3)).unwrap().as_matrix(), &Mat::identity(3, 3));
        let e = spd_exp(&SymMatrix::from_diagonal(&[1.0, 2.0])).unwrap();
        let expect = m(2, &[1f64.exp(), 0., 0., 2f64.exp()]);
        assert!((e.as_matrix() - expect).norm() < 1e-14);

        assert_eq!(spd_log(&SpdMatrix::identity(3)).unwrap().as_matrix(), &Mat::zeros(3, 3));
        let l = spd_log(&SpdMatrix::from_diagonal(&[1f64.exp(), 2f64.exp()]).unwrap()).unwrap();
        assert!((l.as_matrix() - m(2, &[1., 0., 0., 2.])).norm() < 1e-14);
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(log_det(&SpdMatrix::identity(4)).unwrap(), 0.0);
        let v = log_det(&SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap()).unwrap();
        assert!((v - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn stein_examples() {
        let x = SpdMatrix::from_row_slice(2, &[2., 1., 1., 2.]).unwrap();
        assert_eq!(stein_distance(&x, &x).unwrap(), 0.0);
        let a = SpdMatrix::from_diagonal(&[1.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[2.0]).unwrap();
        let d = stein_distance(&a, &b).unwrap();
        assert!((d - (1.5f64.ln() - 0.5 * 2f64.ln()).sqrt()).abs() < 1e-15);
        assert!((d - 0.242675).abs() < 1e-6);
        assert!(matches!(
            stein_distance(&a, &SpdMatrix::identity(2)),
            Err(GeoError::Dimension(_))
        ));
    }

    #[test]
    fn pad_examples() {
        let x = SpdMatrix::from_row_slice(2, &[2., 1., 1., 2.]).unwrap();
        assert_eq!(pad_spd(&x, 0, 0.5).unwrap(), x);
        let p = pad_spd(&x, 1, 0.01).unwrap();
        assert_eq!(p.dim(), 4);
        let mut ev: Vec<f64> = eig_raw(p.as_matrix()).unwrap().values.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in ev.iter().zip([0.01, 0.01, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(matches!(pad_spd(&x, 1, 0.0), Err(GeoError::Parameter(_))));
        assert!(matches!(pad_spd(&x, 1, -1.0), Err(GeoError::Parameter(_))));
    }

    #[test]
    fn frobenius_examples() {
        let n = frobenius_normalize(&SpdMatrix::identity(2));
        assert!((n.as_matrix() - Mat::identity(2, 2) / 2f64.sqrt()).norm() < 1e-15);
        let again = frobenius_normalize(&n);
        assert!((again.as_matrix() - n.as_matrix()).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_spd() {
        assert!(SpdMatrix::from_row_slice(2, &[1., 2., 2., 1.]).is_err());
        assert!(SpdMatrix::from_row_slice(2, &[1., 0.5, 0.0, 1.]).is_err());
        assert!(SymMatrix::from_row_slice(2, &[1., 0.5, 0.0, 1.]).is_err());
        assert!(SpdMatrix::new(Mat::zeros(2, 3)).is_err());
    }
}
