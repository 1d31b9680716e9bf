//! Operators on the SPD manifold: the Stein weighted Fréchet mean, isometric
//! translation by orthogonal group actions, and SPD-preserving convolution.

use nalgebra::Cholesky;

use crate::error::{GeoError, Result};
use crate::spd::{eig_raw, stein_distance, sym_part, Mat, SpdMatrix};

/// Default relative tolerance of the wFM fixed-point iteration.
pub const WFM_TOL: f64 = 1e-9;
/// Default sweep cap of the wFM fixed-point iteration.
pub const WFM_MAX_ITER: usize = 200;
/// Default floor for SPD-by-construction parameterizations.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Convex combination weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(GeoError::param("empty weight vector"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(GeoError::param("weights must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(GeoError::param(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(weights))
    }

    /// Normalizes nonnegative weights to unit sum.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(GeoError::param("weights must be finite and nonnegative"));
        }
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(GeoError::param("weights sum to zero"));
        }
        Ok(WeightVector(raw.iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        WeightVector(vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub(crate) fn spd_inverse(m: &Mat) -> Result<Mat> {
    let chol = Cholesky::new(sym_part(m)).ok_or_else(|| GeoError::domain("inverse of a non-SPD matrix"))?;
    Ok(sym_part(&chol.inverse()))
}

/// Result of a wFM solve together with its convergence record.
#[derive(Clone, Debug)]
pub struct WfmSolution {
    pub mean: SpdMatrix,
    pub iterations: usize,
    pub residual: f64,
}

fn check_points(points: &[SpdMatrix], w: &WeightVector) -> Result<usize> {
    let first = points.first().ok_or_else(|| GeoError::param("wFM of an empty set"))?;
    if points.len() != w.len() {
        return Err(GeoError::dim(format!(
            "{} points but {} weights",
            points.len(),
            w.len()
        )));
    }
    let n = first.dim();
    if let Some(p) = points.iter().find(|p| p.dim() != n) {
        return Err(GeoError::dim(format!("wFM points of size {n} and {}", p.dim())));
    }
    Ok(n)
}

/// One sweep `F ← [Σ_n w_n ((X_n + F)/2)⁻¹]⁻¹`.
pub(crate) fn wfm_sweep(points: &[&Mat], w: &[f64], f: &Mat) -> Result<Mat> {
    let n = f.nrows();
    let mut acc = Mat::zeros(n, n);
    for (x, &wi) in points.iter().zip(w) {
        let mid = (*x + f) * 0.5;
        acc += spd_inverse(&mid)? * wi;
    }
    spd_inverse(&acc)
}

pub(crate) fn weighted_arithmetic_mean(points: &[&Mat], w: &[f64]) -> Mat {
    let n = points[0].nrows();
    let mut acc = Mat::zeros(n, n);
    for (x, &wi) in points.iter().zip(w) {
        acc += *x * wi;
    }
    acc
}

pub(crate) fn relative_change(new: &Mat, old: &Mat) -> f64 {
    (new - old).norm() / old.norm()
}

/// Weighted Fréchet mean under the Stein metric, with its convergence record.
///
/// Fixed-point iteration on the stationarity condition of
/// `Σ w_n d²(X_n, F)`, started at the weighted arithmetic mean. Stops when the
/// relative Frobenius change drops to `tol`; errors after `max_iter` sweeps.
pub fn stein_wfm_solve(
    points: &[SpdMatrix],
    w: &WeightVector,
    tol: f64,
    max_iter: usize,
) -> Result<WfmSolution> {
    check_points(points, w)?;
    if !(tol > 0.0) {
        return Err(GeoError::param("wFM tolerance must be positive"));
    }
    let mats: Vec<&Mat> = points.iter().map(|p| p.as_matrix()).collect();
    let mut f = weighted_arithmetic_mean(&mats, w.as_slice());
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = wfm_sweep(&mats, w.as_slice(), &f)?;
        residual = relative_change(&next, &f);
        f = next;
        if residual <= tol {
            return Ok(WfmSolution {
                mean: SpdMatrix::new_unchecked(f),
                iterations: it,
                residual,
            });
        }
    }
    Err(GeoError::Convergence {
        iterations: max_iter,
        residual,
    })
}

pub fn stein_wfm(points: &[SpdMatrix], w: &WeightVector, tol: f64, max_iter: usize) -> Result<SpdMatrix> {
    stein_wfm_solve(points, w, tol, max_iter).map(|s| s.mean)
}

/// Every iterate of the wFM fixed point, initializer first. Used to inspect
/// the objective along the trajectory.
pub fn stein_wfm_iterates(points: &[SpdMatrix], w: &WeightVector, sweeps: usize) -> Result<Vec<SpdMatrix>> {
    check_points(points, w)?;
    let mats: Vec<&Mat> = points.iter().map(|p| p.as_matrix()).collect();
    let mut f = weighted_arithmetic_mean(&mats, w.as_slice());
    let mut out = vec![SpdMatrix::new_unchecked(f.clone())];
    for _ in 0..sweeps {
        f = wfm_sweep(&mats, w.as_slice(), &f)?;
        out.push(SpdMatrix::new_unchecked(f.clone()));
    }
    Ok(out)
}

/// `Σ_n w_n d²(X_n, F)` under the Stein metric.
pub fn wfm_objective(points: &[SpdMatrix], w: &WeightVector, f: &SpdMatrix) -> Result<f64> {
    let n = check_points(points, w)?;
    if f.dim() != n {
        return Err(GeoError::dim("wFM candidate has the wrong size"));
    }
    let mut total = 0.0;
    for (x, &wi) in points.iter().zip(w.as_slice()) {
        let d = stein_distance(x, f)?;
        total += wi * d * d;
    }
    Ok(total)
}

/// Orthogonal matrix, `‖g gᵀ − I‖_F ≤ 1e-10`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalMatrix(Mat);

impl OrthogonalMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(GeoError::dim("orthogonal matrix must be square"));
        }
        let n = m.nrows();
        let err = (&m * m.transpose() - Mat::identity(n, n)).norm();
        if err > 1e-10 {
            return Err(GeoError::domain(format!("not orthogonal: ‖ggᵀ − I‖ = {err:e}")));
        }
        Ok(OrthogonalMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        OrthogonalMatrix(Mat::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.0
    }
}

pub(crate) fn cayley_raw(k: &Mat) -> Result<Mat> {
    let n = k.nrows();
    let eye = Mat::identity(n, n);
    let lhs = &eye - k * 0.5;
    let rhs = &eye + k * 0.5;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| GeoError::numeric("singular Cayley denominator"))
}

/// Cayley transform `(I − K/2)⁻¹ (I + K/2)` of a skew-symmetric `K`.
pub fn cayley(k: &Mat) -> Result<OrthogonalMatrix> {
    if k.nrows() != k.ncols() {
        return Err(GeoError::dim("Cayley transform of a non-square matrix"));
    }
    let skew_err = (k + k.transpose()).norm();
    if skew_err > 1e-10 {
        return Err(GeoError::domain(format!("Cayley input is not skew (‖K + Kᵀ‖ = {skew_err:e})")));
    }
    Ok(OrthogonalMatrix(cayley_raw(k)?))
}

/// `g(V) = cayley(WV − (WV)ᵀ)`; the identity when `W = 0`.
pub fn group_action_generator(w: &Mat, v: &SpdMatrix) -> Result<OrthogonalMatrix> {
    if w.nrows() != v.dim() || w.ncols() != v.dim() {
        return Err(GeoError::dim(format!(
            "generator {}x{} against a {}-dim point",
            w.nrows(),
            w.ncols(),
            v.dim()
        )));
    }
    let wv = w * v.as_matrix();
    cayley(&(&wv - wv.transpose()))
}

/// Isometric translation `g U gᵀ`.
pub fn translate(u: &SpdMatrix, g: &OrthogonalMatrix) -> Result<SpdMatrix> {
    if u.dim() != g.dim() {
        return Err(GeoError::dim("translate: dimension mismatch"));
    }
    let gm = g.as_matrix();
    Ok(SpdMatrix::new_unchecked(sym_part(&(gm * u.as_matrix() * gm.transpose()))))
}

/// Unconstrained factor `Z` of an SPD convolution kernel `H = ZᵀZ + εI`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernelFactor {
    z: Mat,
    eps: f64,
}

impl ConvKernelFactor {
    pub fn new(z: Mat, eps: f64) -> Result<Self> {
        let size = z.nrows();
        if size == 0 || size != z.ncols() || size % 2 == 0 {
            return Err(GeoError::param(format!(
                "kernel factor must be square with odd size, got {}x{}",
                z.nrows(),
                z.ncols()
            )));
        }
        if !(eps > 0.0) {
            return Err(GeoError::param("kernel floor must be positive"));
        }
        Ok(ConvKernelFactor { z, eps })
    }

    pub fn size(&self) -> usize {
        self.z.nrows()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn factor(&self) -> &Mat {
        &self.z
    }

    pub(crate) fn factor_mut(&mut self) -> &mut Mat {
        &mut self.z
    }

    /// `H = ZᵀZ + εI`.
    pub fn kernel(&self) -> SpdMatrix {
        let t = self.size();
        SpdMatrix::new_unchecked(sym_part(&(self.z.transpose() * &self.z + Mat::identity(t, t) * self.eps)))
    }
}

/// Valid 2-D cross-correlation `O_ij = Σ_uv H_uv X_{i+u, j+v}`.
pub(crate) fn conv2d_valid(x: &Mat, h: &Mat) -> Mat {
    let n = x.nrows();
    let t = h.nrows();
    let m = n + 1 - t;
    Mat::from_fn(m, m, |i, j| {
        let mut acc = 0.0;
        for u in 0..t {
            for v in 0..t {
                acc += h[(u, v)] * x[(i + u, j + v)];
            }
        }
        acc
    })
}

/// SPD convolution with kernel `ZᵀZ + εI`, stride 1, no padding.
/// Output size is `N − θ + 1`.
pub fn spd_conv(x: &SpdMatrix, factor: &ConvKernelFactor) -> Result<SpdMatrix> {
    spd_conv_multi(std::slice::from_ref(x), std::slice::from_ref(factor))
}

/// Multi-channel SPD convolution: sum of per-channel convolutions.
pub fn spd_conv_multi(channels: &[SpdMatrix], factors: &[ConvKernelFactor]) -> Result<SpdMatrix> {
    if channels.is_empty() || channels.len() != factors.len() {
        return Err(GeoError::dim("one kernel factor per input channel required"));
    }
    let n = channels[0].dim();
    let mut acc: Option<Mat> = None;
    for (x, f) in channels.iter().zip(factors) {
        if x.dim() != n {
            return Err(GeoError::dim("channels differ in size"));
        }
        if f.size() > n {
            return Err(GeoError::dim(format!("kernel {} larger than input {n}", f.size())));
        }
        if f.size() != factors[0].size() {
            return Err(GeoError::dim("kernels differ in size"));
        }
        let o = conv2d_valid(x.as_matrix(), f.kernel().as_matrix());
        acc = Some(match acc {
            None => o,
            Some(a) => a + o,
        });
    }
    Ok(SpdMatrix::new_unchecked(sym_part(&acc.expect("nonempty"))))
}

/// Reference SPD convolution built from the banded-matrix congruence form
/// `Σ_i P_{z_i} X P_{z_i}ᵀ`, where `H = Σ_i z_i z_iᵀ` comes from an
/// eigendecomposition of `H`. Independent of the direct sliding-window sum.
pub fn spd_conv_oracle(x: &SpdMatrix, h: &SpdMatrix) -> Result<SpdMatrix> {
    let n = x.dim();
    let t = h.dim();
    if t > n {
        return Err(GeoError::dim(format!("kernel {t} larger than input {n}")));
    }
    let m = n + 1 - t;
    let eig = eig_raw(h.as_matrix())?;
    let mut out = Mat::zeros(m, m);
    for k in 0..t {
        let lambda = eig.values[k];
        if lambda <= 0.0 {
            return Err(GeoError::domain("convolution kernel is not positive definite"));
        }
        let z = eig.vectors.column(k) * lambda.sqrt();
        let mut p = Mat::zeros(m, n);
        for row in 0..m {
            for u in 0..t {
                p[(row, row + u)] = z[u];
            }
        }
        out += &p * x.as_matrix() * p.transpose();
    }
    Ok(SpdMatrix::new_unchecked(sym_part(&out)))
}
