//! Reverse-mode differentiation over dense matrix primitives.
//!
//! A [`GradTape`] records every primitive applied to [`Var`] handles together
//! with the forward value. [`GradTape::backward`] then walks the tape in
//! reverse and accumulates adjoints using one rule per primitive. Scalars are
//! `1×1` matrices and vectors are single columns.
//!
//! Spectral functions (`log`, `exp` of a symmetric matrix) use the
//! Daleckii–Krein form of the eigendecomposition adjoint,
//! `Ā = Φ (L ∘ Φᵀ sym(Ȳ) Φ) Φᵀ`, where `L` holds the divided differences
//! `(f(λ_i) − f(λ_j)) / (λ_i − λ_j)` and `f'(λ_i)` on the diagonal. The
//! divided differences are evaluated in a cancellation-free form, so
//! repeated eigenvalues need no special casing.

use nalgebra::DVector;

use crate::error::{GeoError, Result};
use crate::manifold::{conv2d_valid, spd_inverse};
use crate::spd::{eig_raw, pad_raw, spectral_compose, sym_part, EigenPair, Mat};

/// Handle to a node on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Spectral function applied through the eigendecomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spectral {
    Log,
    Exp,
}

impl Spectral {
    fn apply(self, x: f64) -> f64 {
        match self {
            Spectral::Log => x.ln(),
            Spectral::Exp => x.exp(),
        }
    }

    /// `(f(a) − f(b)) / (a − b)`, or `f'(a)` when `a == b`.
    fn divided_difference(self, a: f64, b: f64) -> f64 {
        let d = a - b;
        match self {
            Spectral::Log => {
                if d == 0.0 {
                    1.0 / a
                } else {
                    (d / b).ln_1p() / d
                }
            }
            Spectral::Exp => {
                if d == 0.0 {
                    a.exp()
                } else {
                    b.exp() * d.exp_m1() / d
                }
            }
        }
    }
}

/// Scalar elementwise function on a `1×1` node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarFn {
    Exp,
    /// `(eˣ − 1) / x`, continuous at 0.
    Phi1,
    Recip,
}

pub(crate) fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0
    } else {
        x.exp_m1() / x
    }
}

fn phi1_prime(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

impl ScalarFn {
    fn apply(self, x: f64) -> f64 {
        match self {
            ScalarFn::Exp => x.exp(),
            ScalarFn::Phi1 => phi1(x),
            ScalarFn::Recip => 1.0 / x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            ScalarFn::Exp => x.exp(),
            ScalarFn::Phi1 => phi1_prime(x),
            ScalarFn::Recip => -1.0 / (x * x),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Scale(usize, usize),
    ScaleConst(usize, f64),
    AddIdentity(usize, f64),
    Hadamard(usize, usize),
    SpdInverse(usize),
    Inverse(usize),
    Symmetrize(usize),
    Spectral(usize, Spectral),
    ExpEntries(usize),
    FrobNorm(usize),
    Scalar(usize, ScalarFn),
    MaxEntry(usize),
    Pad { input: usize, width: usize, rho: f64 },
    Crop { input: usize, offset: usize, size: usize },
    Conv { input: usize, kernel: usize },
    Entry { input: usize, row: usize, col: usize },
    Slice { input: usize, start: usize, len: usize },
    Softmax(usize),
    VecIso(usize),
    LogDet(usize),
    SpdGuard { input: usize, eps: f64 },
    SoftmaxXent { logits: usize, label: usize, floor: f64 },
}

/// Forward by-products reused by the adjoint rules.
#[derive(Clone, Debug)]
enum Aux {
    None,
    Eigen(EigenPair),
    ArgMax(usize, usize),
    /// Unit eigenvector of the minimum eigenvalue when the guard fired.
    Guard(Option<DVector<f64>>),
    Inverse(Mat),
    Probs(DVector<f64>, bool),
}

#[derive(Clone, Debug)]
struct Node {
    value: Mat,
    op: Op,
    aux: Aux,
}

/// Recording of a differentiable computation.
#[derive(Clone, Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    guard_checks: usize,
    guard_fires: usize,
}

/// Adjoints indexed by [`Var`]; `None` means no path to the output.
#[derive(Clone, Debug)]
pub struct Adjoints(Vec<Option<Mat>>);

impl Adjoints {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.0[v.0].as_ref()
    }

    /// Adjoint of `v`, zeros of the given shape when unreachable.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Mat {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(rows, cols))
    }
}

fn check_same_shape(a: &Mat, b: &Mat, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(GeoError::dim(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_scalar(a: &Mat, what: &str) -> Result<()> {
    if a.shape() != (1, 1) {
        return Err(GeoError::dim(format!("{what}: expected 1x1, got {:?}", a.shape())));
    }
    Ok(())
}

fn argmax(m: &Mat) -> (usize, usize) {
    let mut best = (0, 0);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            // column-major scan; strict comparison keeps the first maximum
            if m[(i, j)] > m[best] {
                best = (i, j);
            }
        }
    }
    best
}

fn vec_iso(m: &Mat) -> Mat {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    Mat::from_column_slice(out.len(), 1, &out)
}

fn softmax(x: &[f64]) -> DVector<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    DVector::from_iterator(e.len(), e.into_iter().map(|v| v / sum))
}

/// Returns the forward value plus auxiliary data for one primitive.
fn eval<'a>(op: &Op, v: impl Fn(usize) -> &'a Mat) -> Result<(Mat, Aux)> {
    Ok(match *op {
        Op::Leaf => unreachable!("leaves are not re-evaluated"),
        Op::Add(a, b) => {
            check_same_shape(v(a), v(b), "add")?;
            (v(a) + v(b), Aux::None)
        }
        Op::Sub(a, b) => {
            check_same_shape(v(a), v(b), "sub")?;
            (v(a) - v(b), Aux::None)
        }
        Op::MatMul(a, b) => {
            if v(a).ncols() != v(b).nrows() {
                return Err(GeoError::dim(format!("matmul: {:?} x {:?}", v(a).shape(), v(b).shape())));
            }
            (v(a) * v(b), Aux::None)
        }
        Op::Transpose(a) => (v(a).transpose(), Aux::None),
        Op::Scale(a, s) => {
            check_scalar(v(s), "scale")?;
            (v(a) * v(s)[(0, 0)], Aux::None)
        }
        Op::ScaleConst(a, c) => (v(a) * c, Aux::None),
        Op::AddIdentity(a, c) => {
            let n = v(a).nrows();
            (v(a) + Mat::identity(n, n) * c, Aux::None)
        }
        Op::Hadamard(a, b) => {
            check_same_shape(v(a), v(b), "hadamard")?;
            (v(a).component_mul(v(b)), Aux::None)
        }
        Op::SpdInverse(a) => {
            let inv = spd_inverse(v(a))?;
            (inv, Aux::None)
        }
        Op::Inverse(a) => {
            let inv = v(a)
                .clone()
                .try_inverse()
                .ok_or_else(|| GeoError::numeric("inverse of a singular matrix"))?;
            (inv, Aux::None)
        }
        Op::Symmetrize(a) => (sym_part(v(a)), Aux::None),
        Op::Spectral(a, f) => {
            let eig = eig_raw(v(a))?;
            if f == Spectral::Log && eig.values.min() <= 0.0 {
                return Err(GeoError::domain("matrix logarithm of a non-SPD matrix"));
            }
            let fx = DVector::from_iterator(eig.values.len(), eig.values.iter().map(|&l| f.apply(l)));
            (spectral_compose(&eig.vectors, &fx), Aux::Eigen(eig))
        }
        Op::ExpEntries(a) => (v(a).map(f64::exp), Aux::None),
        Op::FrobNorm(a) => (Mat::from_element(1, 1, v(a).norm()), Aux::None),
        Op::Scalar(a, f) => {
            check_scalar(v(a), "scalar fn")?;
            (Mat::from_element(1, 1, f.apply(v(a)[(0, 0)])), Aux::None)
        }
        Op::MaxEntry(a) => {
            let at = argmax(v(a));
            (Mat::from_element(1, 1, v(a)[at]), Aux::ArgMax(at.0, at.1))
        }
        Op::Pad { input, width, rho } => (pad_raw(v(input), width, rho), Aux::None),
        Op::Crop { input, offset, size } => {
            if offset + size > v(input).nrows() || offset + size > v(input).ncols() {
                return Err(GeoError::dim("crop outside the matrix"));
            }
            (v(input).view((offset, offset), (size, size)).into_owned(), Aux::None)
        }
        Op::Conv { input, kernel } => {
            if v(kernel).nrows() > v(input).nrows() {
                return Err(GeoError::dim("convolution kernel larger than input"));
            }
            (conv2d_valid(v(input), v(kernel)), Aux::None)
        }
        Op::Entry { input, row, col } => (Mat::from_element(1, 1, v(input)[(row, col)]), Aux::None),
        Op::Slice { input, start, len } => {
            if start + len > v(input).nrows() {
                return Err(GeoError::dim("slice outside the vector"));
            }
            (v(input).rows(start, len).into_owned(), Aux::None)
        }
        Op::Softmax(a) => {
            let p = softmax(v(a).as_slice());
            (Mat::from_column_slice(p.len(), 1, p.as_slice()), Aux::None)
        }
        Op::VecIso(a) => (vec_iso(v(a)), Aux::None),
        Op::LogDet(a) => {
            let m = sym_part(v(a));
            let chol = nalgebra::Cholesky::new(m).ok_or_else(|| GeoError::domain("log-det of a non-SPD matrix"))?;
            let ld = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            (Mat::from_element(1, 1, ld), Aux::Inverse(sym_part(&chol.inverse())))
        }
        Op::SpdGuard { input, eps } => {
            let m = sym_part(v(input));
            if nalgebra::Cholesky::new(m.clone()).is_some() {
                (m, Aux::Guard(None))
            } else {
                let eig = eig_raw(&m)?;
                let n = m.nrows();
                let lmin = eig.values[n - 1];
                let shift = lmin.abs() + eps;
                let out = &m + Mat::identity(n, n) * shift;
                (out, Aux::Guard(Some(eig.vectors.column(n - 1).into_owned())))
            }
        }
        Op::SoftmaxXent { logits, label, floor } => {
            let z = v(logits);
            if z.ncols() != 1 || label >= z.nrows() {
                return Err(GeoError::dim("cross-entropy: label outside logits"));
            }
            let p = softmax(z.as_slice());
            let clamped = p[label] < floor;
            let loss = -(p[label].max(floor)).ln();
            (Mat::from_element(1, 1, loss), Aux::Probs(p, clamped))
        }
    })
}

fn inputs_of(op: &Op) -> Vec<usize> {
    match *op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::MatMul(a, b) | Op::Scale(a, b) | Op::Hadamard(a, b) => vec![a, b],
        Op::Conv { input, kernel } => vec![input, kernel],
        Op::Transpose(a)
        | Op::ScaleConst(a, _)
        | Op::AddIdentity(a, _)
        | Op::SpdInverse(a)
        | Op::Inverse(a)
        | Op::Symmetrize(a)
        | Op::Spectral(a, _)
        | Op::ExpEntries(a)
        | Op::FrobNorm(a)
        | Op::Scalar(a, _)
        | Op::MaxEntry(a)
        | Op::Softmax(a)
        | Op::VecIso(a)
        | Op::LogDet(a) => vec![a],
        Op::Pad { input, .. }
        | Op::Crop { input, .. }
        | Op::Entry { input, .. }
        | Op::Slice { input, .. }
        | Op::SpdGuard { input, .. } => vec![input],
        Op::SoftmaxXent { logits, .. } => vec![logits],
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    /// `(checked, fired)` counts of the SPD guard on this tape.
    pub fn guard_stats(&self) -> (usize, usize) {
        (self.guard_checks, self.guard_fires)
    }

    pub fn leaf(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, aux: Aux::None });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Mat::from_element(1, 1, value))
    }

    fn apply(&mut self, op: Op) -> Result<Var> {
        let (value, aux) = {
            let nodes = &self.nodes;
            eval(&op, |i| &nodes[i].value)?
        };
        if let Op::SpdGuard { .. } = op {
            self.guard_checks += 1;
            if let Aux::Guard(Some(_)) = aux {
                self.guard_fires += 1;
            }
        }
        self.nodes.push(Node { value, op, aux });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Sub(a.0, b.0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::MatMul(a.0, b.0))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Transpose(a.0))
    }

    /// `s · A` for a `1×1` node `s`.
    pub fn scale(&mut self, a: Var, s: Var) -> Result<Var> {
        self.apply(Op::Scale(a.0, s.0))
    }

    pub fn scale_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Op::ScaleConst(a.0, c))
    }

    /// `A + c·I`.
    pub fn add_identity(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Op::AddIdentity(a.0, c))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Hadamard(a.0, b.0))
    }

    /// Inverse of an SPD matrix (Cholesky).
    pub fn spd_inverse(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::SpdInverse(a.0))
    }

    /// General inverse (LU).
    pub fn inverse(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Inverse(a.0))
    }

    pub fn symmetrize(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Symmetrize(a.0))
    }

    pub fn spectral(&mut self, a: Var, f: Spectral) -> Result<Var> {
        self.apply(Op::Spectral(a.0, f))
    }

    pub fn exp_entries(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::ExpEntries(a.0))
    }

    pub fn frob_norm(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::FrobNorm(a.0))
    }

    pub fn scalar_fn(&mut self, a: Var, f: ScalarFn) -> Result<Var> {
        self.apply(Op::Scalar(a.0, f))
    }

    pub fn max_entry(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::MaxEntry(a.0))
    }

    pub fn pad(&mut self, a: Var, width: usize, rho: f64) -> Result<Var> {
        self.apply(Op::Pad { input: a.0, width, rho })
    }

    /// Central `size×size` block starting at `(offset, offset)`.
    pub fn crop(&mut self, a: Var, offset: usize, size: usize) -> Result<Var> {
        self.apply(Op::Crop { input: a.0, offset, size })
    }

    pub fn conv(&mut self, input: Var, kernel: Var) -> Result<Var> {
        self.apply(Op::Conv { input: input.0, kernel: kernel.0 })
    }

    pub fn entry(&mut self, a: Var, row: usize, col: usize) -> Result<Var> {
        if row >= self.value(a).nrows() || col >= self.value(a).ncols() {
            return Err(GeoError::dim("entry outside the matrix"));
        }
        self.apply(Op::Entry { input: a.0, row, col })
    }

    /// Rows `start..start+len` of a column vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(Op::Slice { input: a.0, start, len })
    }

    /// Softmax of a column vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Softmax(a.0))
    }

    /// Upper-triangle vectorization with off-diagonals scaled by √2.
    pub fn vec_iso(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::VecIso(a.0))
    }

    pub fn log_det(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::LogDet(a.0))
    }

    /// Returns `A` when it is SPD, otherwise `A + (|λ_min| + eps)·I`.
    pub fn spd_guard(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.apply(Op::SpdGuard { input: a.0, eps })
    }

    /// `−log max(softmax(z)[label], floor)`.
    pub fn softmax_xent(&mut self, logits: Var, label: usize, floor: f64) -> Result<Var> {
        self.apply(Op::SoftmaxXent { logits: logits.0, label, floor })
    }

    /// Re-evaluates every node from the leaf values.
    pub fn replay(&self) -> Result<Vec<Mat>> {
        let mut vals: Vec<Mat> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => eval(op, |i| &vals[i])?.0,
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Reverse sweep from the scalar node `output`.
    pub fn backward(&self, output: Var) -> Adjoints {
        let mut adj: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(Mat::from_element(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            for (input, contrib) in self.local_adjoints(node, &g) {
                match &mut adj[input] {
                    Some(acc) => *acc += contrib,
                    slot @ None => *slot = Some(contrib),
                }
            }
            adj[idx] = Some(g);
        }
        Adjoints(adj)
    }

    fn local_adjoints(&self, node: &Node, g: &Mat) -> Vec<(usize, Mat)> {
        let val = |i: usize| &self.nodes[i].value;
        match (&node.op, &node.aux) {
            (Op::Leaf, _) => vec![],
            (&Op::Add(a, b), _) => vec![(a, g.clone()), (b, g.clone())],
            (&Op::Sub(a, b), _) => vec![(a, g.clone()), (b, -g)],
            (&Op::MatMul(a, b), _) => vec![(a, g * val(b).transpose()), (b, val(a).transpose() * g)],
            (&Op::Transpose(a), _) => vec![(a, g.transpose())],
            (&Op::Scale(a, s), _) => {
                let sv = val(s)[(0, 0)];
                vec![(a, g * sv), (s, Mat::from_element(1, 1, g.dot(val(a))))]
            }
            (&Op::ScaleConst(a, c), _) => vec![(a, g * c)],
            (&Op::AddIdentity(a, _), _) => vec![(a, g.clone())],
            (&Op::Hadamard(a, b), _) => vec![(a, g.component_mul(val(b))), (b, g.component_mul(val(a)))],
            (&Op::SpdInverse(a), _) | (&Op::Inverse(a), _) => {
                let y = &node.value;
                vec![(a, -(y.transpose() * g * y.transpose()))]
            }
            (&Op::Symmetrize(a), _) => vec![(a, sym_part(g))],
            (&Op::Spectral(a, f), Aux::Eigen(eig)) => {
                let phi = &eig.vectors;
                let lam = &eig.values;
                let n = lam.len();
                let mut inner = phi.transpose() * sym_part(g) * phi;
                for i in 0..n {
                    for j in 0..n {
                        inner[(i, j)] *= f.divided_difference(lam[i], lam[j]);
                    }
                }
                vec![(a, sym_part(&(phi * inner * phi.transpose())))]
            }
            (&Op::ExpEntries(a), _) => vec![(a, g.component_mul(&node.value))],
            (&Op::FrobNorm(a), _) => {
                let norm = node.value[(0, 0)];
                if norm > 0.0 {
                    vec![(a, val(a) * (g[(0, 0)] / norm))]
                } else {
                    vec![]
                }
            }
            (&Op::Scalar(a, f), _) => {
                let x = val(a)[(0, 0)];
                vec![(a, Mat::from_element(1, 1, g[(0, 0)] * f.derivative(x)))]
            }
            (&Op::MaxEntry(a), &Aux::ArgMax(r, c)) => {
                let mut out = Mat::zeros(val(a).nrows(), val(a).ncols());
                out[(r, c)] = g[(0, 0)];
                vec![(a, out)]
            }
            (&Op::Pad { input, width, .. }, _) => {
                let n = val(input).nrows();
                vec![(input, g.view((width, width), (n, n)).into_owned())]
            }
            (&Op::Crop { input, offset, size }, _) => {
                let src = val(input);
                let mut out = Mat::zeros(src.nrows(), src.ncols());
                out.view_mut((offset, offset), (size, size)).copy_from(g);
                vec![(input, out)]
            }
            (&Op::Conv { input, kernel }, _) => {
                let x = val(input);
                let h = val(kernel);
                let t = h.nrows();
                let m = g.nrows();
                let mut gx = Mat::zeros(x.nrows(), x.ncols());
                let mut gh = Mat::zeros(t, t);
                for i in 0..m {
                    for j in 0..m {
                        let gij = g[(i, j)];
                        if gij == 0.0 {
                            continue;
                        }
                        for u in 0..t {
                            for v in 0..t {
                                gx[(i + u, j + v)] += h[(u, v)] * gij;
                                gh[(u, v)] += x[(i + u, j + v)] * gij;
                            }
                        }
                    }
                }
                vec![(input, gx), (kernel, gh)]
            }
            (&Op::Entry { input, row, col }, _) => {
                let src = val(input);
                let mut out = Mat::zeros(src.nrows(), src.ncols());
                out[(row, col)] = g[(0, 0)];
                vec![(input, out)]
            }
            (&Op::Slice { input, start, len }, _) => {
                let mut out = Mat::zeros(val(input).nrows(), 1);
                out.rows_mut(start, len).copy_from(g);
                vec![(input, out)]
            }
            (&Op::Softmax(a), _) => {
                let y = &node.value;
                let dot = g.dot(y);
                vec![(a, y.component_mul(&g.add_scalar(-dot)))]
            }
            (&Op::VecIso(a), _) => {
                let n = val(a).nrows();
                let mut out = Mat::zeros(n, n);
                let mut k = 0;
                for i in 0..n {
                    out[(i, i)] = g[(k, 0)];
                    k += 1;
                    for j in i + 1..n {
                        out[(i, j)] = std::f64::consts::SQRT_2 * g[(k, 0)];
                        k += 1;
                    }
                }
                vec![(a, out)]
            }
            (&Op::LogDet(a), Aux::Inverse(inv)) => vec![(a, inv * g[(0, 0)])],
            (&Op::SpdGuard { input, .. }, Aux::Guard(fired)) => {
                let gs = sym_part(g);
                match fired {
                    None => vec![(input, gs)],
                    Some(v) => {
                        // d(|λ_min|) = −vᵀ dA v for λ_min ≤ 0
                        let tr = gs.trace();
                        let vvt = v * v.transpose();
                        vec![(input, gs - vvt * tr)]
                    }
                }
            }
            (&Op::SoftmaxXent { logits, label, .. }, Aux::Probs(p, clamped)) => {
                if *clamped {
                    return vec![];
                }
                let mut d = Mat::from_column_slice(p.len(), 1, p.as_slice());
                d[(label, 0)] -= 1.0;
                vec![(logits, d * g[(0, 0)])]
            }
            (op, _) => unreachable!("missing auxiliary data for {op:?}"),
        }
    }

    /// Inputs recorded for each node (exposed for structural tests).
    pub fn node_inputs(&self, v: Var) -> Vec<Var> {
        inputs_of(&self.nodes[v.0].op).into_iter().map(Var).collect()
    }
}
