//! Tape-level building blocks shared by the model paths.

use crate::autodiff::{GradTape, ScalarFn, Var};
use crate::error::{GeoError, Result};
use crate::manifold::relative_change;
use crate::spd::Mat;

use super::params::ModelParams;

/// Leaves for every trainable quantity of a [`ModelParams`].
#[derive(Clone, Debug)]
pub(crate) struct ParamVars {
    pub a: Var,
    pub b: Var,
    pub logits_a: Var,
    pub logits_b: Var,
    pub logits_c: Var,
    pub logits_d: Var,
    pub z: Vec<Var>,
    pub w: Vec<Var>,
    pub readout: Var,
}

fn column(values: &[f64]) -> Mat {
    Mat::from_column_slice(values.len(), 1, values)
}

impl ParamVars {
    pub fn record(tape: &mut GradTape, p: &ModelParams) -> Self {
        let dy = &p.dynamics;
        ParamVars {
            a: tape.scalar(dy.a),
            b: tape.scalar(dy.b),
            logits_a: tape.leaf(column(&dy.logits_a)),
            logits_b: tape.leaf(column(&dy.logits_b)),
            logits_c: tape.leaf(column(&dy.logits_c)),
            logits_d: tape.leaf(column(&dy.logits_d)),
            z: p.layers.iter().map(|l| tape.leaf(l.conv.factor().clone())).collect(),
            w: p.layers.iter().map(|l| tape.leaf(l.action.clone())).collect(),
            readout: tape.leaf(p.readout.weights.clone()),
        }
    }
}

/// Softmax of `ℓ·Δ·a + logit_ℓ` over lags `ℓ = 1..m`.
pub(crate) fn lag_weights(tape: &mut GradTape, a: Var, step: f64, logits: Var, m: usize) -> Result<Var> {
    let lags: Vec<f64> = (1..=m).map(|l| l as f64 * step).collect();
    let lags = tape.leaf(column(&lags));
    let decay = tape.scale(lags, a)?;
    let head = tape.slice(logits, 0, m)?;
    let z = tape.add(decay, head)?;
    tape.softmax(z)
}

/// Stein wFM by unrolled fixed-point sweeps from the weighted arithmetic
/// mean. `points` and the entries of `w` are paired in order.
pub(crate) fn wfm(tape: &mut GradTape, points: &[Var], w: Var, tol: f64, max_iter: usize) -> Result<Var> {
    if points.is_empty() {
        return Err(GeoError::param("wFM of an empty set"));
    }
    if points.len() == 1 {
        return Ok(points[0]);
    }
    let ws = (0..points.len())
        .map(|i| tape.entry(w, i, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut f = tape.scale(points[0], ws[0])?;
    for (&x, &wi) in points.iter().zip(&ws).skip(1) {
        let term = tape.scale(x, wi)?;
        f = tape.add(f, term)?;
    }
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut acc: Option<Var> = None;
        for (&x, &wi) in points.iter().zip(&ws) {
            let sum = tape.add(x, f)?;
            let mid = tape.scale_const(sum, 0.5)?;
            let inv = tape.spd_inverse(mid)?;
            let term = tape.scale(inv, wi)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        let next = tape.spd_inverse(acc.expect("nonempty"))?;
        residual = relative_change(tape.value(next), tape.value(f));
        f = next;
        if residual <= tol {
            return Ok(f);
        }
    }
    Err(GeoError::Convergence { iterations: max_iter, residual })
}

/// `cayley(b̃ (WV − VWᵀ))`.
pub(crate) fn action(tape: &mut GradTape, w: Var, v: Var, b_tilde: Var) -> Result<Var> {
    let wv = tape.matmul(w, v)?;
    let vwt = tape.transpose(wv)?;
    let k = tape.sub(wv, vwt)?;
    let k = tape.scale(k, b_tilde)?;
    let half = tape.scale_const(k, 0.5)?;
    let neg = tape.scale_const(half, -1.0)?;
    let lhs = tape.add_identity(neg, 1.0)?;
    let rhs = tape.add_identity(half, 1.0)?;
    let inv = tape.inverse(lhs)?;
    tape.matmul(inv, rhs)
}

/// Symmetrized `g U gᵀ`.
pub(crate) fn translate(tape: &mut GradTape, u: Var, g: Var) -> Result<Var> {
    let gu = tape.matmul(g, u)?;
    let gt = tape.transpose(g)?;
    let out = tape.matmul(gu, gt)?;
    tape.symmetrize(out)
}

/// Discretized input gain `b̃ = φ₁(Δa)·Δ·b`.
pub(crate) fn b_tilde(tape: &mut GradTape, a: Var, b: Var, step: f64) -> Result<Var> {
    let da = tape.scale_const(a, step)?;
    let phi = tape.scalar_fn(da, ScalarFn::Phi1)?;
    let db = tape.scale_const(b, step)?;
    tape.scale(phi, db)
}

/// Attention mask on the padded response, divided by its largest entry and
/// cropped back to the response size.
pub(crate) fn attention_mask(tape: &mut GradTape, resp: Var, pad: usize, rho: f64) -> Result<(Var, Var)> {
    let n = tape.value(resp).nrows();
    let padded = tape.pad(resp, pad, rho)?;
    let e = tape.exp_entries(padded)?;
    let max = tape.max_entry(e)?;
    let inv = tape.scalar_fn(max, ScalarFn::Recip)?;
    let full = tape.scale(e, inv)?;
    let central = tape.crop(full, pad, n)?;
    Ok((full, central))
}

/// `spd_guard(sym(δ ∘ R))`.
pub(crate) fn attend(tape: &mut GradTape, mask: Var, resp: Var, eps: f64) -> Result<Var> {
    let prod = tape.hadamard(mask, resp)?;
    let sym = tape.symmetrize(prod)?;
    tape.spd_guard(sym, eps)
}
