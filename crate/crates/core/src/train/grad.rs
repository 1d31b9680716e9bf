use rayon::prelude::*;

use crate::autodiff::{Adjoints, GradTape};
use crate::error::{GeoError, Result};
use crate::sequence::LabeledSequence;
use crate::ssm::graph::ParamVars;
use crate::ssm::model::{forward, readout_logits};
use crate::ssm::{Mode, ModelParams};

/// Floor applied to probabilities before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean cross-entropy `−(1/E) Σ_i log P_i[label_i]`, log clamped at the floor.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(GeoError::dim(format!("{} probability rows for {} labels", probs.len(), labels.len())));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        if y >= row.len() {
            return Err(GeoError::dim(format!("label {y} with {} classes", row.len())));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GeoError::param(format!("probability row sums to {sum}")));
        }
        total -= row[y].max(PROB_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

fn sample_tape(params: &ModelParams, item: &LabeledSequence, mode: Mode) -> Result<(GradTape, ParamVars, f64, crate::autodiff::Var)> {
    if item.label >= params.classes() {
        return Err(GeoError::param(format!("label {} with {} classes", item.label, params.classes())));
    }
    let mut tape = GradTape::new();
    let pv = ParamVars::record(&mut tape, params);
    let f = forward(&mut tape, &pv, params, &item.seq, mode, false)?;
    let z = readout_logits(&mut tape, pv.readout, f.last())?;
    let loss = tape.softmax_xent(z, item.label, PROB_FLOOR)?;
    let value = tape.scalar_value(loss);
    Ok((tape, pv, value, loss))
}

fn flatten_adjoints(params: &ModelParams, pv: &ParamVars, adj: &Adjoints) -> Vec<f64> {
    let dy = &params.dynamics;
    let mut out = Vec::with_capacity(params.flatten().len());
    let mut push = |v, r, c| out.extend_from_slice(adj.get_or_zeros(v, r, c).as_slice());
    push(pv.a, 1, 1);
    push(pv.b, 1, 1);
    push(pv.logits_a, dy.logits_a.len(), 1);
    push(pv.logits_b, dy.logits_b.len(), 1);
    push(pv.logits_c, dy.logits_c.len(), 1);
    push(pv.logits_d, dy.logits_d.len(), 1);
    for (l, lp) in params.layers.iter().enumerate() {
        let t = lp.conv.size();
        push(pv.z[l], t, t);
        push(pv.w[l], params.dim, params.dim);
    }
    push(pv.readout, params.classes(), params.readout.weights.ncols());
    out
}

fn check_batch(batch: &[&LabeledSequence]) -> Result<()> {
    if batch.is_empty() {
        return Err(GeoError::param("empty batch"));
    }
    Ok(())
}

/// Loss and flat gradient of one sample.
pub fn sample_grad(params: &ModelParams, item: &LabeledSequence, mode: Mode) -> Result<(f64, Vec<f64>)> {
    let (tape, pv, value, loss) = sample_tape(params, item, mode)?;
    let adj = tape.backward(loss);
    Ok((value, flatten_adjoints(params, &pv, &adj)))
}

/// Mean batch loss and its gradient, laid out as [`ModelParams::flatten`].
///
/// Samples are differentiated on separate tapes, in parallel when a rayon
/// pool with more than one thread is active; the reduction runs in batch
/// order either way, so the result does not depend on the thread count.
pub fn loss_and_grad(params: &ModelParams, batch: &[&LabeledSequence], mode: Mode) -> Result<(f64, Vec<f64>)> {
    check_batch(batch)?;
    let parts: Vec<Result<(f64, Vec<f64>)>> = batch.par_iter().map(|item| sample_grad(params, item, mode)).collect();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.flatten().len()];
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, grad))
}

/// Gradient of the mean batch cross-entropy as a structure mirroring the
/// parameters.
pub fn grad(params: &ModelParams, batch: &[&LabeledSequence], mode: Mode) -> Result<ModelParams> {
    let (_, g) = loss_and_grad(params, batch, mode)?;
    let mut out = params.zeros_like();
    out.assign(&g)?;
    Ok(out)
}

/// Mean batch cross-entropy.
pub fn batch_loss(params: &ModelParams, batch: &[&LabeledSequence], mode: Mode) -> Result<f64> {
    check_batch(batch)?;
    let parts: Vec<Result<f64>> = batch
        .par_iter()
        .map(|item| sample_tape(params, item, mode).map(|t| t.2))
        .collect();
    let mut loss = 0.0;
    for p in parts {
        loss += p?;
    }
    Ok(loss / batch.len() as f64)
}

/// Central differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h` over every
/// trainable scalar, flat layout.
pub fn finite_diff_flat(params: &ModelParams, batch: &[&LabeledSequence], mode: Mode, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(GeoError::param("finite-difference step must be positive"));
    }
    let base = params.flatten();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut theta = base.clone();
        theta[i] = base[i] + h;
        probe.assign(&theta)?;
        let up = batch_loss(&probe, batch, mode)?;
        theta[i] = base[i] - h;
        probe.assign(&theta)?;
        let down = batch_loss(&probe, batch, mode)?;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

pub fn finite_diff_grad(params: &ModelParams, batch: &[&LabeledSequence], mode: Mode, h: f64) -> Result<ModelParams> {
    let g = finite_diff_flat(params, batch, mode, h)?;
    let mut out = params.zeros_like();
    out.assign(&g)?;
    Ok(out)
}
