use crate::autodiff::{GradTape, Spectral, Var};
use crate::error::{GeoError, Result};
use crate::sequence::SpdSequence;
use crate::spd::{Mat, SpdMatrix};

use super::graph::{self, ParamVars};
use super::params::{InitialState, Mode, ModelParams, ReadoutParams};

/// Radius the per-step tangent is rescaled to before the exponential.
pub const TANGENT_RADIUS: f64 = 4.0;

/// Final-layer outputs plus per-layer attention masks, as tape handles.
pub(crate) struct Forward {
    /// `(time, Y)` pairs of the final layer, ascending in time.
    pub outputs: Vec<(usize, Var)>,
    /// `masks[layer]` holds `(time, central mask)` pairs.
    pub masks: Vec<Vec<(usize, Var)>>,
}

impl Forward {
    pub fn last(&self) -> Var {
        self.outputs.last().expect("nonempty").1
    }
}

fn check_input(seq: &SpdSequence, params: &ModelParams) -> Result<()> {
    params.validate()?;
    if seq.dim() != params.dim {
        return Err(GeoError::dim(format!(
            "sequence of {}x{} matrices for a model of size {}",
            seq.dim(),
            seq.dim(),
            params.dim
        )));
    }
    Ok(())
}

/// Most recent first: `items[hi]`, `items[hi − 1]`, … down to `lo`.
fn lag_order(items: &[Var], lo: usize, hi: usize) -> Vec<Var> {
    (lo..=hi).rev().map(|j| items[j]).collect()
}

/// One translated aggregate `T(F(states, wS), F(inputs, wX))`; both slices
/// are ordered most recent first.
#[allow(clippy::too_many_arguments)]
pub(crate) fn manifold_step(
    tape: &mut GradTape,
    pv: &ParamVars,
    params: &ModelParams,
    layer: usize,
    states: &[Var],
    state_logits: Var,
    inputs: &[Var],
    input_logits: Var,
    b_tilde: Var,
) -> Result<Var> {
    let step = params.dynamics.step;
    let ws = graph::lag_weights(tape, pv.a, step, state_logits, states.len())?;
    let wx = graph::lag_weights(tape, pv.a, step, input_logits, inputs.len())?;
    let s = graph::wfm(tape, states, ws, params.wfm_tol, params.wfm_max_iter)?;
    let x = graph::wfm(tape, inputs, wx, params.wfm_tol, params.wfm_max_iter)?;
    let g = graph::action(tape, pv.w[layer], x, b_tilde)?;
    graph::translate(tape, s, g)
}

fn check_window(len: usize, max: usize, what: &str) -> Result<()> {
    if len == 0 || len > max {
        return Err(GeoError::dim(format!("{what}: expected 1..={max} matrices, got {len}")));
    }
    Ok(())
}

/// Recurrent layer over `inputs` (times `0..T`). Returns the outputs at the
/// times in `from..T`.
fn recurrent_layer(
    tape: &mut GradTape,
    pv: &ParamVars,
    params: &ModelParams,
    layer: usize,
    inputs: &[Var],
    from: usize,
) -> Result<Vec<(usize, Var)>> {
    let tau = params.dynamics.lag;
    let bt = graph::b_tilde(tape, pv.a, pv.b, params.dynamics.step)?;
    let s0 = match params.initial_state {
        InitialState::Identity => tape.leaf(Mat::identity(params.dim, params.dim)),
        InitialState::FirstInput => inputs[0],
    };
    // states[j] is S^(j); inputs[k − 1] is X(k).
    let mut states = vec![s0];
    let mut out = Vec::new();
    for k in 1..=inputs.len() {
        let x_win = lag_order(inputs, k.saturating_sub(tau + 1), k - 1);
        let s_win = lag_order(&states, k.saturating_sub(tau), k - 1);
        let s = manifold_step(tape, pv, params, layer, &s_win, pv.logits_a, &x_win, pv.logits_b, bt)?;
        states.push(s);
        if k > from {
            let s_win = lag_order(&states, k.saturating_sub(tau), k);
            let y = manifold_step(tape, pv, params, layer, &s_win, pv.logits_c, &x_win, pv.logits_d, bt)?;
            out.push((k - 1, y));
        }
    }
    Ok(out)
}

/// Per-step spatial feature of the convolutional path.
pub(crate) fn conv_feature(
    tape: &mut GradTape,
    params: &ModelParams,
    layer: usize,
    kernel: Var,
    x: Var,
) -> Result<(Var, Option<Var>)> {
    let lp = &params.layers[layer];
    let half = lp.conv.size() / 2;
    let padded = tape.pad(x, half, lp.attn_rho)?;
    let r = tape.conv(padded, kernel)?;
    let mut r = tape.symmetrize(r)?;
    let mut mask = None;
    if lp.attention {
        let (_, central) = graph::attention_mask(tape, r, lp.attn_pad, lp.attn_rho)?;
        r = graph::attend(tape, central, r, lp.conv.eps())?;
        mask = Some(central);
    }
    let mut l = tape.spectral(r, Spectral::Log)?;
    let norm = tape.frob_norm(l)?;
    if tape.scalar_value(norm) > 0.0 {
        let inv = tape.scalar_fn(norm, crate::autodiff::ScalarFn::Recip)?;
        let unit = tape.scale(l, inv)?;
        l = tape.scale_const(unit, TANGENT_RADIUS)?;
    }
    let e = tape.spectral(l, Spectral::Exp)?;
    let en = tape.frob_norm(e)?;
    let inv = tape.scalar_fn(en, crate::autodiff::ScalarFn::Recip)?;
    Ok((tape.scale(e, inv)?, mask))
}

/// `ZᵀZ + εI` on the tape.
pub(crate) fn conv_kernel(tape: &mut GradTape, params: &ModelParams, layer: usize, z: Var) -> Result<Var> {
    let zt = tape.transpose(z)?;
    let h = tape.matmul(zt, z)?;
    tape.add_identity(h, params.layers[layer].conv.eps())
}

/// Convolutional layer. `inputs[i]` is the layer input at time `offset + i`;
/// outputs are produced at times `from..offset + inputs.len()`.
fn conv_layer(
    tape: &mut GradTape,
    pv: &ParamVars,
    params: &ModelParams,
    layer: usize,
    inputs: &[Var],
    offset: usize,
    from: usize,
    masks: &mut Vec<(usize, Var)>,
) -> Result<Vec<(usize, Var)>> {
    let tau = params.dynamics.lag;
    let kernel = conv_kernel(tape, params, layer, pv.z[layer])?;
    let mut feats = Vec::with_capacity(inputs.len());
    for (i, &x) in inputs.iter().enumerate() {
        let (f, mask) = conv_feature(tape, params, layer, kernel, x)?;
        if let Some(m) = mask {
            masks.push((offset + i, m));
        }
        feats.push(f);
    }
    let end = offset + inputs.len();
    let mut out = Vec::with_capacity(end - from);
    for t in from..end {
        let lo = t.saturating_sub(tau).max(offset);
        let window = lag_order(&feats, lo - offset, t - offset);
        let w = graph::lag_weights(tape, pv.a, params.dynamics.step, pv.logits_c, window.len())?;
        let y = graph::wfm(tape, &window, w, params.wfm_tol, params.wfm_max_iter)?;
        out.push((t, y));
    }
    Ok(out)
}

/// Records the model on `tape`. With `all_steps`, the final layer is
/// evaluated at every time step; otherwise only at the last one, and
/// earlier steps are computed only as far back as they are needed.
pub(crate) fn forward(
    tape: &mut GradTape,
    pv: &ParamVars,
    params: &ModelParams,
    seq: &SpdSequence,
    mode: Mode,
    all_steps: bool,
) -> Result<Forward> {
    check_input(seq, params)?;
    let t_len = seq.len();
    let layers = params.layers.len();
    let mut masks = vec![Vec::new(); layers];
    match mode {
        Mode::Recurrent => {
            let mut cur: Vec<Var> = seq.iter().map(|m| tape.leaf(m.as_matrix().clone())).collect();
            let mut outputs = Vec::new();
            for l in 0..layers {
                let from = if l + 1 == layers && !all_steps { t_len - 1 } else { 0 };
                outputs = recurrent_layer(tape, pv, params, l, &cur, from)?;
                cur = outputs.iter().map(|&(_, v)| v).collect();
            }
            Ok(Forward { outputs, masks })
        }
        Mode::Convolutional => {
            let tau = params.dynamics.lag;
            // from[l]: first output time layer l must produce.
            let mut from = vec![0; layers];
            if !all_steps {
                from[layers - 1] = t_len - 1;
                for l in (0..layers - 1).rev() {
                    from[l] = from[l + 1].saturating_sub(tau);
                }
            }
            let first_input = from[0].saturating_sub(tau);
            let mut cur: Vec<Var> = seq.as_slice()[first_input..]
                .iter()
                .map(|m| tape.leaf(m.as_matrix().clone()))
                .collect();
            let mut offset = first_input;
            let mut outputs = Vec::new();
            for l in 0..layers {
                outputs = conv_layer(tape, pv, params, l, &cur, offset, from[l], &mut masks[l])?;
                offset = from[l];
                cur = outputs.iter().map(|&(_, v)| v).collect();
            }
            Ok(Forward { outputs, masks })
        }
    }
}

/// Class logits `W_r · vec(log Y)`.
pub(crate) fn readout_logits(tape: &mut GradTape, readout: Var, y: Var) -> Result<Var> {
    let l = tape.spectral(y, Spectral::Log)?;
    let v = tape.vec_iso(l)?;
    tape.matmul(readout, v)
}

fn to_spd(tape: &GradTape, v: Var) -> SpdMatrix {
    SpdMatrix::new_unchecked(tape.value(v).clone())
}

fn recorded(params: &ModelParams) -> (GradTape, ParamVars) {
    let mut tape = GradTape::new();
    let pv = ParamVars::record(&mut tape, params);
    (tape, pv)
}

fn leaves(tape: &mut GradTape, mats: &[SpdMatrix]) -> Vec<Var> {
    mats.iter().map(|m| tape.leaf(m.as_matrix().clone())).collect()
}

fn check_layer(params: &ModelParams, layer: usize) -> Result<()> {
    params.validate()?;
    if layer >= params.layers.len() {
        return Err(GeoError::param(format!("layer {layer} of {}", params.layers.len())));
    }
    Ok(())
}

fn windowed_step(
    states: &[SpdMatrix],
    inputs: &[SpdMatrix],
    params: &ModelParams,
    layer: usize,
    observe: bool,
) -> Result<SpdMatrix> {
    check_layer(params, layer)?;
    let tau = params.dynamics.lag;
    check_window(states.len(), if observe { tau + 1 } else { tau }, "state window")?;
    check_window(inputs.len(), tau + 1, "input window")?;
    if states.iter().chain(inputs).any(|m| m.dim() != params.dim) {
        return Err(GeoError::dim("window matrices do not match the model size"));
    }
    let (mut tape, pv) = recorded(params);
    let mut s = leaves(&mut tape, states);
    let mut x = leaves(&mut tape, inputs);
    s.reverse();
    x.reverse();
    let bt = graph::b_tilde(&mut tape, pv.a, pv.b, params.dynamics.step)?;
    let (sl, xl) = if observe { (pv.logits_c, pv.logits_d) } else { (pv.logits_a, pv.logits_b) };
    let out = manifold_step(&mut tape, &pv, params, layer, &s, sl, &x, xl, bt)?;
    Ok(to_spd(&tape, out))
}

/// Recurrent state update of one layer. `states` holds up to `τ` previous
/// states and `inputs` up to `τ + 1` inputs ending at the current one, both
/// in chronological order.
pub fn state_update(states: &[SpdMatrix], inputs: &[SpdMatrix], params: &ModelParams, layer: usize) -> Result<SpdMatrix> {
    windowed_step(states, inputs, params, layer, false)
}

/// Recurrent observation of one layer: up to `τ + 1` states ending at the
/// current one and up to `τ + 1` inputs, chronological.
pub fn observe(states: &[SpdMatrix], inputs: &[SpdMatrix], params: &ModelParams, layer: usize) -> Result<SpdMatrix> {
    windowed_step(states, inputs, params, layer, true)
}

/// Output sequence `Y(1..T)` of the stacked recurrent layers.
pub fn run_recurrent(seq: &SpdSequence, params: &ModelParams) -> Result<SpdSequence> {
    let (mut tape, pv) = recorded(params);
    let f = forward(&mut tape, &pv, params, seq, Mode::Recurrent, true)?;
    SpdSequence::new(f.outputs.iter().map(|&(_, v)| to_spd(&tape, v)).collect())
}

/// Feature sequence of the stacked convolutional layers.
pub fn forward_conv(seq: &SpdSequence, params: &ModelParams) -> Result<SpdSequence> {
    let (mut tape, pv) = recorded(params);
    let f = forward(&mut tape, &pv, params, seq, Mode::Convolutional, true)?;
    SpdSequence::new(f.outputs.iter().map(|&(_, v)| to_spd(&tape, v)).collect())
}

/// Attention masks of every convolutional layer at every time step, plus
/// the guard statistics `(checked, fired)` of the run.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    /// `masks[layer][t]`.
    pub masks: Vec<Vec<Mat>>,
    pub guard_checks: usize,
    pub guard_fires: usize,
}

impl AttentionTrace {
    /// Time average of the masks of one layer.
    pub fn mean_mask(&self, layer: usize) -> Option<Mat> {
        let ms = self.masks.get(layer)?;
        let first = ms.first()?;
        let mut acc = Mat::zeros(first.nrows(), first.ncols());
        for m in ms {
            acc += m;
        }
        Some(acc / ms.len() as f64)
    }
}

pub fn attention_trace(seq: &SpdSequence, params: &ModelParams) -> Result<AttentionTrace> {
    let (mut tape, pv) = recorded(params);
    let f = forward(&mut tape, &pv, params, seq, Mode::Convolutional, true)?;
    let masks = f
        .masks
        .iter()
        .map(|layer| layer.iter().map(|&(_, v)| tape.value(v).clone()).collect())
        .collect();
    let (guard_checks, guard_fires) = tape.guard_stats();
    Ok(AttentionTrace { masks, guard_checks, guard_fires })
}

/// Class probabilities `softmax(W_r · vec(log Y))`.
pub fn readout(y: &SpdMatrix, params: &ReadoutParams) -> Result<Vec<f64>> {
    let d = y.dim() * (y.dim() + 1) / 2;
    if params.weights.ncols() != d {
        return Err(GeoError::dim(format!("readout expects {} features, got {d}", params.weights.ncols())));
    }
    if y.min_eigenvalue() <= 0.0 {
        return Err(GeoError::domain("readout of a non-SPD matrix"));
    }
    let mut tape = GradTape::new();
    let w = tape.leaf(params.weights.clone());
    let yv = tape.leaf(y.as_matrix().clone());
    let z = readout_logits(&mut tape, w, yv)?;
    let p = tape.softmax(z)?;
    Ok(tape.value(p).as_slice().to_vec())
}

/// Class probabilities of the final output `Y(T)`.
pub fn model_forward(seq: &SpdSequence, params: &ModelParams, mode: Mode) -> Result<Vec<f64>> {
    let (mut tape, pv) = recorded(params);
    let f = forward(&mut tape, &pv, params, seq, mode, false)?;
    let z = readout_logits(&mut tape, pv.readout, f.last())?;
    let p = tape.softmax(z)?;
    Ok(tape.value(p).as_slice().to_vec())
}

/// Final output matrix `Y(T)` of the chosen path.
pub fn final_output(seq: &SpdSequence, params: &ModelParams, mode: Mode) -> Result<SpdMatrix> {
    let (mut tape, pv) = recorded(params);
    let f = forward(&mut tape, &pv, params, seq, mode, false)?;
    Ok(to_spd(&tape, f.last()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use crate::ssm::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, t: usize, seed: u64) -> (ModelParams, SpdSequence) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ModelConfig { dim: n, classes: 3, ..Default::default() };
        let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
        let flat: Vec<f64> = p.flatten().iter().map(|v| v + 0.1 * sample::gaussian(&mut rng, 1, 1)[(0, 0)]).collect();
        p.assign(&flat).unwrap();
        let seq = SpdSequence::new((0..t).map(|_| sample::spd(&mut rng, n)).collect()).unwrap();
        (p, seq)
    }

    #[test]
    fn lazy_final_output_matches_full_run() {
        let (p, seq) = setup(4, 11, 3);
        let full = forward_conv(&seq, &p).unwrap();
        let last = final_output(&seq, &p, Mode::Convolutional).unwrap();
        assert_eq!(full.last().as_matrix(), last.as_matrix());
        let full = run_recurrent(&seq, &p).unwrap();
        let last = final_output(&seq, &p, Mode::Recurrent).unwrap();
        assert_eq!(full.last().as_matrix(), last.as_matrix());
    }

    #[test]
    fn identity_inputs_are_a_fixed_point() {
        let (mut p, _) = setup(3, 1, 4);
        for l in &mut p.layers {
            l.action.fill(0.0);
        }
        let seq = SpdSequence::constant(SpdMatrix::identity(3), 6).unwrap();
        for y in &run_recurrent(&seq, &p).unwrap() {
            assert!((y.as_matrix() - Mat::identity(3, 3)).norm() < 1e-12);
        }
        let probs = model_forward(&seq, &p, Mode::Recurrent).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outputs_are_spd() {
        let (p, seq) = setup(5, 8, 5);
        for y in run_recurrent(&seq, &p).unwrap().iter().chain(forward_conv(&seq, &p).unwrap().iter()) {
            assert!(crate::spd::is_spd(y.as_matrix()));
        }
    }
}
