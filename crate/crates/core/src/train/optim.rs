use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::sequence::LabeledSequence;
use crate::ssm::{Mode, ModelParams};

use super::grad::{batch_loss, loss_and_grad};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "m-sgd" => Ok(OptimizerKind::Sgd),
            "adam" | "m-adam" => Ok(OptimizerKind::Adam),
            other => Err(GeoError::param(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Optimization settings. Defaults: Adam, lr 5e-5, no weight decay,
/// batch 16, 300 epochs, 10 folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            weight_decay: 0.0,
            batch_size: 16,
            epochs: 300,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            folds: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(GeoError::param("learning rate must be positive and weight decay nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(GeoError::param("batch size must be positive"));
        }
        if self.folds < 2 {
            return Err(GeoError::param("fold count must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(GeoError::param("invalid Adam moments"));
        }
        Ok(())
    }
}

/// `g + wd·θ` on the families that take decay, `g` elsewhere.
fn decayed(params: &ModelParams, theta: &[f64], grad: &[f64], wd: f64) -> Vec<f64> {
    if wd == 0.0 {
        return grad.to_vec();
    }
    params
        .decay_mask()
        .iter()
        .zip(theta.iter().zip(grad))
        .map(|(&m, (&t, &g))| if m { g + wd * t } else { g })
        .collect()
}

fn check_len(params: &ModelParams, grad: &[f64]) -> Result<Vec<f64>> {
    let theta = params.flatten();
    if grad.len() != theta.len() {
        return Err(GeoError::dim(format!("gradient of length {} for {} parameters", grad.len(), theta.len())));
    }
    Ok(theta)
}

/// `θ ← θ − lr·(g + wd·θ)`.
pub fn sgd_step(params: &ModelParams, grad: &[f64], lr: f64, weight_decay: f64) -> Result<ModelParams> {
    let theta = check_len(params, grad)?;
    let g = decayed(params, &theta, grad, weight_decay);
    let next: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - lr * g).collect();
    let mut out = params.clone();
    out.assign(&next)?;
    Ok(out)
}

/// First and second moment estimates of Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &ModelParams, grad: &[f64], state: &mut AdamState, cfg: &TrainConfig) -> Result<ModelParams> {
    let theta = check_len(params, grad)?;
    if state.m.len() != theta.len() {
        return Err(GeoError::dim("optimizer state does not match the parameters"));
    }
    let g = decayed(params, &theta, grad, cfg.weight_decay);
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut next = theta;
    for i in 0..next.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        next[i] -= cfg.lr * mh / (vh.sqrt() + cfg.adam_eps);
    }
    let mut out = params.clone();
    out.assign(&next)?;
    Ok(out)
}

/// Loss trajectory of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-set loss after the last update (at initialization when no epochs ran).
    pub final_loss: f64,
}

/// Minibatch training on `data[idx]`. Batches are reshuffled every epoch
/// from a generator seeded with `cfg.seed`.
pub fn train(
    params: &mut ModelParams,
    data: &[LabeledSequence],
    idx: &[usize],
    mode: Mode,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if idx.is_empty() {
        return Err(GeoError::param("empty training set"));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= data.len()) {
        return Err(GeoError::param(format!("sample index {bad} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = idx.to_vec();
    let mut adam = AdamState::new(params.flatten().len());
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSequence> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, g) = loss_and_grad(params, &batch, mode)?;
            *params = match cfg.optimizer {
                OptimizerKind::Sgd => sgd_step(params, &g, cfg.lr, cfg.weight_decay)?,
                OptimizerKind::Adam => adam_step(params, &g, &mut adam, cfg)?,
            };
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        history.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    let all: Vec<&LabeledSequence> = idx.iter().map(|&i| &data[i]).collect();
    history.final_loss = batch_loss(params, &all, mode)?;
    Ok(history)
}
