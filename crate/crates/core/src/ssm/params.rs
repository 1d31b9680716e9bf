use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::manifold::{ConvKernelFactor, DEFAULT_EPS, WFM_MAX_ITER, WFM_TOL};
use crate::spd::Mat;

/// Which forward path turns a sequence into the final output matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Recurrent,
    Convolutional,
}

impl FromStr for Mode {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recurrent" | "rec" => Ok(Mode::Recurrent),
            "convolutional" | "conv" => Ok(Mode::Convolutional),
            other => Err(GeoError::param(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Recurrent => "recurrent",
            Mode::Convolutional => "convolutional",
        })
    }
}

/// Starting state `S⁰` of the recurrent path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `S⁰ = I`. Every later state is then a translate of `I`, which is `I`.
    Identity,
    /// `S⁰ = X(1)`.
    FirstInput,
}

/// Model hyperparameters. Defaults: 2 layers, lag window 4, step 0.1,
/// ε = 1e-5, ρ = 0.01, 3×3 kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Matrix size `N`; `0` means "infer from data".
    pub dim: usize,
    pub classes: usize,
    pub layers: usize,
    pub lag: usize,
    pub step: f64,
    pub eps: f64,
    pub rho: f64,
    pub kernel_size: usize,
    pub attn_pad: usize,
    pub attention: bool,
    pub init_scale: f64,
    pub wfm_tol: f64,
    pub wfm_max_iter: usize,
    pub initial_state: InitialState,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 0,
            classes: 2,
            layers: 2,
            lag: 4,
            step: 0.1,
            eps: DEFAULT_EPS,
            rho: 0.01,
            kernel_size: 3,
            attn_pad: 1,
            attention: true,
            init_scale: 0.1,
            wfm_tol: WFM_TOL,
            wfm_max_iter: WFM_MAX_ITER,
            initial_state: InitialState::FirstInput,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(GeoError::param("model dimension must be positive"));
        }
        if self.classes < 2 {
            return Err(GeoError::param("at least two classes are required"));
        }
        if self.layers == 0 || self.lag == 0 {
            return Err(GeoError::param("layers and lag must be positive"));
        }
        if !(self.step > 0.0) {
            return Err(GeoError::param("step must be positive"));
        }
        if !(self.eps > 0.0) || !(self.rho > 0.0) {
            return Err(GeoError::param("eps and rho must be positive"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(GeoError::param("kernel size must be odd"));
        }
        if !(self.wfm_tol > 0.0) || self.wfm_max_iter == 0 {
            return Err(GeoError::param("invalid wFM solver settings"));
        }
        Ok(())
    }
}

/// Continuous-time scalars, step, lag window and the four lag-logit families
/// (state/input weights of the update and of the observation).
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsParams {
    pub a: f64,
    pub b: f64,
    pub step: f64,
    pub lag: usize,
    /// `lag` entries: states `S_{k−1} … S_{k−τ}` in the update.
    pub logits_a: Vec<f64>,
    /// `lag + 1` entries: inputs `X_k … X_{k−τ}` in the update.
    pub logits_b: Vec<f64>,
    /// `lag + 1` entries: states `S_k … S_{k−τ}` in the observation.
    pub logits_c: Vec<f64>,
    /// `lag + 1` entries: inputs `X_k … X_{k−τ}` in the observation.
    pub logits_d: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub conv: ConvKernelFactor,
    /// `W` of the action generator `g(V) = cayley(b̃ (WV − VWᵀ))`.
    pub action: Mat,
    pub attn_pad: usize,
    pub attn_rho: f64,
    pub attention: bool,
}

/// Softmax classifier on the isometric vectorization of `log Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutParams {
    /// `Q × N(N+1)/2`.
    pub weights: Mat,
}

impl ReadoutParams {
    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub dynamics: DynamicsParams,
    pub layers: Vec<LayerParams>,
    pub readout: ReadoutParams,
    pub wfm_tol: f64,
    pub wfm_max_iter: usize,
    pub initial_state: InitialState,
}

/// Named contiguous block of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamFamily {
    pub name: String,
    pub range: Range<usize>,
}

fn noise<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

impl ModelParams {
    /// Near-identity initialization: the conv kernel factor is the centre tap
    /// plus noise, the action generators are small, and the lag logits are 0.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.dim;
        let t = cfg.kernel_size;
        if t > n + 2 * (t / 2) {
            return Err(GeoError::param("kernel larger than padded input"));
        }
        let layers = (0..cfg.layers)
            .map(|_| {
                let mut z = noise(rng, t, t, cfg.init_scale);
                z[(t / 2, t / 2)] += 1.0;
                Ok(LayerParams {
                    conv: ConvKernelFactor::new(z, cfg.eps)?,
                    action: noise(rng, n, n, cfg.init_scale),
                    attn_pad: cfg.attn_pad,
                    attn_rho: cfg.rho,
                    attention: cfg.attention,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = n * (n + 1) / 2;
        Ok(ModelParams {
            dim: n,
            dynamics: DynamicsParams {
                a: -1.0,
                b: 1.0,
                step: cfg.step,
                lag: cfg.lag,
                logits_a: vec![0.0; cfg.lag],
                logits_b: vec![0.0; cfg.lag + 1],
                logits_c: vec![0.0; cfg.lag + 1],
                logits_d: vec![0.0; cfg.lag + 1],
            },
            layers,
            readout: ReadoutParams {
                weights: noise(rng, cfg.classes, d, cfg.init_scale),
            },
            wfm_tol: cfg.wfm_tol,
            wfm_max_iter: cfg.wfm_max_iter,
            initial_state: cfg.initial_state,
        })
    }

    pub fn classes(&self) -> usize {
        self.readout.classes()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        let dy = &self.dynamics;
        if n == 0 || dy.lag == 0 || !(dy.step > 0.0) {
            return Err(GeoError::param("invalid dimension, lag or step"));
        }
        if dy.logits_a.len() != dy.lag
            || dy.logits_b.len() != dy.lag + 1
            || dy.logits_c.len() != dy.lag + 1
            || dy.logits_d.len() != dy.lag + 1
        {
            return Err(GeoError::param("lag logit lengths do not match the lag window"));
        }
        if self.layers.is_empty() {
            return Err(GeoError::param("model has no layers"));
        }
        for l in &self.layers {
            if l.action.shape() != (n, n) {
                return Err(GeoError::dim("action generator has the wrong shape"));
            }
            if !(l.attn_rho > 0.0) {
                return Err(GeoError::param("attention diagonal must be positive"));
            }
        }
        if self.readout.weights.ncols() != n * (n + 1) / 2 || self.classes() < 2 {
            return Err(GeoError::dim("readout weights have the wrong shape"));
        }
        Ok(())
    }

    /// Layout of [`ModelParams::flatten`].
    pub fn families(&self) -> Vec<ParamFamily> {
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize| {
            out.push(ParamFamily { name, range: at..at + len });
            at += len;
        };
        let dy = &self.dynamics;
        push("dynamics.a".into(), 1);
        push("dynamics.b".into(), 1);
        push("dynamics.logits_a".into(), dy.logits_a.len());
        push("dynamics.logits_b".into(), dy.logits_b.len());
        push("dynamics.logits_c".into(), dy.logits_c.len());
        push("dynamics.logits_d".into(), dy.logits_d.len());
        for (i, l) in self.layers.iter().enumerate() {
            push(format!("layer{i}.kernel_factor"), l.conv.factor().len());
            push(format!("layer{i}.action"), l.action.len());
        }
        push("readout.weights".into(), self.readout.weights.len());
        out
    }

    /// Trainable parameters as one vector (matrices column-major).
    pub fn flatten(&self) -> Vec<f64> {
        let dy = &self.dynamics;
        let mut v = vec![dy.a, dy.b];
        v.extend_from_slice(&dy.logits_a);
        v.extend_from_slice(&dy.logits_b);
        v.extend_from_slice(&dy.logits_c);
        v.extend_from_slice(&dy.logits_d);
        for l in &self.layers {
            v.extend_from_slice(l.conv.factor().as_slice());
            v.extend_from_slice(l.action.as_slice());
        }
        v.extend_from_slice(self.readout.weights.as_slice());
        v
    }

    /// Overwrites the trainable parameters from a vector laid out as [`ModelParams::flatten`].
    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        let expect = self.flatten().len();
        if flat.len() != expect {
            return Err(GeoError::dim(format!("expected {expect} parameters, got {}", flat.len())));
        }
        let mut it = flat.iter().copied();
        let mut take = |dst: &mut [f64]| {
            for d in dst.iter_mut() {
                *d = it.next().expect("length checked");
            }
        };
        let dy = &mut self.dynamics;
        take(std::slice::from_mut(&mut dy.a));
        take(std::slice::from_mut(&mut dy.b));
        take(&mut dy.logits_a);
        take(&mut dy.logits_b);
        take(&mut dy.logits_c);
        take(&mut dy.logits_d);
        for l in &mut self.layers {
            take(l.conv.factor_mut().as_mut_slice());
            take(l.action.as_mut_slice());
        }
        take(self.readout.weights.as_mut_slice());
        Ok(())
    }

    /// Same structure with every trainable entry set to zero; used as the
    /// gradient container.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        let n = z.flatten().len();
        z.assign(&vec![0.0; n]).expect("same layout");
        z
    }

    /// Whether the flat index belongs to a family that takes weight decay
    /// (kernel factors, action generators, readout).
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = Vec::new();
        for fam in self.families() {
            let decays = !fam.name.starts_with("dynamics.");
            mask.extend(std::iter::repeat(decays).take(fam.range.len()));
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flatten_assign_round_trip() {
        let cfg = ModelConfig { dim: 4, classes: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(&cfg, &mut rng).unwrap();
        p.validate().unwrap();
        let flat = p.flatten();
        let fams = p.families();
        assert_eq!(fams.last().unwrap().range.end, flat.len());
        let mut q = p.zeros_like();
        assert!(q.flatten().iter().all(|&v| v == 0.0));
        q.assign(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.assign(&flat[1..]).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("conv".parse::<Mode>().unwrap(), Mode::Convolutional);
        assert_eq!("Recurrent".parse::<Mode>().unwrap(), Mode::Recurrent);
        assert!("x".parse::<Mode>().is_err());
    }
}
