use crate::autodiff::phi1;
use crate::error::{GeoError, Result};
use crate::manifold::WeightVector;

/// Zero-order-hold discretization of the scalar system `(a, b)` at step `Δ`:
/// `ã = exp(Δa)`, `b̃ = (Δa)⁻¹(exp(Δa) − 1)·Δb`, with `b̃ = Δb` at `a = 0`.
pub fn discretize(a: f64, b: f64, step: f64) -> Result<(f64, f64)> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(GeoError::param(format!("step must be positive, got {step}")));
    }
    let x = step * a;
    Ok((x.exp(), phi1(x) * step * b))
}

/// Normalized lag weights `∝ ã^ℓ · exp(logit_ℓ)` for lags `ℓ = 1..m`.
///
/// Entry 0 belongs to lag 1 (the most recent element). Evaluated as a
/// softmax of `ℓ·ln ã + logit_ℓ`.
pub fn lag_weights(a_tilde: f64, m: usize, logits: &[f64]) -> Result<WeightVector> {
    if m == 0 {
        return Err(GeoError::param("lag horizon must be positive"));
    }
    if !(a_tilde > 0.0) || !a_tilde.is_finite() {
        return Err(GeoError::param(format!("decay must be positive, got {a_tilde}")));
    }
    if logits.len() < m {
        return Err(GeoError::dim(format!("{} logits for horizon {m}", logits.len())));
    }
    let la = a_tilde.ln();
    let z: Vec<f64> = (0..m).map(|i| (i + 1) as f64 * la + logits[i]).collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    WeightVector::normalized(&e)
}

/// Output of the discretized scalar system computed two ways.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSsmRun {
    pub recurrence: Vec<f64>,
    pub convolution: Vec<f64>,
    pub kernel: Vec<f64>,
}

/// Impulse response `K = (c b̃ + d, c ã b̃, c ã² b̃, …)` of length `len`.
pub fn scalar_ssm_kernel(a_tilde: f64, b_tilde: f64, c: f64, d: f64, len: usize) -> Vec<f64> {
    let mut k = Vec::with_capacity(len);
    let mut pow = 1.0;
    for i in 0..len {
        k.push(if i == 0 { c * b_tilde + d } else { c * pow * b_tilde });
        pow *= a_tilde;
    }
    k
}

/// Runs `s_k = ã s_{k−1} + b̃ x_k`, `y_k = c s_k + d x_k` from `s_0 = 0`,
/// and the causal convolution of `x` with the impulse response.
pub fn scalar_ssm_oracle(a: f64, b: f64, c: f64, d: f64, step: f64, x: &[f64]) -> Result<ScalarSsmRun> {
    let (at, bt) = discretize(a, b, step)?;
    let mut s = 0.0;
    let recurrence = x
        .iter()
        .map(|&xk| {
            s = at * s + bt * xk;
            c * s + d * xk
        })
        .collect();
    let kernel = scalar_ssm_kernel(at, bt, c, d, x.len());
    let convolution = (0..x.len())
        .map(|k| (0..=k).map(|j| kernel[j] * x[k - j]).sum())
        .collect();
    Ok(ScalarSsmRun { recurrence, convolution, kernel })
}
