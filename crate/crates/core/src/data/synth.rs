use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::sample;
use crate::sequence::{LabeledSequence, SpdSequence};
use crate::spd::{eig_raw, spectral_compose, sym_part, Mat, SpdMatrix};

use super::dataset::{LabeledDataset, Manifest};
use super::timeseries::TimeSeries;

/// Class structure of the synthetic SPD trajectories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    /// Shared base matrix and spectrum, class-specific rotation speed and a
    /// random starting phase per sample: single frames carry no class signal.
    Hard,
    /// Static trajectories around class-specific base matrices.
    Easy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub length: usize,
    pub seed: u64,
    pub mode: SynthMode,
    /// Scale of the symmetric observation noise.
    pub noise: f64,
    /// Rotation speeds (rad/frame) of the first and last class; the others
    /// are spaced evenly in between.
    pub drift_min: f64,
    pub drift_max: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 2,
            per_class: 100,
            dim: 8,
            length: 30,
            seed: 7,
            mode: SynthMode::Hard,
            noise: 0.05,
            drift_min: 0.05,
            drift_max: 0.3,
        }
    }
}

/// Eigenvalue floor applied after adding noise.
pub const SYNTH_EIGEN_CLIP: f64 = 1e-3;

/// `U · blockdiag(R(θ), R(θ), …) · Uᵀ`; a trailing odd coordinate is fixed.
pub fn plane_rotation(u: &Mat, theta: f64) -> Mat {
    let n = u.nrows();
    let (s, c) = theta.sin_cos();
    let mut r = Mat::identity(n, n);
    for k in 0..n / 2 {
        let (i, j) = (2 * k, 2 * k + 1);
        r[(i, i)] = c;
        r[(i, j)] = -s;
        r[(j, i)] = s;
        r[(j, j)] = c;
    }
    u * r * u.transpose()
}

fn drift(cfg: &SynthConfig, q: usize) -> f64 {
    if cfg.classes == 1 {
        return cfg.drift_min;
    }
    cfg.drift_min + (cfg.drift_max - cfg.drift_min) * q as f64 / (cfg.classes - 1) as f64
}

/// Adds `noise · S` with `S` symmetric standard-normal and clips eigenvalues
/// at the floor.
fn perturb<R: Rng + ?Sized>(rng: &mut R, x: &Mat, noise: f64) -> Result<SpdMatrix> {
    let n = x.nrows();
    if noise == 0.0 {
        return Ok(SpdMatrix::new_unchecked(x.clone()));
    }
    let g = sample::gaussian(rng, n, n);
    let y = sym_part(&(x + sym_part(&g) * noise));
    let eig = eig_raw(&y)?;
    let clipped = eig.values.map(|v| v.max(SYNTH_EIGEN_CLIP));
    Ok(SpdMatrix::new_unchecked(sym_part(&spectral_compose(&eig.vectors, &clipped))))
}

/// Fixed spectrum `exp(linspace(−1.2, 1.2, N))`.
fn base_spectrum(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = if n == 1 { 0.0 } else { -1.2 + 2.4 * i as f64 / (n - 1) as f64 };
            x.exp()
        })
        .collect()
}

fn with_spectrum(v: &Mat, d: &[f64]) -> Mat {
    v * Mat::from_diagonal(&nalgebra::DVector::from_column_slice(d)) * v.transpose()
}

/// Synthetic labelled SPD trajectories `X(t) = R(ω_q t + φ) B R(ω_q t + φ)ᵀ`
/// plus noise. Deterministic given the configuration.
pub fn synth_generate(cfg: &SynthConfig) -> Result<LabeledDataset> {
    if cfg.classes == 0 || cfg.per_class == 0 || cfg.dim == 0 || cfg.length == 0 {
        return Err(GeoError::param("classes, samples per class, dimension and length must be positive"));
    }
    if !(cfg.noise >= 0.0) {
        return Err(GeoError::param("noise must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.dim;
    let spectrum = base_spectrum(n);
    let planes = sample::orthogonal(&mut rng, n);
    let shared_base = with_spectrum(&sample::orthogonal(&mut rng, n), &spectrum);
    let class_bases: Vec<Mat> = (0..cfg.classes)
        .map(|_| with_spectrum(&sample::orthogonal(&mut rng, n), &spectrum))
        .collect();
    let mut items = Vec::with_capacity(cfg.classes * cfg.per_class);
    for q in 0..cfg.classes {
        for _ in 0..cfg.per_class {
            let (base, omega, phase) = match cfg.mode {
                SynthMode::Hard => (&shared_base, drift(cfg, q), rng.gen_range(0.0..std::f64::consts::TAU)),
                SynthMode::Easy => (&class_bases[q], 0.0, 0.0),
            };
            let frames = (0..cfg.length)
                .map(|t| {
                    let r = plane_rotation(&planes, omega * t as f64 + phase);
                    perturb(&mut rng, &sym_part(&(&r * base * r.transpose())), cfg.noise)
                })
                .collect::<Result<Vec<_>>>()?;
            items.push(LabeledSequence { seq: SpdSequence::new(frames)?, label: q });
        }
    }
    let manifest = Manifest {
        class_names: (0..cfg.classes).map(|q| format!("class{q}")).collect(),
        dim: n,
        length: cfg.length,
        provenance: "synthetic".into(),
        construction: serde_json::to_value(cfg)?,
        seed: Some(cfg.seed),
    };
    LabeledDataset::new(items, manifest)
}

/// Synthetic multichannel signals whose channel correlation depends on the
/// class: `x_t = M_q z_t` with `z` a unit-variance AR(1) process and
/// `M_q = I + α u_q u_qᵀ` for a random unit vector `u_q` per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSeriesConfig {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub length: usize,
    pub seed: u64,
    pub mixing: f64,
    pub ar: f64,
}

impl Default for SynthSeriesConfig {
    fn default() -> Self {
        SynthSeriesConfig {
            classes: 2,
            per_class: 40,
            channels: 6,
            length: 60,
            seed: 11,
            mixing: 1.0,
            ar: 0.5,
        }
    }
}

pub fn synth_timeseries(cfg: &SynthSeriesConfig) -> Result<Vec<(TimeSeries, usize)>> {
    if cfg.classes == 0 || cfg.per_class == 0 || cfg.channels == 0 || cfg.length == 0 {
        return Err(GeoError::param("all sizes must be positive"));
    }
    if !(cfg.ar.abs() < 1.0) {
        return Err(GeoError::param("AR coefficient must lie in (−1, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.channels;
    let mixes: Vec<Mat> = (0..cfg.classes)
        .map(|_| {
            let u = sample::gaussian(&mut rng, n, 1);
            let u = &u / u.norm();
            Mat::identity(n, n) + &u * u.transpose() * cfg.mixing
        })
        .collect();
    let innov = (1.0 - cfg.ar * cfg.ar).sqrt();
    let mut out = Vec::with_capacity(cfg.classes * cfg.per_class);
    for (q, m) in mixes.iter().enumerate() {
        for _ in 0..cfg.per_class {
            let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut values = Mat::zeros(n, cfg.length);
            for t in 0..cfg.length {
                if t > 0 {
                    for zi in z.iter_mut() {
                        *zi = cfg.ar * *zi + innov * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                let x = m * nalgebra::DVector::from_column_slice(&z);
                values.set_column(t, &x);
            }
            out.push((TimeSeries::new(values)?, q));
        }
    }
    Ok(out)
}
