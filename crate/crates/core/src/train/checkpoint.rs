//! `GDYN` checkpoint files.
//!
//! Layout, all integers `u32` and all values `f64`, little-endian:
//! magic `GDYN`, version, field count, then per field a shape header
//! (`ndim`, `dims…`) followed by the row-major values, and a CRC32 of
//! everything before the trailer. Fields, in order:
//!
//! | field | shape |
//! |---|---|
//! | model hyperparameters `[N, Q, layers, τ, Δ, wfm_tol, wfm_max_iter, initial_state]` | `[8]` |
//! | per-layer hyperparameters `[θ, ε, p, ρ, attention]` | `[L, 5]` |
//! | `a`, `b` | `[1]` each |
//! | lag logits A, B, C, D | `[τ]`, `[τ+1]` ×3 |
//! | per layer: kernel factor `Z`, action generator `W` | `[θ, θ]`, `[N, N]` |
//! | readout weights | `[Q, N(N+1)/2]` |

use std::path::Path;

use crate::error::{GeoError, Result};
use crate::fsutil::{check_crc, write_atomic, Cursor};
use crate::manifold::ConvKernelFactor;
use crate::spd::Mat;
use crate::ssm::{DynamicsParams, InitialState, LayerParams, ModelParams, ReadoutParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GDYN";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Field {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn vector(data: Vec<f64>) -> Field {
    Field { shape: vec![data.len()], data }
}

fn matrix(m: &Mat) -> Field {
    let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    Field { shape: vec![m.nrows(), m.ncols()], data }
}

fn fields(p: &ModelParams) -> Vec<Field> {
    let dy = &p.dynamics;
    let init = match p.initial_state {
        InitialState::Identity => 0.0,
        InitialState::FirstInput => 1.0,
    };
    let mut out = vec![vector(vec![
        p.dim as f64,
        p.classes() as f64,
        p.layers.len() as f64,
        dy.lag as f64,
        dy.step,
        p.wfm_tol,
        p.wfm_max_iter as f64,
        init,
    ])];
    let mut layer_hyper = Vec::new();
    for l in &p.layers {
        layer_hyper.extend([
            l.conv.size() as f64,
            l.conv.eps(),
            l.attn_pad as f64,
            l.attn_rho,
            if l.attention { 1.0 } else { 0.0 },
        ]);
    }
    out.push(Field { shape: vec![p.layers.len(), 5], data: layer_hyper });
    out.push(vector(vec![dy.a]));
    out.push(vector(vec![dy.b]));
    out.push(vector(dy.logits_a.clone()));
    out.push(vector(dy.logits_b.clone()));
    out.push(vector(dy.logits_c.clone()));
    out.push(vector(dy.logits_d.clone()));
    for l in &p.layers {
        out.push(matrix(l.conv.factor()));
        out.push(matrix(&l.action));
    }
    out.push(matrix(&p.readout.weights));
    out
}

pub fn encode_checkpoint(p: &ModelParams) -> Vec<u8> {
    let fs = fields(p);
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(fs.len() as u32).to_le_bytes());
    for f in &fs {
        buf.extend_from_slice(&(f.shape.len() as u32).to_le_bytes());
        for &d in &f.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &f.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn read_field(c: &mut Cursor<'_>) -> Result<Field> {
    let ndim = c.u32()? as usize;
    if ndim == 0 || ndim > 2 {
        return Err(GeoError::Format(format!("field of rank {ndim}")));
    }
    let shape = (0..ndim).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let count: usize = shape.iter().product();
    if count > c.remaining() / 8 {
        return Err(GeoError::Format("field larger than the file".into()));
    }
    let data = (0..count).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    Ok(Field { shape, data })
}

fn expect_shape(f: &Field, shape: &[usize], what: &str) -> Result<()> {
    if f.shape != shape {
        return Err(GeoError::Format(format!("{what}: shape {:?}, expected {shape:?}", f.shape)));
    }
    Ok(())
}

fn to_usize(v: f64, what: &str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(GeoError::Format(format!("{what} is not a count: {v}")));
    }
    Ok(v as usize)
}

fn to_matrix(f: &Field) -> Mat {
    Mat::from_row_slice(f.shape[0], f.shape[1], &f.data)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(GeoError::Format("not a GDYN checkpoint".into()));
    }
    let body = check_crc(bytes, "checkpoint")?;
    let mut c = Cursor::new(body, "checkpoint");
    c.take(4)?;
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(GeoError::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = c.u32()? as usize;
    let mut fs = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        fs.push(read_field(&mut c)?);
    }
    if c.remaining() != 0 {
        return Err(GeoError::Format("trailing bytes after the last field".into()));
    }
    let mut it = fs.into_iter();
    let mut next = |what: &str| it.next().ok_or_else(|| GeoError::Format(format!("missing field {what}")));

    let hyper = next("hyperparameters")?;
    expect_shape(&hyper, &[8], "hyperparameters")?;
    let h = &hyper.data;
    let n = to_usize(h[0], "dimension")?;
    let q = to_usize(h[1], "class count")?;
    let layers = to_usize(h[2], "layer count")?;
    let lag = to_usize(h[3], "lag")?;
    let initial_state = match h[7] {
        v if v == 0.0 => InitialState::Identity,
        v if v == 1.0 => InitialState::FirstInput,
        v => return Err(GeoError::Format(format!("unknown initial state {v}"))),
    };
    let lh = next("layer hyperparameters")?;
    expect_shape(&lh, &[layers, 5], "layer hyperparameters")?;
    let mut scalar = |what: &str| -> Result<f64> {
        let f = next(what)?;
        expect_shape(&f, &[1], what)?;
        Ok(f.data[0])
    };
    let a = scalar("a")?;
    let b = scalar("b")?;
    let mut logits = |what: &str, len: usize| -> Result<Vec<f64>> {
        let f = next(what)?;
        expect_shape(&f, &[len], what)?;
        Ok(f.data)
    };
    let logits_a = logits("logits A", lag)?;
    let logits_b = logits("logits B", lag + 1)?;
    let logits_c = logits("logits C", lag + 1)?;
    let logits_d = logits("logits D", lag + 1)?;
    let mut layer_params = Vec::with_capacity(layers);
    for l in 0..layers {
        let row = &lh.data[5 * l..5 * l + 5];
        let theta = to_usize(row[0], "kernel size")?;
        let z = next("kernel factor")?;
        expect_shape(&z, &[theta, theta], "kernel factor")?;
        let w = next("action generator")?;
        expect_shape(&w, &[n, n], "action generator")?;
        layer_params.push(LayerParams {
            conv: ConvKernelFactor::new(to_matrix(&z), row[1])?,
            action: to_matrix(&w),
            attn_pad: to_usize(row[2], "attention pad")?,
            attn_rho: row[3],
            attention: row[4] != 0.0,
        });
    }
    let r = next("readout")?;
    expect_shape(&r, &[q, n * (n + 1) / 2], "readout")?;
    if it.next().is_some() {
        return Err(GeoError::Format("unexpected extra fields".into()));
    }
    let p = ModelParams {
        dim: n,
        dynamics: DynamicsParams { a, b, step: h[4], lag, logits_a, logits_b, logits_c, logits_d },
        layers: layer_params,
        readout: ReadoutParams { weights: to_matrix(&r) },
        wfm_tol: h[5],
        wfm_max_iter: to_usize(h[6], "wFM iteration cap")?,
        initial_state,
    };
    p.validate()?;
    Ok(p)
}

pub fn save_checkpoint(path: &Path, p: &ModelParams) -> Result<()> {
    write_atomic(path, &encode_checkpoint(p))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&std::fs::read(path)?)
}
