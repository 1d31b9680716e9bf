use crate::autodiff::GradTape;
use crate::error::{GeoError, Result};
use crate::manifold::DEFAULT_EPS;
use crate::spd::{Mat, SpdMatrix};

use super::graph;

/// Soft mask `exp∘(pad(R)) / max exp∘(pad(R))` with entrywise `exp`, at the
/// padded size `N + 2p`. Entries lie in `(0, 1]`.
pub fn spa_attention(resp: &SpdMatrix, pad: usize, rho: f64) -> Result<Mat> {
    if !(rho > 0.0) {
        return Err(GeoError::param(format!("attention diagonal must be positive, got {rho}")));
    }
    let mut tape = GradTape::new();
    let r = tape.leaf(resp.as_matrix().clone());
    let (full, _) = graph::attention_mask(&mut tape, r, pad, rho)?;
    Ok(tape.value(full).clone())
}

/// Attention product together with whether the SPD guard had to lift it.
#[derive(Clone, Debug)]
pub struct Attended {
    pub output: SpdMatrix,
    pub guard_fired: bool,
}

/// `sym(δ ∘ R)`, lifted by `(|λ_min| + eps)·I` when it is not SPD. A mask
/// larger than `R` (a padded mask) is cropped to its central block.
pub fn apply_attention_guarded(mask: &Mat, resp: &SpdMatrix, eps: f64) -> Result<Attended> {
    let n = resp.dim();
    if mask.nrows() != mask.ncols() || mask.nrows() < n || (mask.nrows() - n) % 2 != 0 {
        return Err(GeoError::dim(format!(
            "mask of shape {:?} for a {n}x{n} response",
            mask.shape()
        )));
    }
    let mut tape = GradTape::new();
    let m = tape.leaf(mask.clone());
    let m = tape.crop(m, (mask.nrows() - n) / 2, n)?;
    let r = tape.leaf(resp.as_matrix().clone());
    let out = graph::attend(&mut tape, m, r, eps)?;
    Ok(Attended {
        output: SpdMatrix::new_unchecked(tape.value(out).clone()),
        guard_fired: tape.guard_stats().1 > 0,
    })
}

pub fn apply_attention(mask: &Mat, resp: &SpdMatrix) -> Result<SpdMatrix> {
    apply_attention_guarded(mask, resp, DEFAULT_EPS).map(|a| a.output)
}
