use std::io::Read;
use std::path::Path;

use crate::error::{GeoError, Result};
use crate::sequence::SpdSequence;
use crate::spd::{Mat, SpdMatrix};

use super::timeseries::{centered_window, Constructed};

/// Joint trajectories: `frames[t][j]` is the 3-D position of joint `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonClip {
    frames: Vec<Vec<[f64; 3]>>,
    root: usize,
}

impl SkeletonClip {
    pub fn new(frames: Vec<Vec<[f64; 3]>>, root: usize) -> Result<Self> {
        let joints = frames.first().map_or(0, |f| f.len());
        if frames.is_empty() || joints == 0 {
            return Err(GeoError::dim("empty skeleton clip"));
        }
        if let Some(t) = frames.iter().position(|f| f.len() != joints) {
            return Err(GeoError::dim(format!("frame {t} has {} joints, expected {joints}", frames[t].len())));
        }
        if root >= joints {
            return Err(GeoError::param(format!("root joint {root} of {joints}")));
        }
        if frames.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(GeoError::domain("skeleton clip contains non-finite positions"));
        }
        Ok(SkeletonClip { frames, root })
    }

    /// CSV with one row per frame holding `x, y, z` for every joint in turn;
    /// a first row whose first field is not a number is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R, root: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut frames = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| GeoError::Format(e.to_string()))?;
            if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                continue;
            }
            if rec.len() % 3 != 0 {
                return Err(GeoError::Format(format!("row {} has {} fields, not a multiple of 3", i + 1, rec.len())));
            }
            let vals = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| GeoError::Format(format!("row {}: '{f}' is not a number", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            frames.push(vals.chunks(3).map(|c| [c[0], c[1], c[2]]).collect());
        }
        Self::new(frames, root)
    }

    pub fn from_csv(path: &Path, root: usize) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, root)
    }

    pub fn joints(&self) -> usize {
        self.frames[0].len()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Positions of the non-root joints relative to the root, `3(J − 1)` values.
    pub fn relative_frame(&self, t: usize) -> Vec<f64> {
        let r = self.frames[t][self.root];
        self.frames[t]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.root)
            .flat_map(|(_, p)| (0..3).map(move |c| p[c] - r[c]))
            .collect()
    }
}

/// Per-frame covariance of root-relative joint positions over a centred,
/// clipped window, with the unbiased denominator, plus `εI`.
///
/// A window holding a single frame yields `εI` and counts one warning.
pub fn skeleton_covariance_sequence(clip: &SkeletonClip, w: usize, eps: f64) -> Result<Constructed> {
    if clip.joints() < 2 {
        return Err(GeoError::param("at least two joints are required"));
    }
    if w < 2 {
        return Err(GeoError::param(format!("window must be at least 2, got {w}")));
    }
    if !(eps > 0.0) {
        return Err(GeoError::param("covariance floor must be positive"));
    }
    let rel: Vec<Vec<f64>> = (0..clip.len()).map(|t| clip.relative_frame(t)).collect();
    let d = rel[0].len();
    let mut warnings = 0;
    let mut out = Vec::with_capacity(clip.len());
    for t in 0..clip.len() {
        let win = centered_window(t, w, clip.len());
        let m = win.len();
        let mut cov = Mat::identity(d, d) * eps;
        if m < 2 {
            warnings += 1;
        } else {
            let mut mean = vec![0.0; d];
            for s in win.clone() {
                for (a, v) in mean.iter_mut().zip(&rel[s]) {
                    *a += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            let mut acc = Mat::zeros(d, d);
            for s in win {
                let dv: Vec<f64> = rel[s].iter().zip(&mean).map(|(v, mu)| v - mu).collect();
                for i in 0..d {
                    for j in i..d {
                        acc[(i, j)] += dv[i] * dv[j];
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    let v = acc[(i, j)] / (m - 1) as f64;
                    cov[(i, j)] += v;
                    if i != j {
                        cov[(j, i)] = cov[(i, j)];
                    }
                }
            }
        }
        out.push(SpdMatrix::new(cov).map_err(|_| GeoError::numeric(format!("covariance at t = {t} is not SPD")))?);
    }
    Ok(Constructed { seq: SpdSequence::new(out)?, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_pose_gives_floor() {
        let pose = vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [0.5, -1.0, 0.0]];
        let clip = SkeletonClip::new(vec![pose; 6], 0).unwrap();
        let out = skeleton_covariance_sequence(&clip, 3, 1e-3).unwrap();
        assert_eq!(out.seq.dim(), 6);
        for m in &out.seq {
            assert_eq!(m.as_matrix(), &(Mat::identity(6, 6) * 1e-3));
        }
    }

    #[test]
    fn root_is_excluded() {
        let frames: Vec<Vec<[f64; 3]>> = (0..4)
            .map(|t| vec![[t as f64, 0.0, 0.0], [t as f64 + 1.0, 1.0, 0.0]])
            .collect();
        let clip = SkeletonClip::new(frames, 0).unwrap();
        assert_eq!(clip.relative_frame(3), vec![1.0, 1.0, 0.0]);
        let clip = SkeletonClip::new(vec![vec![[0.0; 3]; 2]; 3], 1).unwrap();
        let out = skeleton_covariance_sequence(&clip, 2, 0.5).unwrap();
        assert_eq!(out.seq.dim(), 3);
    }
}
