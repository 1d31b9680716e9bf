use std::io::Read;
use std::path::Path;

use crate::error::{GeoError, Result};
use crate::sequence::SpdSequence;
use crate::spd::{Mat, SpdMatrix};

/// Multichannel signal, one row per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    values: Mat,
}

impl TimeSeries {
    /// `values` is `channels × length`.
    pub fn new(values: Mat) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(GeoError::dim("empty time series"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::domain("time series contains non-finite values"));
        }
        Ok(TimeSeries { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.len());
        if let Some(i) = rows.iter().position(|r| r.len() != len) {
            return Err(GeoError::dim(format!("channel {i} has {} samples, expected {len}", rows[i].len())));
        }
        Self::new(Mat::from_fn(rows.len(), len, |i, j| rows[i][j]))
    }

    /// CSV with one row per channel; a first row whose first field is not a
    /// number is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| GeoError::Format(e.to_string()))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                continue;
            }
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| GeoError::Format(format!("row {}: '{f}' is not a number", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }
}

/// Constructed sequence plus the number of degenerate windows met on the way.
#[derive(Clone, Debug, PartialEq)]
pub struct Constructed {
    pub seq: SpdSequence,
    pub warnings: usize,
}

/// `[t − w/2, t + w/2]` clipped to `0..len`.
pub(crate) fn centered_window(t: usize, w: usize, len: usize) -> std::ops::Range<usize> {
    let h = w / 2;
    t.saturating_sub(h)..(t + h + 1).min(len)
}

/// Dynamic functional connectivity: Pearson correlation over a window
/// centred at every time point, shrunk to `(1 − λ)C + λI`.
///
/// Windows are clipped at the ends of the series. A channel that is constant
/// within a window gets unit diagonal and zero correlations there; each such
/// (window, channel) pair counts one warning.
pub fn sliding_window_fc(ts: &TimeSeries, w: usize, shrinkage: f64) -> Result<Constructed> {
    if w < 3 || w % 2 == 0 {
        return Err(GeoError::param(format!("window must be odd and at least 3, got {w}")));
    }
    if ts.len() < w {
        return Err(GeoError::param(format!("series of length {} is shorter than the window {w}", ts.len())));
    }
    if !(shrinkage > 0.0 && shrinkage < 1.0) {
        return Err(GeoError::param(format!("shrinkage must lie in (0, 1), got {shrinkage}")));
    }
    let n = ts.channels();
    let x = ts.values();
    let mut warnings = 0;
    let mut out = Vec::with_capacity(ts.len());
    for t in 0..ts.len() {
        let win = centered_window(t, w, ts.len());
        let m = win.len() as f64;
        let mut dev = Mat::zeros(n, win.len());
        let mut constant = vec![false; n];
        for i in 0..n {
            let row = x.row(i);
            let seg = &row.columns(win.start, win.len());
            let mean = seg.iter().sum::<f64>() / m;
            let (lo, hi) = seg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            constant[i] = lo == hi;
            for (k, v) in seg.iter().enumerate() {
                dev[(i, k)] = v - mean;
            }
        }
        let ss: Vec<f64> = (0..n).map(|i| dev.row(i).iter().map(|v| v * v).sum()).collect();
        for i in 0..n {
            if constant[i] || ss[i] == 0.0 {
                constant[i] = true;
                warnings += 1;
            }
        }
        let mut c = Mat::identity(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let r = if constant[i] || constant[j] {
                    0.0
                } else {
                    let s: f64 = dev.row(i).iter().zip(dev.row(j).iter()).map(|(a, b)| a * b).sum();
                    (s / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0)
                };
                c[(i, j)] = (1.0 - shrinkage) * r;
                c[(j, i)] = c[(i, j)];
            }
        }
        out.push(SpdMatrix::new(c).map_err(|_| GeoError::numeric(format!("window at t = {t} is not SPD")))?);
    }
    Ok(Constructed { seq: SpdSequence::new(out)?, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlated_pair() {
        let a: Vec<f64> = (0..12).map(|t| (t as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v + 1.0).collect();
        let ts = TimeSeries::from_rows(&[a, b]).unwrap();
        let out = sliding_window_fc(&ts, 5, 0.1).unwrap();
        assert_eq!(out.seq.len(), 12);
        for m in &out.seq {
            assert_eq!(m.as_matrix()[(0, 0)], 1.0);
            assert!((m.as_matrix()[(0, 1)] - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_warns() {
        let ts = TimeSeries::from_rows(&[vec![1.0; 6], vec![0.0, 1.0, 0.5, 2.0, 1.0, 3.0]]).unwrap();
        let out = sliding_window_fc(&ts, 3, 0.1).unwrap();
        assert_eq!(out.warnings, 6);
        assert_eq!(out.seq[2].as_matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn csv_header_detection() {
        let csv = "t0,t1,t2\n1,2,3\n4,5,7\n";
        let ts = TimeSeries::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!((ts.channels(), ts.len()), (2, 3));
        let ts = TimeSeries::from_csv_reader("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(ts.channels(), 2);
    }

    #[test]
    fn rejects_short_series() {
        let ts = TimeSeries::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(sliding_window_fc(&ts, 5, 0.1).is_err());
        assert!(sliding_window_fc(&ts, 4, 0.1).is_err());
    }
}
