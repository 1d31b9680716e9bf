use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::sequence::LabeledSequence;
use crate::ssm::{model_forward, Mode, ModelConfig, ModelParams};

use super::optim::{train, TrainConfig, TrainHistory};

/// Accuracy, macro precision and macro F1 from a confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Samples per true class.
    pub class_counts: Vec<usize>,
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let q = confusion.len();
        if q == 0 || confusion.iter().any(|r| r.len() != q) {
            return Err(GeoError::dim("confusion matrix must be square and nonempty"));
        }
        let class_counts: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
        let total: usize = class_counts.iter().sum();
        if total == 0 {
            return Err(GeoError::param("no samples"));
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let correct: usize = (0..q).map(|i| confusion[i][i]).sum();
        let mut prec = 0.0;
        let mut f1 = 0.0;
        for c in 0..q {
            let tp = confusion[c][c];
            let predicted: usize = (0..q).map(|r| confusion[r][c]).sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, class_counts[c]);
            prec += p;
            f1 += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        }
        Ok(Metrics {
            accuracy: ratio(correct, total),
            macro_precision: prec / q as f64,
            macro_f1: f1 / q as f64,
            confusion,
            class_counts,
        })
    }

    pub fn from_predictions(predicted: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != labels.len() {
            return Err(GeoError::dim("prediction and label counts differ"));
        }
        let mut confusion = vec![vec![0; classes]; classes];
        for (&p, &y) in predicted.iter().zip(labels) {
            if p >= classes || y >= classes {
                return Err(GeoError::param(format!("class index out of range ({p}, {y})")));
            }
            confusion[y][p] += 1;
        }
        Self::from_confusion(confusion)
    }
}

/// Index of the largest probability, the lowest index among ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &ModelParams, data: &[LabeledSequence], idx: &[usize], mode: Mode) -> Result<Vec<usize>> {
    let out: Vec<Result<usize>> = idx
        .par_iter()
        .map(|&i| model_forward(&data[i].seq, params, mode).map(|p| argmax(&p)))
        .collect();
    out.into_iter().collect()
}

/// Metrics of the model on `data[idx]`.
pub fn evaluate_subset(params: &ModelParams, data: &[LabeledSequence], idx: &[usize], mode: Mode) -> Result<Metrics> {
    if idx.is_empty() {
        return Err(GeoError::param("nothing to evaluate"));
    }
    let predicted = predict(params, data, idx, mode)?;
    let labels: Vec<usize> = idx.iter().map(|&i| data[i].label).collect();
    Metrics::from_predictions(&predicted, &labels, params.classes())
}

pub fn evaluate(params: &ModelParams, data: &[LabeledSequence], mode: Mode) -> Result<Metrics> {
    let idx: Vec<usize> = (0..data.len()).collect();
    evaluate_subset(params, data, &idx, mode)
}

/// Stratified split of sample indices into `k` folds.
///
/// Each class is shuffled with the seed and dealt round-robin, continuing
/// from the fold where the previous class stopped, so per-class fold sizes
/// differ by at most one and overall fold sizes do too. Every class needs at
/// least `k` samples unless `k` equals the sample count (leave-one-out).
pub fn kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let e = labels.len();
    if k < 2 || k > e {
        return Err(GeoError::param(format!("cannot split {e} samples into {k} folds")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if k < e {
        if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < k) {
            return Err(GeoError::Stratification(format!(
                "class {c} has {} samples, fewer than {k} folds",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = rng.gen_range(0..k);
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// `mean ± std` summary; the std uses the `n − 1` denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }

    /// Percent format, e.g. `72.01 ± 8.51`.
    pub fn percent(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub history: TrainHistory,
    pub test: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub accuracy: MeanStd,
    pub macro_precision: MeanStd,
    pub macro_f1: MeanStd,
}

impl CrossValidation {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&folds.iter().map(|r| f(&r.test)).collect::<Vec<_>>());
        CrossValidation {
            accuracy: pick(|m| m.accuracy),
            macro_precision: pick(|m| m.macro_precision),
            macro_f1: pick(|m| m.macro_f1),
            folds,
        }
    }
}

/// Trains and tests one fold; the model is initialized from `seed + fold`.
pub fn run_fold(
    model: &ModelConfig,
    cfg: &TrainConfig,
    data: &[LabeledSequence],
    folds: &[Vec<usize>],
    fold: usize,
    mode: Mode,
) -> Result<FoldResult> {
    let test = &folds[fold];
    let train_idx: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != fold)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(fold as u64));
    let mut params = ModelParams::init(model, &mut rng)?;
    let fold_cfg = TrainConfig { seed: cfg.seed.wrapping_add(fold as u64), ..cfg.clone() };
    let history = train(&mut params, data, &train_idx, mode, &fold_cfg, |_, _| {})?;
    Ok(FoldResult {
        fold,
        train_size: train_idx.len(),
        test_size: test.len(),
        history,
        test: evaluate_subset(&params, data, test, mode)?,
    })
}

/// Stratified `cfg.folds`-fold cross-validation.
pub fn cross_validate(
    model: &ModelConfig,
    cfg: &TrainConfig,
    data: &[LabeledSequence],
    mode: Mode,
    mut on_fold: impl FnMut(&FoldResult),
) -> Result<CrossValidation> {
    cfg.validate()?;
    let labels: Vec<usize> = data.iter().map(|d| d.label).collect();
    let folds = kfold_split(&labels, cfg.folds, cfg.seed)?;
    let mut results = Vec::with_capacity(folds.len());
    for fold in 0..folds.len() {
        let r = run_fold(model, cfg, data, &folds, fold, mode)?;
        on_fold(&r);
        results.push(r);
    }
    Ok(CrossValidation::from_folds(results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_examples() {
        let m = Metrics::from_predictions(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((m.accuracy, m.macro_precision, m.macro_f1), (1.0, 1.0, 1.0));
        let m = Metrics::from_predictions(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.macro_precision, 0.25);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.class_counts, vec![2, 2]);
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.4]), 1);
    }

    #[test]
    fn kfold_examples() {
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = kfold_split(&labels, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(matches!(kfold_split(&labels, 6, 3), Err(GeoError::Stratification(_))));
        assert_eq!(kfold_split(&labels, 5, 9).unwrap(), kfold_split(&labels, 5, 9).unwrap());
    }

    #[test]
    fn mean_std_format() {
        let s = MeanStd::of(&[0.7, 0.9]);
        assert!((s.mean - 0.8).abs() < 1e-15);
        assert_eq!(s.percent(), "80.00 ± 14.14");
    }
}
