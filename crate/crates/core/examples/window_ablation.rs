//! Sliding-window ablation on synthetic multichannel signals.
//!
//! Builds correlation sequences for several window lengths and reports the
//! cross-validated accuracy of each.
//!
//! ```text
//! cargo run --release --example window_ablation -- [epochs] [folds] [windows...]
//! ```

use std::time::Instant;

use geodyn::data::{sliding_window_fc, synth_timeseries, SynthSeriesConfig};
use geodyn::sequence::LabeledSequence;
use geodyn::ssm::{Mode, ModelConfig};
use geodyn::train::{cross_validate, TrainConfig};

fn main() -> geodyn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(15);
    let folds = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut windows: Vec<usize> = args.iter().skip(2).filter_map(|s| s.parse().ok()).collect();
    if windows.is_empty() {
        windows = vec![5, 15, 25];
    }

    let series = synth_timeseries(&SynthSeriesConfig::default())?;
    let channels = series[0].0.channels();
    let model = ModelConfig { dim: channels, classes: 2, layers: 2, lag: 4, ..Default::default() };
    let cfg = TrainConfig { epochs, lr: 1e-2, batch_size: 16, seed: 7, folds, ..Default::default() };

    for w in windows {
        let start = Instant::now();
        let data = series
            .iter()
            .map(|(ts, label)| Ok(LabeledSequence { seq: sliding_window_fc(ts, w, 0.1)?.seq, label: *label }))
            .collect::<geodyn::Result<Vec<_>>>()?;
        let cv = cross_validate(&model, &cfg, &data, Mode::Convolutional, |_| {})?;
        let per_fold: Vec<String> = cv.folds.iter().map(|f| format!("{:.2}", f.test.accuracy)).collect();
        println!(
            "window {w:>3}: accuracy {}  folds [{}]  ({:.1} s)",
            cv.accuracy.percent(),
            per_fold.join(" "),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
