//! Cross-validated classification of isospectral synthetic trajectories.
//!
//! ```text
//! cargo run --release --example synth_classification -- [epochs] [folds] [recurrent|convolutional]
//! ```

use geodyn::data::{synth_generate, SynthConfig};
use geodyn::ssm::{Mode, ModelConfig};
use geodyn::train::{cross_validate, TrainConfig};

fn main() -> geodyn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().and_then(|s| s.parse().ok()).unwrap_or(15);
    let folds = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mode: Mode = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(Mode::Convolutional);

    let ds = synth_generate(&SynthConfig::default())?;
    let model = ModelConfig { dim: ds.manifest.dim, classes: ds.classes(), layers: 2, lag: 4, ..Default::default() };
    let cfg = TrainConfig { epochs, lr: 1e-2, batch_size: 16, seed: 7, folds, ..Default::default() };
    let cv = cross_validate(&model, &cfg, &ds.items, mode, |f| {
        println!("fold {:>2}: accuracy {:.3}, train loss {:.4}", f.fold, f.test.accuracy, f.history.final_loss)
    })?;
    println!("accuracy {}  macro-precision {}  macro-F1 {}", cv.accuracy.percent(), cv.macro_precision.percent(), cv.macro_f1.percent());
    Ok(())
}
