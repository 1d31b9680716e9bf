//! Train on a small synthetic dataset, save a checkpoint, reload and evaluate.

use geodyn::data::{synth_generate, SynthConfig};
use geodyn::ssm::{Mode, ModelConfig, ModelParams};
use geodyn::train::{evaluate, load_checkpoint, save_checkpoint, train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geodyn::Result<()> {
    let ds = synth_generate(&SynthConfig { per_class: 20, dim: 6, length: 16, ..Default::default() })?;
    let cfg = ModelConfig { dim: 6, classes: ds.classes(), ..Default::default() };
    let mut params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1))?;
    let tc = TrainConfig { epochs: 10, lr: 1e-2, ..Default::default() };
    let idx: Vec<usize> = (0..ds.len()).collect();
    let hist = train(&mut params, &ds.items, &idx, Mode::Convolutional, &tc, |e, l| println!("epoch {:>2}: loss {l:.4}", e + 1))?;
    println!("final loss {:.4}", hist.final_loss);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.gdyn");
    save_checkpoint(&path, &params)?;
    let back = load_checkpoint(&path)?;
    let m = evaluate(&back, &ds.items, Mode::Convolutional)?;
    println!("reloaded: accuracy {:.3}, macro-F1 {:.3}, confusion {:?}", m.accuracy, m.macro_f1, m.confusion);
    Ok(())
}
