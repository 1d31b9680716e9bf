//! Attention masks of the convolutional path and their strongest edges.

use geodyn::cli::top_edges;
use geodyn::sample;
use geodyn::sequence::SpdSequence;
use geodyn::ssm::{attention_trace, ModelConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geodyn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = ModelParams::init(&ModelConfig { dim: 6, ..Default::default() }, &mut rng)?;
    let seq = SpdSequence::new((0..10).map(|_| sample::spd(&mut rng, 6)).collect())?;
    let trace = attention_trace(&seq, &params)?;
    println!("guard fired {} of {} times", trace.guard_fires, trace.guard_checks);
    for layer in 0..params.layers.len() {
        let mean = trace.mean_mask(layer).expect("attention is on");
        println!("layer {layer}: mean mask\n{mean:.3}");
        for (i, j, w) in top_edges(&mean, 5) {
            println!("  ({i}, {j}) {w:.4}");
        }
    }
    Ok(())
}
