use geodyn::sample;
use geodyn::sequence::{LabeledSequence, SpdSequence};
use geodyn::ssm::{Mode, ModelConfig, ModelParams};
use geodyn::train::{finite_diff_flat, grad, loss_and_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, layers: usize) -> (ModelParams, Vec<LabeledSequence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig { dim: 3, classes: 2, layers, lag: 2, wfm_tol: 1e-12, init_scale: 0.3, ..Default::default() };
    let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
    let flat: Vec<f64> = p.flatten().iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
    p.assign(&flat).unwrap();
    let data = (0..2)
        .map(|i| LabeledSequence {
            seq: SpdSequence::new((0..4).map(|_| sample::spd(&mut rng, 3)).collect()).unwrap(),
            label: i,
        })
        .collect();
    (p, data)
}

#[test]
fn two_layer_gradients_match_central_differences() {
    for mode in [Mode::Recurrent, Mode::Convolutional] {
        let (p, data) = instance(11, 2);
        let batch: Vec<&LabeledSequence> = data.iter().collect();
        let (_, ad) = loss_and_grad(&p, &batch, mode).unwrap();
        let fd = finite_diff_flat(&p, &batch, mode, 1e-5).unwrap();
        for fam in p.families() {
            for i in fam.range.clone() {
                let err = (ad[i] - fd[i]).abs();
                assert!(err <= 1e-7 || err <= 1e-4 * fd[i].abs(), "{mode} {} [{i}]: {} vs {}", fam.name, ad[i], fd[i]);
            }
        }
    }
}

#[test]
fn convolutional_path_ignores_recurrent_parameters() {
    let (p, data) = instance(12, 1);
    let batch: Vec<&LabeledSequence> = data.iter().collect();
    let g = grad(&p, &batch, Mode::Convolutional).unwrap();
    assert_eq!(g.dynamics.b, 0.0);
    assert!(g.dynamics.logits_a.iter().chain(&g.dynamics.logits_b).chain(&g.dynamics.logits_d).all(|&v| v == 0.0));
    assert!(g.layers.iter().all(|l| l.action.iter().all(|&v| v == 0.0)));
}
