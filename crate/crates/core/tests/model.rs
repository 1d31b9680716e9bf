use geodyn::manifold::{stein_wfm, translate, OrthogonalMatrix};
use geodyn::sample;
use geodyn::sequence::SpdSequence;
use geodyn::spd::{Mat, SpdMatrix};
use geodyn::ssm::{
    discretize, final_output, lag_weights, model_forward, observe, run_recurrent, state_update, InitialState, Mode,
    ModelConfig, ModelParams,
};
use geodyn::train::{decode_checkpoint, encode_checkpoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(n: usize, seed: u64, layers: usize) -> (ModelParams, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig { dim: n, classes: 3, layers, lag: 2, init_scale: 0.4, ..Default::default() };
    let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
    let flat: Vec<f64> = p.flatten().iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
    p.assign(&flat).unwrap();
    (p, rng)
}

fn seq(rng: &mut ChaCha8Rng, n: usize, t: usize) -> SpdSequence {
    SpdSequence::new((0..t).map(|_| sample::spd(rng, n)).collect()).unwrap()
}

fn close(a: &SpdMatrix, b: &SpdMatrix, tol: f64) -> bool {
    (a.as_matrix() - b.as_matrix()).norm() <= tol * (1.0 + b.as_matrix().norm())
}

#[test]
fn recurrence_without_action_commutes_with_rotations() {
    let (mut p, mut rng) = model(4, 1, 2);
    for l in &mut p.layers {
        l.action = Mat::zeros(4, 4);
    }
    let x = seq(&mut rng, 4, 6);
    let g = OrthogonalMatrix::new(sample::orthogonal(&mut rng, 4)).unwrap();
    let moved = SpdSequence::new(x.iter().map(|m| translate(m, &g).unwrap()).collect()).unwrap();
    let y = run_recurrent(&x, &p).unwrap();
    let yg = run_recurrent(&moved, &p).unwrap();
    for (a, b) in yg.iter().zip(y.iter()) {
        assert!(close(a, &translate(b, &g).unwrap(), 1e-8));
    }
}

#[test]
fn state_update_without_action_is_the_weighted_mean() {
    let (mut p, mut rng) = model(3, 2, 1);
    p.layers[0].action = Mat::zeros(3, 3);
    let states = seq(&mut rng, 3, 2).into_vec();
    let inputs = seq(&mut rng, 3, 3).into_vec();
    let s = state_update(&states, &inputs, &p, 0).unwrap();
    let (at, _) = discretize(p.dynamics.a, p.dynamics.b, p.dynamics.step).unwrap();
    let w = lag_weights(at, 2, &p.dynamics.logits_a).unwrap();
    let newest_first: Vec<SpdMatrix> = states.iter().rev().cloned().collect();
    let want = stein_wfm(&newest_first, &w, p.wfm_tol, p.wfm_max_iter).unwrap();
    assert!(close(&s, &want, 1e-12));
    let too_long = seq(&mut rng, 3, 4).into_vec();
    assert!(state_update(&too_long, &inputs, &p, 0).is_err());
    assert!(observe(&too_long, &inputs, &p, 0).is_err());
    assert!(observe(&states, &inputs, &p, 0).is_ok());
}

#[test]
fn identity_initial_state_freezes_the_recurrence() {
    let (mut p, mut rng) = model(3, 3, 1);
    p.initial_state = InitialState::Identity;
    let y = run_recurrent(&seq(&mut rng, 3, 5), &p).unwrap();
    for m in &y {
        assert!(close(m, &SpdMatrix::identity(3), 1e-12));
    }
}

#[test]
fn scalar_model_outputs_stay_within_the_input_range() {
    let (p, mut rng) = model(1, 4, 1);
    let x = seq(&mut rng, 1, 8);
    let lo = x.iter().map(|m| m.as_matrix()[(0, 0)]).fold(f64::INFINITY, f64::min);
    let hi = x.iter().map(|m| m.as_matrix()[(0, 0)]).fold(0.0, f64::max);
    for m in &run_recurrent(&x, &p).unwrap() {
        let v = m.as_matrix()[(0, 0)];
        assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12), "{v} outside [{lo}, {hi}]");
    }
}

#[test]
fn probabilities_are_a_distribution_in_both_modes() {
    let (p, mut rng) = model(5, 5, 2);
    let x = seq(&mut rng, 5, 7);
    for mode in [Mode::Recurrent, Mode::Convolutional] {
        let probs = model_forward(&x, &p, mode).unwrap();
        assert_eq!(probs.len(), 3);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(final_output(&x, &p, mode).unwrap().min_eigenvalue() > 0.0);
    }
}

#[test]
fn checkpoint_preserves_predictions() {
    let (p, mut rng) = model(4, 6, 2);
    let x = seq(&mut rng, 4, 5);
    let back = decode_checkpoint(&encode_checkpoint(&p)).unwrap();
    assert_eq!(back, p);
    for mode in [Mode::Recurrent, Mode::Convolutional] {
        assert_eq!(model_forward(&x, &back, mode).unwrap(), model_forward(&x, &p, mode).unwrap());
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let (p, mut rng) = model(4, 7, 1);
    assert!(run_recurrent(&seq(&mut rng, 3, 4), &p).is_err());
    let cfg = ModelConfig { lag: 0, ..Default::default() };
    assert!(cfg.validate().is_err());
}
