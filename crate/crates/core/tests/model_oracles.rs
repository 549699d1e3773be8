use compgen_core::autodiff::{Tape, Tensor};
use compgen_core::datagen::{generate_dataset, Condition, Episode, Split};
use compgen_core::evaluation::evaluate;
use compgen_core::model::{
    episode_loss_and_grads, lstm_step_values, vision_encode, Dropout, InputMode, LstmState, ModelConfig, ModelParams,
    ParamVars,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mini_config(joints: bool) -> ModelConfig {
    ModelConfig { vision_out: 3, hidden: 4, dropout: 0.0, ..ModelConfig::desk(joints) }
}

fn short_episode(frames: std::ops::Range<usize>) -> Episode {
    let mut ep = generate_dataset(&Condition::default(), 8, Split::Train, 21, 0.0).unwrap().episodes.remove(0);
    ep.frames = ep.frames[frames].to_vec();
    ep
}

#[test]
fn single_cell_matches_hand_computation() {
    let cfg = ModelConfig { vision_out: 1, hidden: 1, ..ModelConfig::desk(false) };
    let mut params = ModelParams::zeros(cfg).unwrap();
    let width = cfg.input_width();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w: Vec<f64> = (0..4 * (width + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    params.tensors[2].data_mut().copy_from_slice(&w);
    params.tensors[3].data_mut().copy_from_slice(&b);
    let x: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let state = LstmState { h: vec![0.3], c: vec![-0.7] };

    let mut xh = x.clone();
    xh.push(0.3);
    let pre = |gate: usize| -> f64 {
        b[gate] + (0..=width).map(|j| w[gate * (width + 1) + j] * xh[j]).sum::<f64>()
    };
    let (i, f, g, o) = (sigmoid(pre(0)), sigmoid(pre(1)), pre(2).tanh(), sigmoid(pre(3)));
    let c = f * -0.7 + i * g;
    let h = o * c.tanh();

    let got = lstm_step_values(&x, &state, &params).unwrap();
    assert!((got.c[0] - c).abs() < 1e-12, "{} vs {c}", got.c[0]);
    assert!((got.h[0] - h).abs() < 1e-12, "{} vs {h}", got.h[0]);
}

#[test]
fn unrolled_gradients_match_central_differences() {
    let ep = short_episode(19..21);
    let mut params = ModelParams::init(mini_config(true), 8).unwrap();
    let (_, grads) = episode_loss_and_grads(&ep, &params, InputMode::Recorded, Dropout::Off).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let eps = 1e-5;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for t in 0..6 {
        for _ in 0..40 {
            let k = rng.gen_range(0..params.tensors[t].len());
            let orig = params.tensors[t].data()[k];
            params.tensors[t].data_mut()[k] = orig + eps;
            let (up, _) = episode_loss_and_grads(&ep, &params, InputMode::Recorded, Dropout::Off).unwrap();
            params.tensors[t].data_mut()[k] = orig - eps;
            let (down, _) = episode_loss_and_grads(&ep, &params, InputMode::Recorded, Dropout::Off).unwrap();
            params.tensors[t].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads[t][k];
            // Coordinates with a vanishing gradient are compared absolutely.
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    assert!(checked >= 200);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn dropout_keeps_half_and_preserves_the_mean() {
    let n = 20_000;
    let mut tape = Tape::new();
    let px = tape.constant(vec![1.0]);
    let w = tape.leaf(&Tensor::matrix(n, 1, vec![1.0; n]).unwrap());
    let b = tape.leaf(&Tensor::vector(vec![0.0; n]));
    let p = ParamVars([w, b, w, b, w, b]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = vision_encode(&mut tape, px, &p, 0.5, &mut Dropout::On(&mut rng)).unwrap();
    let v = tape.value(out);
    let kept = v.iter().filter(|&&x| x != 0.0).count() as f64 / n as f64;
    assert!((kept - 0.5).abs() < 0.02, "kept {kept}");
    let mean = v.iter().sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    assert!(v.iter().all(|&x| x == 0.0 || (x - 2.0).abs() < 1e-15));

    let mut tape = Tape::new();
    let px = tape.constant(vec![1.0]);
    let w = tape.leaf(&Tensor::matrix(n, 1, vec![1.0; n]).unwrap());
    let b = tape.leaf(&Tensor::vector(vec![0.0; n]));
    let p = ParamVars([w, b, w, b, w, b]);
    let out = vision_encode(&mut tape, px, &p, 0.5, &mut Dropout::Off).unwrap();
    assert!(tape.value(out).iter().all(|&x| x == 1.0));
}

#[test]
fn evaluation_does_not_depend_on_episode_order() {
    let episodes = generate_dataset(&Condition::default(), 24, Split::Validation, 2, 0.5).unwrap().episodes;
    let params = ModelParams::init(ModelConfig { hidden: 16, ..ModelConfig::desk(true) }, 1).unwrap();
    let a = evaluate(&episodes, &params).unwrap();
    let mut shuffled = episodes.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let b = evaluate(&shuffled, &params).unwrap();
    assert_eq!(a.sentence_accuracy, b.sentence_accuracy);
    assert!((a.frame_accuracy - b.frame_accuracy).abs() < 1e-12);
    assert!((a.loss - b.loss).abs() < 1e-12);
}

#[test]
fn checkpoints_round_trip() {
    let params = ModelParams::init(mini_config(false), 77).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.params");
    params.save(&path, &[("note".into(), "x".into())]).unwrap();
    assert_eq!(ModelParams::load(&path).unwrap(), params);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hidden_state_stays_bounded(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let cfg = ModelConfig { vision_out: 2, hidden: 5, ..ModelConfig::desk(true) };
        let mut params = ModelParams::init(cfg, seed).unwrap();
        for v in params.tensors[2].data_mut() {
            *v *= scale;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = LstmState::zeros(5);
        for _ in 0..6 {
            let x: Vec<f64> = (0..cfg.input_width()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            state = lstm_step_values(&x, &state, &params).unwrap();
            prop_assert!(state.h.iter().all(|h| h.abs() <= 1.0));
            prop_assert!(state.c.iter().all(|c| c.is_finite()));
        }
    }
}
