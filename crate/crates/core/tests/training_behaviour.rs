use compgen_core::datagen::{generate_dataset, Condition, Dataset, Split};
use compgen_core::evaluation::evaluate;
use compgen_core::model::ModelConfig;
use compgen_core::training::{plateau_schedule, train_run, PlateauScheduler, TrainConfig};
use proptest::prelude::*;

fn small_sets(n_train: usize, n_val: usize) -> (Dataset, Dataset) {
    let cell = Condition::default();
    let train = generate_dataset(&cell, n_train, Split::Train, 6, 0.5).unwrap();
    let val = generate_dataset(&cell, n_val, Split::Validation, 6, 0.5).unwrap();
    (train, val)
}

fn tiny_model() -> ModelConfig {
    ModelConfig { vision_out: 4, hidden: 12, ..ModelConfig::desk(true) }
}

#[test]
fn identical_seeds_train_identically() {
    let (train, val) = small_sets(12, 8);
    let cfg = TrainConfig { max_epochs: 3, batch_size: 4, seed: 9, ..TrainConfig::default() };
    let (a, ha) = train_run(&train, &val, tiny_model(), &cfg).unwrap();
    let (b, hb) = train_run(&train, &val, tiny_model(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let (c, _) = train_run(&train, &val, tiny_model(), &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn returned_weights_reproduce_the_best_validation_loss() {
    let (train, val) = small_sets(12, 8);
    let cfg = TrainConfig { max_epochs: 6, batch_size: 4, lr: 3e-3, seed: 2, ..TrainConfig::default() };
    let (params, history) = train_run(&train, &val, tiny_model(), &cfg).unwrap();
    assert_eq!(history.epochs.len(), 6);
    let best = history.best().unwrap();
    assert!(history.epochs.iter().all(|e| e.val_loss >= best.val_loss));
    let again = evaluate(&val.episodes, &params).unwrap();
    assert!((again.loss - best.val_loss).abs() < 1e-9, "{} vs {}", again.loss, best.val_loss);
    let mut csv = Vec::new();
    history.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
}

#[test]
fn modality_mismatch_is_rejected() {
    let (train, val) = small_sets(8, 8);
    let cfg = TrainConfig { max_epochs: 1, ..TrainConfig::default() };
    assert!(train_run(&train, &val, ModelConfig::desk(false), &cfg).is_err());
}

#[test]
fn scripted_history_decays_exactly_once() {
    let cfg = TrainConfig::default();
    let mut s = PlateauScheduler::new(1e-3);
    let mut lrs = Vec::new();
    for l in [0.8, 0.9, 0.9, 0.85, 0.81, 0.82, 0.7] {
        lrs.push(s.observe(l, &cfg));
    }
    assert_eq!(&lrs[..5], &[1e-3; 5]);
    assert_eq!(lrs[5], 1e-3 * 0.1);
    assert_eq!(lrs[6], 1e-3 * 0.1);
}

proptest! {
    #[test]
    fn improving_histories_never_decay(start in 1.0f64..10.0, steps in prop::collection::vec(1e-3f64..0.5, 1..40)) {
        let mut l = start;
        let hist: Vec<f64> = steps.iter().map(|d| { l -= d; l }).collect();
        prop_assert_eq!(plateau_schedule(&hist, 1e-3, &TrainConfig::default()), 1e-3);
    }

    #[test]
    fn flat_histories_decay_once_per_patience_window(k in 0usize..4, extra in 0usize..5) {
        let cfg = TrainConfig::default();
        let hist = vec![1.0; 1 + 5 * k + extra];
        let expected = (1e-3 * 0.1f64.powi(k as i32)).max(cfg.min_lr);
        let got = plateau_schedule(&hist, 1e-3, &cfg);
        prop_assert!((got - expected).abs() <= 1e-15 * expected.max(1.0));
    }
}
