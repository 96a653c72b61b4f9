use super::*;
use crate::datasets::make_toy_dataset;
use crate::model::LayerWidths;

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        batch_size: 16,
        epochs: Some(1),
        widths: LayerWidths {
            generator_hidden: 32,
            regressor_hidden: 16,
            coupled_disc_hidden: 8,
            critic_hidden: 24,
        },
        classifier: ClassifierConfig {
            epochs: 5,
            ..ClassifierConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn toy() -> GzslDataset {
    make_toy_dataset(3, 4, 2, 8, 4, 12).unwrap()
}

fn step_inputs(state: &mut TrainState, ds: &GzslDataset) -> (Batch, Array2<f64>) {
    let batch = state.batch_for_step(ds, state.step).unwrap();
    let a_u = state
        .sample_unseen_semantics(ds, batch.labels.len())
        .unwrap();
    (batch, a_u)
}

#[test]
fn separable_classes_are_learned_by_pretraining() {
    // two well-separated blobs per class in 3-d
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let centers = [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]];
    let mut x = Array2::zeros((90, 3));
    let mut y = Vec::new();
    for i in 0..90 {
        let c = i % 3;
        for j in 0..3 {
            x[[i, j]] =
                centers[c][j] + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
        y.push(c);
    }
    let cfg = ClassifierConfig {
        epochs: 200,
        lr: 1e-2,
        batch_size: 16,
    };
    let clf = pretrain_classifier_on(&x.view(), &y, 3, &cfg, 1).unwrap();
    let acc = accuracy(&clf.forward(&x.view()).unwrap(), &y);
    assert!(acc >= 0.99, "{acc}");
    let again = pretrain_classifier_on(&x.view(), &y, 3, &cfg, 1).unwrap();
    assert_eq!(clf, again);
}

#[test]
fn pretraining_rejects_degenerate_inputs() {
    let x = Array2::zeros((4, 2));
    let cfg = ClassifierConfig::default();
    assert!(matches!(
        pretrain_classifier_on(&x.view(), &[0, 0, 0, 0], 1, &cfg, 0),
        Err(Error::Argument(_))
    ));
    let empty = Array2::zeros((0, 2));
    assert!(matches!(
        pretrain_classifier_on(&empty.view(), &[], 3, &cfg, 0),
        Err(Error::Argument(_))
    ));
}

#[test]
fn critic_phase_leaves_generator_untouched() {
    let ds = toy();
    let mut state = TrainState::new(&ds, &small_config(1)).unwrap();
    let (batch, _) = step_inputs(&mut state, &ds);
    let generator = state.model.generator.clone();
    let regressors = state.model.regressors.clone();
    let critic = state.model.critic.clone();
    state
        .critic_update(&batch.features, &batch.semantics)
        .unwrap();
    assert_eq!(state.model.generator, generator);
    assert_eq!(state.model.regressors, regressors);
    assert_ne!(state.model.critic, critic);
}

#[test]
fn group_one_leaves_critic_untouched() {
    let ds = toy();
    let cfg = TrainConfig {
        weights: crate::losses::LossWeights {
            lambda2: 0.0,
            lambda_d: 0.0,
            lambda_cls: 0.0,
            lambda_cen: 0.0,
            ..Default::default()
        },
        ablation: Ablation::WoLG2,
        ..small_config(2)
    };
    let mut state = TrainState::new(&ds, &cfg).unwrap();
    let critic = state.model.critic.clone();
    let generator = state.model.generator.clone();
    state.advance(&ds).unwrap();
    assert_eq!(state.model.critic, critic);
    assert_ne!(state.model.generator, generator);
}

#[test]
fn step_counter_increases_and_losses_are_finite() {
    let ds = toy();
    let mut state = TrainState::new(&ds, &small_config(3)).unwrap();
    for expected in 1..=6 {
        let r = state.advance(&ds).unwrap();
        assert_eq!(state.step, expected);
        assert!(r.to_vec().iter().all(|v| v.is_finite()));
    }
    assert_eq!(state.history.len(), 6);
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let ds = toy();
    let run = || {
        let mut s = TrainState::new(&ds, &small_config(4)).unwrap();
        for _ in 0..5 {
            s.advance(&ds).unwrap();
        }
        s
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a, b);
}

#[test]
fn wo_ld_reports_zero_and_matches_zero_weight() {
    let ds = toy();
    let mut ablated = TrainState::new(
        &ds,
        &TrainConfig {
            ablation: Ablation::WoLd,
            ..small_config(5)
        },
    )
    .unwrap();
    let mut zero_weight = TrainState::new(
        &ds,
        &TrainConfig {
            weights: crate::losses::LossWeights {
                lambda_d: 0.0,
                ..Default::default()
            },
            ..small_config(5)
        },
    )
    .unwrap();
    let mut full = TrainState::new(&ds, &small_config(5)).unwrap();
    for s in [&mut ablated, &mut zero_weight, &mut full] {
        s.advance(&ds).unwrap();
    }
    assert_eq!(ablated.history[0].terms.l_d, 0.0);
    assert_eq!(ablated.model, zero_weight.model);
    assert_ne!(ablated.model.generator, full.model.generator);
    assert_ne!(full.history[0].terms.l_d, 0.0);
}

#[test]
fn ablated_terms_are_reported_as_zero() {
    let ds = toy();
    for (ablation, pick) in [
        (
            Ablation::WoLG2,
            (|r: &LossReport| r.terms.l_g2) as fn(&LossReport) -> f64,
        ),
        (Ablation::WoLcls, |r| r.terms.l_cls),
        (Ablation::WoLcen, |r| r.terms.l_cen),
    ] {
        let mut s = TrainState::new(
            &ds,
            &TrainConfig {
                ablation,
                ..small_config(6)
            },
        )
        .unwrap();
        let r = s.advance(&ds).unwrap();
        assert_eq!(pick(&r), 0.0, "{ablation}");
    }
}

#[test]
fn topology_variants_train() {
    let ds = toy();
    for ablation in [
        Ablation::SharedR,
        Ablation::SeparateDsu,
        Ablation::CoupledGsu,
    ] {
        let mut s = TrainState::new(
            &ds,
            &TrainConfig {
                ablation,
                ..small_config(7)
            },
        )
        .unwrap();
        s.advance(&ds).unwrap();
        s.advance(&ds).unwrap();
        assert!(s
            .history
            .iter()
            .all(|r| r.to_vec().iter().all(|v| v.is_finite())));
    }
}

#[test]
fn combined_update_differs_from_alternate() {
    let ds = toy();
    let mut alt = TrainState::new(&ds, &small_config(8)).unwrap();
    let mut comb = TrainState::new(
        &ds,
        &TrainConfig {
            generator_update: GeneratorUpdate::Combined,
            ..small_config(8)
        },
    )
    .unwrap();
    alt.advance(&ds).unwrap();
    comb.advance(&ds).unwrap();
    assert_ne!(alt.model.generator, comb.model.generator);
    assert_eq!(comb.optimizers.generator_g2.t, 0);
}

#[test]
fn zero_epochs_returns_initial_state() {
    let ds = toy();
    let cfg = TrainConfig {
        epochs: Some(0),
        ..small_config(9)
    };
    let trained = train(&ds, &cfg).unwrap();
    let fresh = TrainState::new(&ds, &cfg).unwrap();
    assert_eq!(trained, fresh);
}

#[test]
fn log_has_header_and_one_line_per_step() {
    let ds = toy();
    let cfg = small_config(10);
    let mut buf = Vec::new();
    let state = train_with(
        &ds,
        &cfg,
        &mut TrainOutputs {
            checkpoint_dir: None,
            log: Some(&mut buf),
        },
    )
    .unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len() as u64, state.step + 1);
    assert!(lines[0].starts_with("step\tL_G1"));
}

#[test]
fn checkpoint_round_trip_and_continuation() {
    let ds = toy();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let mut state = TrainState::new(&ds, &small_config(11)).unwrap();
    for _ in 0..3 {
        state.advance(&ds).unwrap();
    }
    save_checkpoint(&state, &path).unwrap();
    let mut loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, state);
    for _ in 0..4 {
        let a = state.advance(&ds).unwrap();
        let b = loaded.advance(&ds).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn truncated_or_mismatched_checkpoints_are_refused() {
    let ds = toy();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let state = TrainState::new(&ds, &small_config(12)).unwrap();
    save_checkpoint(&state, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.ckpt");
    std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(load_checkpoint(&cut), Err(Error::Checkpoint(_))));

    let mut wrong = bytes.clone();
    wrong[8..12].copy_from_slice(&99u32.to_le_bytes());
    let ver = dir.path().join("ver.ckpt");
    std::fs::write(&ver, &wrong).unwrap();
    assert!(matches!(
        load_checkpoint(&ver),
        Err(Error::Version {
            found: 99,
            expected: 1
        })
    ));
}

#[test]
fn real_feature_regression_term_is_opt_in() {
    let ds = toy();
    let mut base = TrainState::new(&ds, &small_config(13)).unwrap();
    let mut with_real = TrainState::new(
        &ds,
        &TrainConfig {
            reg_on_real: true,
            ..small_config(13)
        },
    )
    .unwrap();
    let a = base.advance(&ds).unwrap();
    let b = with_real.advance(&ds).unwrap();
    assert!(b.terms.l_reg_s > a.terms.l_reg_s);
    assert_eq!(a.terms.l_g1, b.terms.l_g1);
    assert_ne!(base.model.regressors, with_real.model.regressors);
}
