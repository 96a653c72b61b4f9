use ndarray::{array, Array1};
use rand::{RngExt, SeedableRng};

use super::*;
use crate::datasets::make_toy_dataset;
use crate::model::{init_model, LayerWidths, ModelDims};
use crate::nn::Linear;

fn tiny_model(dx: usize, a: usize, cs: usize, seed: u64) -> BmCoGan {
    let mut dims = ModelDims::new(dx, a, cs);
    dims.widths = LayerWidths {
        generator_hidden: 16,
        regressor_hidden: 8,
        coupled_disc_hidden: 4,
        critic_hidden: 12,
    };
    init_model(dims, seed).unwrap()
}

#[test]
fn per_class_examples() {
    let acc = per_class_top1(&[1, 0, 2], &[1, 1, 2], &[1, 2]).unwrap();
    assert_eq!(mean_class_accuracy(&acc), 75.0);
    let all = per_class_top1(&[0, 1, 1], &[0, 1, 1], &[0, 1]).unwrap();
    assert_eq!(mean_class_accuracy(&all), 100.0);
    assert!(matches!(
        per_class_top1(&[0], &[0], &[0, 3]),
        Err(Error::Argument(_))
    ));
}

#[test]
fn per_class_matches_counting_on_random_confusions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|i| i % 5).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let got = per_class_top1(&preds, &labels, &[0, 1, 2, 3, 4]).unwrap();
        for c in 0..5 {
            let total = labels.iter().filter(|&&l| l == c).count();
            let hit = (0..n).filter(|&i| labels[i] == c && preds[i] == c).count();
            assert!((got[&c] - hit as f64 / total as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn harmonic_mean_examples() {
    assert!((harmonic_mean(57.9, 66.1) - 61.7).abs() <= 0.05);
    assert!((harmonic_mean(66.9, 81.3) - 73.4).abs() <= 0.05);
    assert_eq!(harmonic_mean(50.0, 50.0), 50.0);
    assert_eq!(harmonic_mean(0.0, 70.0), 0.0);
    assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    let (u, s) = (31.0, 77.0);
    let h = harmonic_mean(u, s);
    assert!(u.min(s) <= h && h <= u.max(s));
    assert_eq!(h, harmonic_mean(s, u));
}

#[test]
fn synthesis_counts_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let semantics = SemanticTable {
        seen: Array2::from_shape_simple_fn((2, 3), || rng.random::<f32>()),
        unseen: Array2::from_shape_simple_fn((50, 3), || rng.random::<f32>()),
    };
    let model = tiny_model(5, 3, 2, 0);
    let cfg = SynthesisConfig {
        n_per_class: 400,
        seed: 4,
        ..Default::default()
    };
    let (x, y) = synthesize_unseen(&model, &semantics, &cfg).unwrap();
    assert_eq!(x.dim(), (20_000, 5));
    assert_eq!(y.len(), 20_000);
    assert_eq!(y[0], 2);
    assert_eq!(y[19_999], 51);
    let (x2, y2) = synthesize_unseen(&model, &semantics, &cfg).unwrap();
    assert_eq!((x, y), (x2, y2));
    let (empty, labels) = synthesize_unseen(
        &model,
        &semantics,
        &SynthesisConfig {
            n_per_class: 0,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(empty.nrows(), 0);
    assert!(labels.is_empty());
}

#[test]
fn transform_matches_linear_fixture_and_bypass() {
    let mut model = tiny_model(2, 1, 2, 0);
    // hidden: [x; a] -> 12, positive weights keep the leaky unit in its linear part
    let mut hidden = Linear::zeros(3, 12);
    hidden.weight.fill(0.5);
    hidden.bias.fill(1.0);
    model.critic.hidden = hidden;
    let x = array![[1.0, 2.0], [0.0, 4.0]];
    let a = array![[2.0], [0.0]];
    let k = transform_through_d(&model, &x.view(), &a.view(), true).unwrap();
    assert_eq!(k.ncols(), 12);
    assert_eq!(k.row(0), Array1::from_elem(12, 0.5 * 5.0 + 1.0));
    assert_eq!(k.row(1), Array1::from_elem(12, 0.5 * 4.0 + 1.0));
    let same = transform_through_d(&model, &x.view(), &a.view(), false).unwrap();
    assert_eq!(same, x);
}

#[test]
fn default_critic_embedding_is_1024_wide() {
    let model = init_model(ModelDims::new(6, 3, 2), 0).unwrap();
    let x = Array2::zeros((2, 6));
    let a = Array2::zeros((2, 3));
    assert_eq!(
        transform_through_d(&model, &x.view(), &a.view(), true)
            .unwrap()
            .ncols(),
        1024
    );
}

#[test]
fn knn_retrieves_stored_points() {
    let x = array![[0.0, 0.0], [5.0, 5.0], [0.0, 9.0]];
    let y = vec![2, 0, 1];
    let cfg = EvalConfig::default();
    let clf = fit_final_classifier(&x.view(), &y, 3, ClassifierKind::Knn, &cfg, 0).unwrap();
    assert_eq!(clf.predict(&x.view()).unwrap(), y);
    assert_eq!(clf.predict(&array![[4.0, 4.5]].view()).unwrap(), vec![0]);
    assert!(matches!(
        fit_final_classifier(&x.view(), &[0, 1, 3], 3, ClassifierKind::Knn, &cfg, 0),
        Err(Error::Argument(_))
    ));
}

#[test]
fn knn_majority_vote_with_larger_k() {
    let x = array![[0.0], [1.0], [1.1], [1.2]];
    let y = vec![0, 1, 1, 2];
    let cfg = EvalConfig {
        knn_k: 3,
        ..Default::default()
    };
    let clf = fit_final_classifier(&x.view(), &y, 3, ClassifierKind::Knn, &cfg, 0).unwrap();
    assert_eq!(clf.predict(&array![[0.2]].view()).unwrap(), vec![1]);
}

#[test]
fn softmax_separates_and_normalizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = Array2::zeros((120, 4));
    let mut y = Vec::new();
    for i in 0..120 {
        let c = i % 4;
        for j in 0..4 {
            x[[i, j]] = if j == c { 3.0 } else { 0.0 } + rng.random_range(-0.3..0.3);
        }
        y.push(c);
    }
    let cfg = EvalConfig {
        softmax: ClassifierConfig {
            epochs: 100,
            lr: 1e-2,
            batch_size: 16,
        },
        ..Default::default()
    };
    let clf = fit_final_classifier(&x.view(), &y, 4, ClassifierKind::Softmax, &cfg, 0).unwrap();
    let pred = clf.predict(&x.view()).unwrap();
    let acc = pred.iter().zip(&y).filter(|(p, l)| p == l).count() as f64 / y.len() as f64;
    assert!(acc >= 0.99, "{acc}");
    for row in clf.log_probs(&x.view()).unwrap().rows() {
        assert!((row.mapv(f64::exp).sum() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn oracle_and_seen_only_predictions() {
    let ds = make_toy_dataset(1, 3, 2, 4, 2, 5).unwrap();
    let ys = ds.test_seen_labels();
    let yu = ds.test_unseen_labels();
    let (_, u, s, h) = score_predictions(&ds, &ys, &ys, &yu, &yu).unwrap();
    assert_eq!((u, s, h), (100.0, 100.0, 100.0));
    let seen_guess = vec![0; yu.len()];
    let (_, u, _, h) = score_predictions(&ds, &ys, &ys, &seen_guess, &yu).unwrap();
    assert_eq!((u, h), (0.0, 0.0));
}

#[test]
fn class_mean_differs_from_sample_mean_on_imbalanced_data() {
    // class 0: 90 samples all right; class 1: 10 samples all wrong
    let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
    let preds = vec![0; 100];
    let acc = per_class_top1(&preds, &labels, &[0, 1]).unwrap();
    let class_mean = mean_class_accuracy(&acc);
    let sample_mean =
        100.0 * preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / 100.0;
    assert_eq!(class_mean, 50.0);
    assert_eq!(sample_mean, 90.0);
}

#[test]
fn empty_variant_list_gives_empty_table() {
    let ds = make_toy_dataset(1, 3, 2, 4, 2, 5).unwrap();
    let table =
        run_ablation_suite(&ds, &TrainConfig::default(), &EvalConfig::default(), &[]).unwrap();
    assert!(table.is_empty());
    assert_eq!(table.to_csv(), "variant,U,S,H\n");
}

#[test]
fn evaluation_is_deterministic_and_tabulates() {
    let ds = make_toy_dataset(2, 3, 2, 6, 3, 8).unwrap();
    let model = tiny_model(6, 3, 3, 1);
    let cfg = EvalConfig {
        synthesis: SynthesisConfig {
            n_per_class: 20,
            seed: 1,
            ..Default::default()
        },
        softmax: ClassifierConfig {
            epochs: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let a = evaluate_gzsl(&model, &ds, &cfg).unwrap();
    let b = evaluate_gzsl(&model, &ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_class.len(), 5);
    let table = a.to_table();
    let head: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(head, ["Method", "U", "S", "H"]);
    let back: EvalReport = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(back, a);
    let knn = evaluate_gzsl(
        &model,
        &ds,
        &EvalConfig {
            classifier: ClassifierKind::Knn,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(knn.classifier, ClassifierKind::Knn);
}
