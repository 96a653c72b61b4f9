//! Test phase: feature synthesis for unseen classes, the critic-embedding
//! transform, the final classifier and per-class U/S/H scoring.

mod classifier;
mod report;

use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{GzslDataset, SemanticTable};
use crate::error::{Error, Result};
use crate::model::{BmCoGan, Domain};
use crate::training::{noise, train, Ablation, ClassifierConfig, TrainConfig};

pub use classifier::{fit_final_classifier, ClassifierKind, FinalClassifier, KnnMetric};
pub use report::{format_plot_csv, AblationRow, AblationTable, ClassResult, EvalReport, PlotRow};

/// Which semantic vector conditions the critic when a feature is embedded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Each row's own class vector, for training and test rows alike. Test
    /// rows are then embedded using their ground-truth label.
    #[default]
    GroundTruth,
    /// The mean of all class vectors, for training and test rows alike. No
    /// label information enters the embedding.
    ClassMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub n_per_class: usize,
    pub seed: u64,
    #[serde(rename = "use_D_transform")]
    pub use_d_transform: bool,
    pub conditioning: Conditioning,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            n_per_class: 400,
            seed: 0,
            use_d_transform: true,
            conditioning: Conditioning::GroundTruth,
        }
    }
}

/// Everything the test phase needs besides the model and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub synthesis: SynthesisConfig,
    pub classifier: ClassifierKind,
    pub softmax: ClassifierConfig,
    /// Neighbors consulted by the k-NN classifier.
    pub knn_k: usize,
    pub knn_metric: KnnMetric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            synthesis: SynthesisConfig::default(),
            classifier: ClassifierKind::Softmax,
            softmax: ClassifierConfig::default(),
            knn_k: 1,
            knn_metric: KnnMetric::Euclidean,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 {
            return Err(Error::Config("`knn_k` must be at least 1".into()));
        }
        if self.softmax.batch_size == 0 || self.softmax.lr.is_nan() || self.softmax.lr <= 0.0 {
            return Err(Error::Config(
                "softmax classifier needs a positive learning rate and batch size".into(),
            ));
        }
        Ok(())
    }
}

/// `n_per_class` generated features for every unseen class, labeled with
/// canonical ids `C^s..C^s+C^u`, grouped by class.
pub fn synthesize_unseen(
    model: &BmCoGan,
    semantics: &SemanticTable,
    cfg: &SynthesisConfig,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let (cs, cu) = (semantics.c_seen(), semantics.c_unseen());
    if semantics.a_dim() != model.dims.a_dim {
        return Err(Error::Shape(format!(
            "semantic width {} != model width {}",
            semantics.a_dim(),
            model.dims.a_dim
        )));
    }
    let n = cfg.n_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut blocks = Vec::with_capacity(cu);
    let mut labels = Vec::with_capacity(n * cu);
    for j in 0..cu {
        let class = cs + j;
        let a = semantics.rows_for(&vec![class; n])?;
        let z = noise(n, model.noise_dim(), &mut rng);
        blocks.push(model.generator_forward(&z.view(), &a.view(), Domain::Unseen)?);
        labels.extend(std::iter::repeat_n(class, n));
    }
    let features = if blocks.is_empty() || n == 0 {
        Array2::zeros((0, model.dims.dx))
    } else {
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        concatenate(Axis(0), &views).expect("same width")
    };
    Ok((features, labels))
}

/// Critic hidden embedding of each `(feature, semantic)` row, or the features
/// themselves when `use_d_transform` is false.
pub fn transform_through_d(
    model: &BmCoGan,
    features: &ArrayView2<f64>,
    semantics: &ArrayView2<f64>,
    use_d_transform: bool,
) -> Result<Array2<f64>> {
    if !use_d_transform {
        return Ok(features.to_owned());
    }
    if features.nrows() != semantics.nrows() {
        return Err(Error::Shape(format!(
            "{} features but {} semantic rows",
            features.nrows(),
            semantics.nrows()
        )));
    }
    Ok(model.critic_forward(features, semantics)?.1)
}

/// Semantic rows that condition the transform for `labels`.
pub fn conditioning_rows(
    semantics: &SemanticTable,
    labels: &[usize],
    mode: Conditioning,
) -> Result<Array2<f64>> {
    match mode {
        Conditioning::GroundTruth => semantics.rows_for(labels),
        Conditioning::ClassMean => {
            let mean = semantics.class_mean();
            let mut out = Array2::zeros((labels.len(), mean.len()));
            for mut row in out.rows_mut() {
                row.assign(&mean);
            }
            Ok(out)
        }
    }
}

/// Accuracy of each class in `class_set`, counted over that class's samples only.
pub fn per_class_top1(
    predictions: &[usize],
    labels: &[usize],
    class_set: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut hits: BTreeMap<usize, (usize, usize)> =
        class_set.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &l) in predictions.iter().zip(labels) {
        if let Some(e) = hits.get_mut(&l) {
            e.1 += 1;
            if p == l {
                e.0 += 1;
            }
        }
    }
    hits.into_iter()
        .map(|(c, (h, n))| {
            if n == 0 {
                Err(Error::Argument(format!("class {c} has no test samples")))
            } else {
                Ok((c, h as f64 / n as f64))
            }
        })
        .collect()
}

/// Unweighted mean over classes, as a percentage.
pub fn mean_class_accuracy(per_class: &BTreeMap<usize, f64>) -> f64 {
    if per_class.is_empty() {
        return 0.0;
    }
    100.0 * per_class.values().sum::<f64>() / per_class.len() as f64
}

/// `2·U·S / (U + S)`; 0 when either is 0.
pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s <= 0.0 {
        log::warn!("harmonic mean of two zero accuracies is taken as 0");
        return 0.0;
    }
    2.0 * u * s / (u + s)
}

/// U, S, H and the per-class breakdown from raw predictions.
pub fn score_predictions(
    dataset: &GzslDataset,
    seen_pred: &[usize],
    seen_labels: &[usize],
    unseen_pred: &[usize],
    unseen_labels: &[usize],
) -> Result<(BTreeMap<usize, ClassResult>, f64, f64, f64)> {
    let seen_classes: Vec<usize> = (0..dataset.c_seen()).collect();
    let unseen_classes: Vec<usize> = (dataset.c_seen()..dataset.n_classes()).collect();
    let s_acc = per_class_top1(seen_pred, seen_labels, &seen_classes)?;
    let u_acc = per_class_top1(unseen_pred, unseen_labels, &unseen_classes)?;
    let count = |labels: &[usize], c: usize| labels.iter().filter(|&&l| l == c).count();
    let mut per_class = BTreeMap::new();
    for (&c, &acc) in &s_acc {
        per_class.insert(c, ClassResult::new(dataset, c, acc, count(seen_labels, c)));
    }
    for (&c, &acc) in &u_acc {
        per_class.insert(
            c,
            ClassResult::new(dataset, c, acc, count(unseen_labels, c)),
        );
    }
    let (u, s) = (mean_class_accuracy(&u_acc), mean_class_accuracy(&s_acc));
    Ok((per_class, u, s, harmonic_mean(u, s)))
}

/// Training corpus for the final classifier: real seen training rows plus
/// synthesized unseen rows, both transformed.
pub fn final_training_set(
    model: &BmCoGan,
    dataset: &GzslDataset,
    cfg: &SynthesisConfig,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let (syn_x, syn_y) = synthesize_unseen(model, &dataset.semantics, cfg)?;
    let real_x = dataset.train_features();
    let real_y = dataset.train_labels();
    let x = concatenate(Axis(0), &[real_x.view(), syn_x.view()]).expect("same width");
    let y: Vec<usize> = real_y.into_iter().chain(syn_y).collect();
    let cond = conditioning_rows(&dataset.semantics, &y, cfg.conditioning)?;
    let emb = transform_through_d(model, &x.view(), &cond.view(), cfg.use_d_transform)?;
    Ok((emb, y))
}

fn transformed_test(
    model: &BmCoGan,
    dataset: &GzslDataset,
    x: &Array2<f64>,
    y: &[usize],
    cfg: &SynthesisConfig,
) -> Result<Array2<f64>> {
    let cond = conditioning_rows(&dataset.semantics, y, cfg.conditioning)?;
    transform_through_d(model, &x.view(), &cond.view(), cfg.use_d_transform)
}

/// Full test pipeline: synthesize, transform, fit, predict, score.
pub fn evaluate_gzsl(
    model: &BmCoGan,
    dataset: &GzslDataset,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let (train_x, train_y) = final_training_set(model, dataset, &cfg.synthesis)?;
    let clf = fit_final_classifier(
        &train_x.view(),
        &train_y,
        dataset.n_classes(),
        cfg.classifier,
        cfg,
        cfg.synthesis.seed,
    )?;
    let ys = dataset.test_seen_labels();
    let yu = dataset.test_unseen_labels();
    let xs = transformed_test(
        model,
        dataset,
        &dataset.test_seen_features(),
        &ys,
        &cfg.synthesis,
    )?;
    let xu = transformed_test(
        model,
        dataset,
        &dataset.test_unseen_features(),
        &yu,
        &cfg.synthesis,
    )?;
    let ps = clf.predict(&xs.view())?;
    let pu = clf.predict(&xu.view())?;
    let (per_class, u, s, h) = score_predictions(dataset, &ps, &ys, &pu, &yu)?;
    Ok(EvalReport {
        dataset: dataset.name.clone(),
        classifier: cfg.classifier,
        variant: None,
        u,
        s,
        h,
        per_class,
        config: cfg.clone(),
    })
}

/// Trains and evaluates each variant from the same base config. Only the
/// ablation flag (and, for `wo_D_test`, the test-time transform) differ.
pub fn run_ablation_suite(
    dataset: &GzslDataset,
    base: &TrainConfig,
    eval: &EvalConfig,
    variants: &[Ablation],
) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = TrainConfig {
            ablation: variant,
            ..base.clone()
        };
        let state = train(dataset, &cfg)?;
        let mut ecfg = eval.clone();
        ecfg.synthesis.use_d_transform &= variant.uses_d_transform();
        let mut report = evaluate_gzsl(&state.model, dataset, &ecfg)?;
        report.variant = Some(variant);
        rows.push(AblationRow { variant, report });
    }
    Ok(AblationTable { rows })
}

/// Arg-max of each row.
pub fn argmax_rows(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|r| crate::training::argmax(r.iter().copied()))
        .collect()
}

#[cfg(test)]
mod tests;
