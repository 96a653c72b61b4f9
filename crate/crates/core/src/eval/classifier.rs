use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::EvalConfig;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::training::{argmax, pretrain_classifier_on};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Softmax,
    Knn,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Softmax => "softmax",
            ClassifierKind::Knn => "knn",
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(ClassifierKind::Softmax),
            "knn" | "1nn" | "1-nn" => Ok(ClassifierKind::Knn),
            other => Err(Error::Argument(format!(
                "unknown classifier `{other}`; valid: softmax, knn"
            ))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnMetric {
    #[default]
    Euclidean,
    /// Euclidean distance between L2-normalized rows.
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalClassifier {
    /// Affine head with log-softmax over all classes.
    Softmax(Classifier),
    Knn {
        features: Array2<f64>,
        labels: Vec<usize>,
        k: usize,
        metric: KnnMetric,
    },
}

fn normalize_rows(x: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

/// Fits the final classifier over `n_classes = C^s + C^u` classes.
pub fn fit_final_classifier(
    x: &ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    kind: ClassifierKind,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<FinalClassifier> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Argument(format!(
            "label {bad} outside the {n_classes} known classes"
        )));
    }
    if y.is_empty() {
        return Err(Error::Argument(
            "final classifier: empty training set".into(),
        ));
    }
    match kind {
        ClassifierKind::Softmax => Ok(FinalClassifier::Softmax(pretrain_classifier_on(
            x,
            y,
            n_classes,
            &cfg.softmax,
            seed,
        )?)),
        ClassifierKind::Knn => {
            if cfg.knn_k == 0 {
                return Err(Error::Argument("k must be at least 1".into()));
            }
            let features = match cfg.knn_metric {
                KnnMetric::Euclidean => x.to_owned(),
                KnnMetric::Cosine => normalize_rows(x),
            };
            Ok(FinalClassifier::Knn {
                features,
                labels: y.to_vec(),
                k: cfg.knn_k,
                metric: cfg.knn_metric,
            })
        }
    }
}

const QUERY_CHUNK: usize = 256;

impl FinalClassifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            FinalClassifier::Softmax(_) => ClassifierKind::Softmax,
            FinalClassifier::Knn { .. } => ClassifierKind::Knn,
        }
    }

    /// Log-probabilities of the softmax head.
    pub fn log_probs(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            FinalClassifier::Softmax(c) => c.forward(x),
            FinalClassifier::Knn { .. } => Err(Error::Argument("k-NN has no probabilities".into())),
        }
    }

    pub fn predict(&self, x: &ArrayView2<f64>) -> Result<Vec<usize>> {
        match self {
            FinalClassifier::Softmax(c) => Ok(super::argmax_rows(&c.forward(x)?)),
            FinalClassifier::Knn {
                features,
                labels,
                k,
                metric,
            } => {
                if x.ncols() != features.ncols() {
                    return Err(Error::Shape(format!(
                        "query width {} != stored width {}",
                        x.ncols(),
                        features.ncols()
                    )));
                }
                let queries = match metric {
                    KnnMetric::Euclidean => x.to_owned(),
                    KnnMetric::Cosine => normalize_rows(x),
                };
                let stored_sq: Array1<f64> =
                    features.rows().into_iter().map(|r| r.dot(&r)).collect();
                let mut out = Vec::with_capacity(x.nrows());
                for start in (0..queries.nrows()).step_by(QUERY_CHUNK) {
                    let end = (start + QUERY_CHUNK).min(queries.nrows());
                    let q = queries.slice(ndarray::s![start..end, ..]);
                    // ‖q − t‖² up to the per-query constant ‖q‖²
                    let cross = q.dot(&features.t());
                    for row in cross.axis_iter(Axis(0)) {
                        let d: Vec<f64> = row
                            .iter()
                            .zip(&stored_sq)
                            .map(|(c, s)| s - 2.0 * c)
                            .collect();
                        out.push(vote(&d, labels, *k));
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Majority label among the `k` nearest; ties go to the label seen first in
/// order of increasing distance.
fn vote(dist: &[f64], labels: &[usize], k: usize) -> usize {
    if k == 1 {
        let i = argmax(dist.iter().map(|d| -d));
        return labels[i];
    }
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let nearest = &idx[..k.min(idx.len())];
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &i in nearest {
        match counts.iter_mut().find(|(l, _)| *l == labels[i]) {
            Some(e) => e.1 += 1,
            None => counts.push((labels[i], 1)),
        }
    }
    let best = counts.iter().map(|c| c.1).max().unwrap_or(0);
    counts
        .iter()
        .find(|c| c.1 == best)
        .map(|c| c.0)
        .unwrap_or(0)
}
