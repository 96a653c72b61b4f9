//! GZSL datasets: in-memory representation, on-disk container, a seeded toy
//! benchmark, mini-batch iteration and an importer for `.mat` split archives.
//!
//! Class ids are remapped on load so that seen classes occupy `0..C^s` and
//! unseen classes `C^s..C^s+C^u`. The original ids are kept in a
//! [`ClassIdMap`] so the mapping can be inverted.

mod batch;
mod format;
mod mat;
mod toy;

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) use batch::make_batch;
pub use batch::{epoch_permutation, Batch, BatchIterator};
pub use format::{load_dataset, save_dataset, Manifest, MANIFEST_FILE};
pub use mat::import_mat_splits;
pub use toy::{make_toy_dataset, toy_mean_map, TOY_NOISE_STD};

/// One class's attribute scores together with its canonical class index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSemanticVector {
    pub class_id: usize,
    pub values: Array1<f32>,
}

/// Attribute table, seen rows first.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTable {
    /// `C^s × A`, row `c` is canonical class `c`.
    pub seen: Array2<f32>,
    /// `C^u × A`, row `j` is canonical class `C^s + j`.
    pub unseen: Array2<f32>,
}

impl SemanticTable {
    pub fn a_dim(&self) -> usize {
        self.seen.ncols()
    }

    pub fn c_seen(&self) -> usize {
        self.seen.nrows()
    }

    pub fn c_unseen(&self) -> usize {
        self.unseen.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.c_seen() + self.c_unseen()
    }

    pub fn is_seen(&self, class: usize) -> bool {
        class < self.c_seen()
    }

    pub fn row(&self, class: usize) -> Option<ArrayView1<'_, f32>> {
        if class < self.c_seen() {
            Some(self.seen.row(class))
        } else if class < self.n_classes() {
            Some(self.unseen.row(class - self.c_seen()))
        } else {
            None
        }
    }

    pub fn vector(&self, class: usize) -> Option<ClassSemanticVector> {
        self.row(class).map(|v| ClassSemanticVector {
            class_id: class,
            values: v.to_owned(),
        })
    }

    /// All class vectors, seen first, as `f64`.
    pub fn all(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.seen.view(), self.unseen.view()])
            .expect("same width")
            .mapv(f64::from)
    }

    /// Semantic rows for a list of canonical labels.
    pub fn rows_for(&self, labels: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((labels.len(), self.a_dim()));
        for (i, &l) in labels.iter().enumerate() {
            let row = self
                .row(l)
                .ok_or_else(|| Error::Argument(format!("no semantic vector for class {l}")))?;
            out.row_mut(i).assign(&row.mapv(f64::from));
        }
        Ok(out)
    }

    /// Mean attribute vector over every class.
    pub fn class_mean(&self) -> Array1<f64> {
        self.all()
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.a_dim()))
    }
}

/// Bijection between original class ids and canonical indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassIdMap {
    /// Original id of canonical seen class `c`.
    pub seen: Vec<i64>,
    /// Original id of canonical unseen class `C^s + j`.
    pub unseen: Vec<i64>,
}

impl ClassIdMap {
    pub fn canonical(&self, original: i64) -> Option<usize> {
        self.seen.iter().position(|&o| o == original).or_else(|| {
            self.unseen
                .iter()
                .position(|&o| o == original)
                .map(|p| p + self.seen.len())
        })
    }

    pub fn original(&self, canonical: usize) -> Option<i64> {
        if canonical < self.seen.len() {
            Some(self.seen[canonical])
        } else {
            self.unseen.get(canonical - self.seen.len()).copied()
        }
    }

    pub fn lookup_table(&self) -> HashMap<i64, usize> {
        self.seen
            .iter()
            .chain(self.unseen.iter())
            .enumerate()
            .map(|(i, &o)| (o, i))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let seen: BTreeSet<_> = self.seen.iter().collect();
        let unseen: BTreeSet<_> = self.unseen.iter().collect();
        if seen.len() != self.seen.len() || unseen.len() != self.unseen.len() {
            return Err(Error::Schema("duplicate class id in class map".into()));
        }
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::Schema(format!(
                "class id {c} is both seen and unseen"
            )));
        }
        Ok(())
    }
}

/// Row indices (into the full feature matrix) for each split.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub dx: usize,
    pub a_dim: usize,
    pub c_seen: usize,
    pub c_unseen: usize,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GzslDataset {
    pub name: String,
    /// Every sample, `n_samples × dx`; splits select rows.
    pub features: Array2<f32>,
    /// Canonical label of every sample.
    pub labels: Vec<usize>,
    pub split: SplitSpec,
    pub semantics: SemanticTable,
    pub class_map: ClassIdMap,
}

impl GzslDataset {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            dx: self.dx(),
            a_dim: self.a_dim(),
            c_seen: self.c_seen(),
            c_unseen: self.c_unseen(),
            n_train: self.split.train.len(),
        }
    }

    pub fn dx(&self) -> usize {
        self.features.ncols()
    }

    pub fn a_dim(&self) -> usize {
        self.semantics.a_dim()
    }

    pub fn c_seen(&self) -> usize {
        self.semantics.c_seen()
    }

    pub fn c_unseen(&self) -> usize {
        self.semantics.c_unseen()
    }

    pub fn n_classes(&self) -> usize {
        self.semantics.n_classes()
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), idx).mapv(f64::from)
    }

    fn labels_at(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn train_features(&self) -> Array2<f64> {
        self.rows(&self.split.train)
    }

    pub fn train_labels(&self) -> Vec<usize> {
        self.labels_at(&self.split.train)
    }

    pub fn test_seen_features(&self) -> Array2<f64> {
        self.rows(&self.split.test_seen)
    }

    pub fn test_seen_labels(&self) -> Vec<usize> {
        self.labels_at(&self.split.test_seen)
    }

    pub fn test_unseen_features(&self) -> Array2<f64> {
        self.rows(&self.split.test_unseen)
    }

    pub fn test_unseen_labels(&self) -> Vec<usize> {
        self.labels_at(&self.split.test_unseen)
    }

    /// Full consistency check. Called by the loader and the toy generator.
    pub fn validate(&self) -> Result<()> {
        self.class_map.validate()?;
        let (cs, cu) = (self.c_seen(), self.c_unseen());
        if self.class_map.seen.len() != cs || self.class_map.unseen.len() != cu {
            return Err(Error::Schema(format!(
                "class map has {}+{} classes but semantic table has {cs}+{cu}",
                self.class_map.seen.len(),
                self.class_map.unseen.len()
            )));
        }
        if self.semantics.unseen.ncols() != self.a_dim() {
            return Err(Error::Schema(
                "seen and unseen attribute widths differ".into(),
            ));
        }
        if self.labels.len() != self.n_samples() {
            return Err(Error::Schema(format!(
                "{} labels for {} feature rows",
                self.labels.len(),
                self.n_samples()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= cs + cu) {
            return Err(Error::Schema(format!("label {l} has no semantic vector")));
        }
        if !self.features.iter().all(|v| v.is_finite()) {
            return Err(Error::Schema("non-finite feature value".into()));
        }
        if !self
            .semantics
            .seen
            .iter()
            .chain(self.semantics.unseen.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::Schema("non-finite attribute value".into()));
        }

        let mut used = vec![false; self.n_samples()];
        for (name, idx) in [
            ("train", &self.split.train),
            ("test_seen", &self.split.test_seen),
            ("test_unseen", &self.split.test_unseen),
        ] {
            for &i in idx {
                if i >= self.n_samples() {
                    return Err(Error::Schema(format!("{name} index {i} out of range")));
                }
                if used[i] {
                    return Err(Error::Schema(format!(
                        "sample {i} appears in more than one split"
                    )));
                }
                used[i] = true;
            }
        }
        for &i in &self.split.train {
            if self.labels[i] >= cs {
                return Err(Error::InductiveViolation(format!(
                    "training sample {i} carries unseen class {}",
                    self.class_map.original(self.labels[i]).unwrap_or(-1)
                )));
            }
        }
        if self.split.test_seen.iter().any(|&i| self.labels[i] >= cs) {
            return Err(Error::Schema(
                "test_seen split contains an unseen-class sample".into(),
            ));
        }
        if self.split.test_unseen.iter().any(|&i| self.labels[i] < cs) {
            return Err(Error::Schema(
                "test_unseen split contains a seen-class sample".into(),
            ));
        }
        Ok(())
    }

    /// Per-dimension min-max scaling fitted on the training rows and applied to
    /// every row.
    pub fn minmax_scaled(&self) -> GzslDataset {
        let train = self.features.select(Axis(0), &self.split.train);
        let mut out = self.clone();
        for j in 0..self.dx() {
            let col = train.column(j);
            let lo = col.fold(f32::INFINITY, |a, &b| a.min(b));
            let hi = col.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
            let span = if hi > lo { hi - lo } else { 1.0 };
            out.features.column_mut(j).mapv_inplace(|v| (v - lo) / span);
        }
        out
    }

    /// SHA-256 over the dimensions, features, labels, splits and attributes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in [
            self.n_samples(),
            self.dx(),
            self.a_dim(),
            self.c_seen(),
            self.c_unseen(),
        ] {
            h.update((d as u64).to_le_bytes());
        }
        for v in self.features.iter() {
            h.update(v.to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        for idx in [
            &self.split.train,
            &self.split.test_seen,
            &self.split.test_unseen,
        ] {
            h.update((idx.len() as u64).to_le_bytes());
            for &i in idx {
                h.update((i as u64).to_le_bytes());
            }
        }
        for v in self
            .semantics
            .seen
            .iter()
            .chain(self.semantics.unseen.iter())
        {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
