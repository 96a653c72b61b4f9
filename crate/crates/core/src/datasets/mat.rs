//! Importer for the widely distributed GZSL `.mat` split archives.
//!
//! Expects a feature file holding `features` (`dx × N`) and `labels` (`N`),
//! and a split file holding `att` (`A × C`) plus 1-based `trainval_loc`,
//! `test_seen_loc` and `test_unseen_loc` row lists. Labels are 1-based
//! column indices into `att`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use matfile::{MatFile, NumericData};
use ndarray::Array2;

use super::{save_dataset, ClassIdMap, GzslDataset, SemanticTable, SplitSpec};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<MatFile> {
    let file = File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    MatFile::parse(BufReader::new(file))
        .map_err(|e| Error::Load(format!("{}: {e}", path.display())))
}

fn numeric(data: &NumericData) -> Vec<f64> {
    fn conv<T: Copy + Into<f64>>(v: &[T]) -> Vec<f64> {
        v.iter().map(|&x| x.into()).collect()
    }
    match data {
        NumericData::Int8 { real, .. } => conv(real),
        NumericData::UInt8 { real, .. } => conv(real),
        NumericData::Int16 { real, .. } => conv(real),
        NumericData::UInt16 { real, .. } => conv(real),
        NumericData::Int32 { real, .. } => conv(real),
        NumericData::UInt32 { real, .. } => conv(real),
        NumericData::Int64 { real, .. } => real.iter().map(|&x| x as f64).collect(),
        NumericData::UInt64 { real, .. } => real.iter().map(|&x| x as f64).collect(),
        NumericData::Single { real, .. } => conv(real),
        NumericData::Double { real, .. } => real.clone(),
    }
}

/// Column-major numeric array as `(dims, values)`.
fn array(file: &MatFile, path: &Path, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let a = file
        .find_by_name(name)
        .ok_or_else(|| Error::Schema(format!("{}: missing variable `{name}`", path.display())))?;
    Ok((a.size().clone(), numeric(a.data())))
}

fn one_based(values: &[f64], what: &str, bound: usize) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            let i = v as i64;
            if v.fract() != 0.0 || i < 1 || i as usize > bound {
                Err(Error::Schema(format!(
                    "{what}: index {v} outside 1..={bound}"
                )))
            } else {
                Ok(i as usize - 1)
            }
        })
        .collect()
}

/// Converts a feature archive and a split archive into the portable layout at
/// `out_dir` and returns the loaded dataset.
pub fn import_mat_splits(
    features_mat: impl AsRef<Path>,
    splits_mat: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    name: &str,
) -> Result<GzslDataset> {
    let (fpath, spath) = (features_mat.as_ref(), splits_mat.as_ref());
    let feats_file = open(fpath)?;
    let split_file = open(spath)?;

    let (fdims, fvals) = array(&feats_file, fpath, "features")?;
    if fdims.len() != 2 {
        return Err(Error::Schema("`features` must be two-dimensional".into()));
    }
    let (dx, n) = (fdims[0], fdims[1]);
    let (_, raw_labels) = array(&feats_file, fpath, "labels")?;
    if raw_labels.len() != n {
        return Err(Error::Schema(format!(
            "{} labels for {n} feature columns",
            raw_labels.len()
        )));
    }
    let (adims, avals) = array(&split_file, spath, "att")?;
    if adims.len() != 2 {
        return Err(Error::Schema("`att` must be two-dimensional".into()));
    }
    let (a_dim, n_classes) = (adims[0], adims[1]);
    let labels = one_based(&raw_labels, "labels", n_classes)?;
    let train = one_based(
        &array(&split_file, spath, "trainval_loc")?.1,
        "trainval_loc",
        n,
    )?;
    let test_seen = one_based(
        &array(&split_file, spath, "test_seen_loc")?.1,
        "test_seen_loc",
        n,
    )?;
    let test_unseen = one_based(
        &array(&split_file, spath, "test_unseen_loc")?.1,
        "test_unseen_loc",
        n,
    )?;

    let seen_set: BTreeSet<usize> = train.iter().chain(&test_seen).map(|&i| labels[i]).collect();
    let unseen_set: BTreeSet<usize> = test_unseen.iter().map(|&i| labels[i]).collect();
    if let Some(c) = seen_set.intersection(&unseen_set).next() {
        return Err(Error::InductiveViolation(format!(
            "class {} has samples in both seen and unseen splits",
            c + 1
        )));
    }
    let seen: Vec<usize> = seen_set.into_iter().collect();
    let unseen: Vec<usize> = unseen_set.into_iter().collect();
    let class_map = ClassIdMap {
        seen: seen.iter().map(|&c| c as i64 + 1).collect(),
        unseen: unseen.iter().map(|&c| c as i64 + 1).collect(),
    };
    let lookup = class_map.lookup_table();

    // column-major dx × N  ->  row-major N × dx
    let features = Array2::from_shape_fn((n, dx), |(i, j)| fvals[i * dx + j] as f32);
    let avals = &avals;
    let att_row = |c: usize| (0..a_dim).map(move |k| avals[c * a_dim + k] as f32);
    let mut seen_att = Array2::zeros((seen.len(), a_dim));
    for (r, &c) in seen.iter().enumerate() {
        for (k, v) in att_row(c).enumerate() {
            seen_att[[r, k]] = v;
        }
    }
    let mut unseen_att = Array2::zeros((unseen.len(), a_dim));
    for (r, &c) in unseen.iter().enumerate() {
        for (k, v) in att_row(c).enumerate() {
            unseen_att[[r, k]] = v;
        }
    }
    // classes with no samples in any split are dropped; their rows would be unreachable
    let canonical = labels
        .iter()
        .map(|&c| lookup.get(&(c as i64 + 1)).copied())
        .collect::<Vec<_>>();
    let mut keep = Vec::new();
    let mut remap = vec![usize::MAX; n];
    for (i, c) in canonical.iter().enumerate() {
        if c.is_some() {
            remap[i] = keep.len();
            keep.push(i);
        }
    }
    let map_idx = |idx: Vec<usize>| idx.into_iter().map(|i| remap[i]).collect::<Vec<_>>();
    let ds = GzslDataset {
        name: name.to_string(),
        features: features.select(ndarray::Axis(0), &keep),
        labels: keep.iter().map(|&i| canonical[i].expect("kept")).collect(),
        split: SplitSpec {
            train: map_idx(train),
            test_seen: map_idx(test_seen),
            test_unseen: map_idx(test_unseen),
        },
        semantics: SemanticTable {
            seen: seen_att,
            unseen: unseen_att,
        },
        class_map,
    };
    ds.validate()?;
    save_dataset(&ds, out_dir)?;
    Ok(ds)
}
