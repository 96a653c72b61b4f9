//! Portable dataset container.
//!
//! ```text
//! <root>/manifest.json     dimensions, class-id maps, payload names, split indices
//! <root>/features.f32      n_samples × dx, row-major, little-endian f32
//! <root>/labels.i32        n_samples original class ids, little-endian i32
//! <root>/attributes.f32    (C^s + C^u) × A, seen classes first, little-endian f32
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ClassIdMap, GzslDataset, SemanticTable, SplitSpec};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub n_samples: usize,
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    pub n_train: usize,
    pub n_test_seen: usize,
    pub n_test_unseen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payloads {
    pub features: String,
    pub labels: String,
    pub attributes: String,
}

impl Default for Payloads {
    fn default() -> Self {
        Payloads {
            features: "features.f32".into(),
            labels: "labels.i32".into(),
            attributes: "attributes.f32".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub dx: usize,
    #[serde(rename = "A")]
    pub a_dim: usize,
    pub counts: Counts,
    pub class_ids: ClassIdMap,
    pub payloads: Payloads,
    pub splits: SplitSpec,
}

fn read(root: &Path, rel: &str) -> Result<Vec<u8>> {
    let path = root.join(rel);
    fs::read(&path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))
}

fn decode_f32(bytes: &[u8], what: &str, expected: usize) -> Result<Vec<f32>> {
    if bytes.len() != expected * 4 {
        return Err(Error::Schema(format!(
            "{what}: payload holds {} bytes, manifest implies {} values ({} bytes)",
            bytes.len(),
            expected,
            expected * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn decode_i32(bytes: &[u8], what: &str, expected: usize) -> Result<Vec<i32>> {
    if bytes.len() != expected * 4 {
        return Err(Error::Schema(format!(
            "{what}: payload holds {} bytes, manifest implies {} values",
            bytes.len(),
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Loads and validates a dataset directory.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<GzslDataset> {
    let root = root.as_ref();
    let manifest_bytes = read(root, MANIFEST_FILE)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::Schema(format!("{}: {e}", root.join(MANIFEST_FILE).display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported dataset format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let c = &manifest.counts;
    if manifest.class_ids.seen.len() != c.n_seen_classes
        || manifest.class_ids.unseen.len() != c.n_unseen_classes
    {
        return Err(Error::Schema("class id lists disagree with counts".into()));
    }
    for (name, n, idx) in [
        ("train", c.n_train, &manifest.splits.train),
        ("test_seen", c.n_test_seen, &manifest.splits.test_seen),
        ("test_unseen", c.n_test_unseen, &manifest.splits.test_unseen),
    ] {
        if idx.len() != n {
            return Err(Error::Schema(format!(
                "split `{name}` lists {} indices, counts declare {n}",
                idx.len()
            )));
        }
    }

    let features = decode_f32(
        &read(root, &manifest.payloads.features)?,
        "features",
        c.n_samples * manifest.dx,
    )?;
    let raw_labels = decode_i32(
        &read(root, &manifest.payloads.labels)?,
        "labels",
        c.n_samples,
    )?;
    let n_classes = c.n_seen_classes + c.n_unseen_classes;
    let attributes = decode_f32(
        &read(root, &manifest.payloads.attributes)?,
        "attributes",
        n_classes * manifest.a_dim,
    )?;

    let lookup = manifest.class_ids.lookup_table();
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            lookup
                .get(&(l as i64))
                .copied()
                .ok_or_else(|| Error::Schema(format!("sample {i} has unknown class id {l}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let features =
        Array2::from_shape_vec((c.n_samples, manifest.dx), features).expect("length checked");
    let attributes =
        Array2::from_shape_vec((n_classes, manifest.a_dim), attributes).expect("length checked");
    let seen = attributes
        .slice(ndarray::s![..c.n_seen_classes, ..])
        .to_owned();
    let unseen = attributes
        .slice(ndarray::s![c.n_seen_classes.., ..])
        .to_owned();

    let ds = GzslDataset {
        name: manifest.name,
        features,
        labels,
        split: manifest.splits,
        semantics: SemanticTable { seen, unseen },
        class_map: manifest.class_ids,
    };
    ds.validate()?;
    Ok(ds)
}

fn write(root: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = root.join(rel);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

pub fn manifest_for(ds: &GzslDataset) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        name: ds.name.clone(),
        dx: ds.dx(),
        a_dim: ds.a_dim(),
        counts: Counts {
            n_samples: ds.n_samples(),
            n_seen_classes: ds.c_seen(),
            n_unseen_classes: ds.c_unseen(),
            n_train: ds.split.train.len(),
            n_test_seen: ds.split.test_seen.len(),
            n_test_unseen: ds.split.test_unseen.len(),
        },
        class_ids: ds.class_map.clone(),
        payloads: Payloads::default(),
        splits: ds.split.clone(),
    }
}

/// Writes `ds` to `root` (created if missing).
pub fn save_dataset(ds: &GzslDataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    ds.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let manifest = manifest_for(ds);

    let mut feat = Vec::with_capacity(ds.features.len() * 4);
    for v in ds.features.iter() {
        feat.extend_from_slice(&v.to_le_bytes());
    }
    let mut labels = Vec::with_capacity(ds.labels.len() * 4);
    for &l in &ds.labels {
        let original = ds.class_map.original(l).expect("validated label");
        let original = i32::try_from(original)
            .map_err(|_| Error::Schema(format!("class id {original} does not fit in i32")))?;
        labels.extend_from_slice(&original.to_le_bytes());
    }
    let mut attrs = Vec::new();
    for v in ds.semantics.seen.iter().chain(ds.semantics.unseen.iter()) {
        attrs.extend_from_slice(&v.to_le_bytes());
    }
    write(root, &manifest.payloads.features, &feat)?;
    write(root, &manifest.payloads.labels, &labels)?;
    write(root, &manifest.payloads.attributes, &attrs)?;
    write(
        root,
        MANIFEST_FILE,
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_toy_dataset;

    #[test]
    fn toy_round_trip_is_field_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_toy_dataset(7, 8, 4, 16, 8, 50).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(ds, back);
        // and save(load(x)) reproduces the same bytes
        let dir2 = tempfile::tempdir().unwrap();
        save_dataset(&back, dir2.path()).unwrap();
        for f in [
            "manifest.json",
            "features.f32",
            "labels.i32",
            "attributes.f32",
        ] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(dir2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn short_feature_payload_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_toy_dataset(1, 3, 2, 6, 4, 4).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("features.f32");
        let mut bytes = fs::read(&path).unwrap();
        // drop one value from the last row
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_payload_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_toy_dataset(1, 3, 2, 6, 4, 4).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        fs::remove_file(dir.path().join("labels.i32")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Load(_))));
        assert!(matches!(
            load_dataset(dir.path().join("nope")),
            Err(Error::Load(_))
        ));
    }

    #[test]
    fn unseen_training_label_is_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_toy_dataset(1, 3, 2, 6, 4, 4).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let mut manifest: Manifest =
            serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        let moved = manifest.splits.test_unseen.pop().unwrap();
        manifest.splits.train.push(moved);
        manifest.counts.n_train += 1;
        manifest.counts.n_test_unseen -= 1;
        fs::write(
            dir.path().join(MANIFEST_FILE),
            serde_json::to_string(&manifest).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::InductiveViolation(_))
        ));
    }
}
