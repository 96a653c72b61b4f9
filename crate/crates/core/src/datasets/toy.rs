//! Seeded synthetic benchmark.
//!
//! Each class gets an attribute vector with entries in `[0, 1)`. Its features
//! are Gaussian around `a · W` where `W` (`A × dx`, entries in `[0, 1)`) is a
//! fixed map drawn from the same seed. Seen classes contribute train and
//! test-seen rows, unseen classes only test-unseen rows.

use ndarray::{Array1, Array2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ClassIdMap, GzslDataset, SemanticTable, SplitSpec};
use crate::error::{Error, Result};

/// Per-dimension standard deviation of toy features around their class mean.
pub const TOY_NOISE_STD: f64 = 0.2;

const MAP_STREAM: u64 = 1;

/// The attribute→mean map used by [`make_toy_dataset`] for `seed`.
pub fn toy_mean_map(seed: u64, a_dim: usize, dx: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MAP_STREAM);
    Array2::from_shape_simple_fn((a_dim, dx), || rng.random::<f64>())
}

pub fn make_toy_dataset(
    seed: u64,
    c_seen: usize,
    c_unseen: usize,
    dx: usize,
    a_dim: usize,
    n_per_class: usize,
) -> Result<GzslDataset> {
    for (name, v) in [
        ("c_seen", c_seen),
        ("c_unseen", c_unseen),
        ("dx", dx),
        ("a_dim", a_dim),
        ("n_per_class", n_per_class),
    ] {
        if v == 0 {
            return Err(Error::Argument(format!(
                "toy dataset: `{name}` must be at least 1"
            )));
        }
    }
    if dx < a_dim {
        return Err(Error::Argument(format!(
            "toy dataset: dx ({dx}) must be >= a_dim ({a_dim})"
        )));
    }

    let map = toy_mean_map(seed, a_dim, dx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = c_seen + c_unseen;
    let attrs = Array2::from_shape_simple_fn((n_classes, a_dim), || rng.random::<f32>());

    // seen: train rows then test rows per class; unseen: test rows only
    let n_samples = n_per_class * (2 * c_seen + c_unseen);
    let mut features = Array2::<f32>::zeros((n_samples, dx));
    let mut labels = Vec::with_capacity(n_samples);
    let mut split = SplitSpec::default();
    let mut row = 0;
    for class in 0..n_classes {
        let mean: Array1<f64> = attrs.row(class).mapv(f64::from).dot(&map);
        let parts: &[u8] = if class < c_seen { &[0, 1] } else { &[2] };
        for &part in parts {
            for _ in 0..n_per_class {
                for (j, m) in mean.iter().enumerate() {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    features[[row, j]] = (m + TOY_NOISE_STD * noise) as f32;
                }
                labels.push(class);
                match part {
                    0 => split.train.push(row),
                    1 => split.test_seen.push(row),
                    _ => split.test_unseen.push(row),
                }
                row += 1;
            }
        }
    }

    let seen = attrs.slice(ndarray::s![..c_seen, ..]).to_owned();
    let unseen = attrs.slice(ndarray::s![c_seen.., ..]).to_owned();
    let ds = GzslDataset {
        name: format!("toy-s{seed}-{c_seen}x{c_unseen}-dx{dx}-a{a_dim}-n{n_per_class}"),
        features,
        labels,
        split,
        semantics: SemanticTable { seen, unseen },
        class_map: ClassIdMap {
            seen: (1..=c_seen as i64).collect(),
            unseen: (c_seen as i64 + 1..=n_classes as i64).collect(),
        },
    };
    ds.validate()?;
    Ok(ds)
}
