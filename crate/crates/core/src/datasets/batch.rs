use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GzslDataset;
use crate::error::{Error, Result};

/// Shuffled order of `0..n` for one epoch; a pure function of `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch.wrapping_add(0x5eed_0000));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// One mini-batch of training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Positions within the training split.
    pub indices: Vec<usize>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    /// Semantic vector of each row's label.
    pub semantics: Array2<f64>,
}

/// Iterates over one shuffled epoch of the training split. The last batch may
/// be short.
pub struct BatchIterator<'a> {
    dataset: &'a GzslDataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<'a> BatchIterator<'a> {
    pub fn new(dataset: &'a GzslDataset, batch_size: usize, seed: u64) -> Result<Self> {
        Self::for_epoch(dataset, batch_size, seed, 0)
    }

    pub fn for_epoch(
        dataset: &'a GzslDataset,
        batch_size: usize,
        seed: u64,
        epoch: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Argument("batch size must be at least 1".into()));
        }
        let n = dataset.split.train.len();
        if n == 0 {
            return Err(Error::Argument("training split is empty".into()));
        }
        Ok(BatchIterator {
            dataset,
            order: epoch_permutation(n, seed, epoch),
            batch_size,
            cursor: 0,
        })
    }

    pub fn n_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

pub(crate) fn make_batch(dataset: &GzslDataset, positions: &[usize]) -> Result<Batch> {
    let rows: Vec<usize> = positions.iter().map(|&p| dataset.split.train[p]).collect();
    let labels: Vec<usize> = rows.iter().map(|&r| dataset.labels[r]).collect();
    Ok(Batch {
        indices: positions.to_vec(),
        features: dataset.features.select(Axis(0), &rows).mapv(f64::from),
        semantics: dataset.semantics.rows_for(&labels)?,
        labels,
    })
}

impl Iterator for BatchIterator<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let positions = &self.order[self.cursor..end];
        self.cursor = end;
        Some(make_batch(self.dataset, positions).expect("validated dataset"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_toy_dataset;

    #[test]
    fn batch_sizes_include_short_tail() {
        // 2 seen classes × 5 = 10 training rows
        let ds = make_toy_dataset(1, 2, 1, 4, 2, 5).unwrap();
        let sizes: Vec<usize> = BatchIterator::new(&ds, 4, 0)
            .unwrap()
            .map(|b| b.labels.len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn same_seed_same_order_and_full_coverage() {
        let ds = make_toy_dataset(2, 4, 2, 6, 3, 9).unwrap();
        let a: Vec<Vec<usize>> = BatchIterator::new(&ds, 5, 42)
            .unwrap()
            .map(|b| b.indices)
            .collect();
        let b: Vec<Vec<usize>> = BatchIterator::new(&ds, 5, 42)
            .unwrap()
            .map(|b| b.indices)
            .collect();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..36).collect::<Vec<_>>());
    }

    #[test]
    fn batches_pair_features_with_their_semantics() {
        let ds = make_toy_dataset(2, 4, 2, 6, 3, 9).unwrap();
        for b in BatchIterator::new(&ds, 7, 1).unwrap() {
            for (i, &l) in b.labels.iter().enumerate() {
                let expected = ds.semantics.row(l).unwrap().mapv(f64::from);
                assert_eq!(b.semantics.row(i), expected);
            }
        }
    }

    #[test]
    fn zero_batch_size_and_empty_train_are_rejected() {
        let mut ds = make_toy_dataset(2, 4, 2, 6, 3, 9).unwrap();
        assert!(BatchIterator::new(&ds, 0, 1).is_err());
        ds.split.train.clear();
        assert!(matches!(
            BatchIterator::new(&ds, 3, 1),
            Err(Error::Argument(_))
        ));
    }
}
