use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{seeded, streams};

/// Disjoint training and calibration index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub cal: Vec<usize>,
}

impl SplitIndices {
    /// Wraps explicit index sets, checking they are non-empty and disjoint.
    pub fn new(train: Vec<usize>, cal: Vec<usize>) -> Result<Self> {
        if train.is_empty() || cal.is_empty() {
            return Err(Error::InvalidSplit(
                "train and calibration sets must be non-empty".into(),
            ));
        }
        let mut all: Vec<usize> = train.iter().chain(&cal).copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSplit("train and calibration sets overlap".into()));
        }
        Ok(Self { train, cal })
    }
}

/// Train/calibration/test partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub fit: SplitIndices,
    pub test: Vec<usize>,
}

/// Random split of `0..n` into `⌊train_fraction·n⌋` training indices and the
/// remainder for calibration. Both sides are returned sorted.
pub fn split_data(n: usize, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if n < 4 {
        return Err(Error::InvalidSplit(format!("need at least 4 points, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidSplit(format!(
            "train_fraction {train_fraction} leaves an empty side for n = {n}"
        )));
    }
    let mut idx = shuffled(n, seed);
    let mut cal = idx.split_off(n_train);
    idx.sort_unstable();
    cal.sort_unstable();
    Ok(SplitIndices { train: idx, cal })
}

/// Three-way split: `⌊train_fraction·n⌋` train, `⌊test_fraction·n⌋` test,
/// the rest calibration.
pub fn split_three(n: usize, train_fraction: f64, test_fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(train_fraction > 0.0 && test_fraction > 0.0 && train_fraction + test_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "fractions must be positive with train + test < 1, got {train_fraction} + {test_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    let n_test = (test_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_test == 0 || n_train + n_test >= n {
        return Err(Error::InvalidSplit(format!(
            "fractions {train_fraction}/{test_fraction} leave an empty side for n = {n}"
        )));
    }
    let idx = shuffled(n, seed);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..n_train + n_test].to_vec();
    let mut cal = idx[n_train + n_test..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    cal.sort_unstable();
    Ok(DataSplit {
        fit: SplitIndices { train, cal },
        test,
    })
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed, streams::SPLIT));
    idx
}
