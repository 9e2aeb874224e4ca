use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mobility::TrajectoryDataset;
use crate::{Error, Result};

/// Randomly partitions `d` into a training set of `round(train_fraction * N)`
/// rows and a test set holding the rest.
pub fn split_dataset(
    d: &TrajectoryDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(TrajectoryDataset, TrajectoryDataset)> {
    if d.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("ml.train_fraction", "must lie in (0, 1)"));
    }
    let n_train = (train_fraction * d.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| TrajectoryDataset {
        rows: idx.iter().map(|&i| d.rows[i]).collect(),
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
