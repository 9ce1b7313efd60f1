//! Random train/validation/test assignment shared by both sensors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{PairedDataset, Split};
use crate::error::{Error, Result};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.54, 0.36, 0.10];

pub fn validate_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|x| !(0.0..=1.0).contains(x)) || ((f[0] + f[1] + f[2]) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must lie in [0, 1] and sum to 1, got {f:?}"
        )));
    }
    Ok(())
}

/// Train and validation sizes are rounded; the test split takes the rest.
pub fn split_sizes(n: usize, f: [f64; 3]) -> Result<[usize; 3]> {
    validate_fractions(f)?;
    let train = ((f[0] * n as f64).round() as usize).min(n);
    let val = ((f[1] * n as f64).round() as usize).min(n - train);
    Ok([train, val, n - train - val])
}

/// Split labels for `n` rows under a seeded random permutation.
pub fn split_labels(n: usize, f: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    let [train, val, _] = split_sizes(n, f)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![Split::Test; n];
    for (rank, &row) in perm.iter().enumerate() {
        labels[row] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(labels)
}

/// Assigns split labels by row; both sensors share the row index, so pairs
/// stay together.
pub fn split_dataset(ds: PairedDataset, fractions: [f64; 3], seed: u64) -> Result<PairedDataset> {
    let labels = split_labels(ds.len(), fractions, seed)?;
    ds.with_split(labels)
}
