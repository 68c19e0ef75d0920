use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ForestError;

/// Indices into the input slices, each list sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class split: `train_fraction` of each class goes to the training pool.
/// With `balanced`, the larger class in the pool is downsampled to the size of
/// the smaller; dropped cases join the test set. The result only depends on
/// ids, labels and seed, not on input order.
pub fn stratified_split(
    ids: &[String],
    labels: &[bool],
    train_fraction: f64,
    balanced: bool,
    seed: u64,
) -> Result<Split, ForestError> {
    if ids.len() != labels.len() {
        return Err(ForestError::LengthMismatch {
            rows: ids.len(),
            labels: labels.len(),
        });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ForestError::BadFraction(train_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools = Vec::with_capacity(2);
    for class in [true, false] {
        let mut members: Vec<usize> = (0..ids.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            return Err(ForestError::MissingClass);
        }
        members.sort_by(|&a, &b| ids[a].cmp(&ids[b]).then(a.cmp(&b)));
        members.shuffle(&mut rng);
        let take = (train_fraction * members.len() as f64).floor() as usize;
        members.truncate(take);
        pools.push(members);
    }
    if balanced {
        let m = pools.iter().map(Vec::len).min().unwrap_or(0);
        pools.iter_mut().for_each(|p| p.truncate(m));
    }
    let mut in_train = vec![false; ids.len()];
    let mut train: Vec<usize> = pools.concat();
    train.iter().for_each(|&i| in_train[i] = true);
    train.sort_unstable();
    let test = (0..ids.len()).filter(|&i| !in_train[i]).collect();
    Ok(Split { train, test })
}
