use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Per-class random split. Each class sends `round_half_up(fraction * count)`
/// samples to the first (training) part, clamped so both parts keep at
/// least one sample of the class. Both parts preserve the original order.
pub fn stratified_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in dataset.classes() {
        let mut members: Vec<usize> = dataset
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        let count = members.len();
        if count < 2 {
            return Err(Error::InvalidParameter(format!(
                "class {class} has {count} sample(s); a split needs at least 2"
            )));
        }
        let take = ((fraction * count as f64 + 0.5).floor() as usize).clamp(1, count - 1);
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}
