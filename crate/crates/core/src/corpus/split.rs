use super::{CorpusError, ProblemSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Disjoint train/dev partition of problem ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub seed: u64,
}

/// Seeded uniform shuffle followed by a prefix cut: the first
/// `round(dev_fraction * N)` shuffled ids form the dev set.
pub fn split_train_dev(
    problems: &[ProblemSpec],
    dev_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(CorpusError::InvalidSplit(format!(
            "dev_fraction must lie in (0, 1), got {dev_fraction}"
        )));
    }
    if problems.len() < 2 {
        return Err(CorpusError::InvalidSplit(format!(
            "need at least 2 problems, got {}",
            problems.len()
        )));
    }
    let mut ids: Vec<String> = problems.iter().map(|p| p.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let dev_len = (dev_fraction * ids.len() as f64).round() as usize;
    let train = ids.split_off(dev_len);
    Ok(DatasetSplit { train, dev: ids, seed })
}
