use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;

/// Seeded session-level train/dev/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: f64,
    pub dev: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { seed: 0, train: 0.70, dev: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSplit {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn split(&self, sessions: usize) -> SessionSplit {
        let mut order: Vec<usize> = (0..sessions).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_train = ((sessions as f64 * self.train).round() as usize).clamp(sessions.min(1), sessions);
        let n_dev = ((sessions as f64 * self.dev).round() as usize).min(sessions - n_train);
        let mut train = order[..n_train].to_vec();
        let mut dev = order[n_train..n_train + n_dev].to_vec();
        let mut test = order[n_train + n_dev..].to_vec();
        train.sort_unstable();
        dev.sort_unstable();
        test.sort_unstable();
        SessionSplit { train, dev, test }
    }
}

impl SessionSplit {
    pub fn select<'a>(dialogues: &'a [Dialogue], ids: &[usize]) -> Vec<&'a Dialogue> {
        ids.iter().map(|&i| &dialogues[i]).collect()
    }
}
