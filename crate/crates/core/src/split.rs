//! Stratified train/validation/test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::template::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Within each group: seeded shuffle, then `floor(n·train)` for training,
/// `floor(n·val)` for validation and the remainder for test. Each output
/// list is sorted ascending.
pub fn split(data: &LabeledDataset, fractions: (f64, f64, f64), seed: u64) -> Result<DataSplit> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(*f > 0.0 && f.is_finite()))
        || (ft + fv + fs - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got ({ft}, {fv}, {fs})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DataSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (group, list) in data.group_index_lists().iter().enumerate() {
        let n = list.len();
        if n < 3 {
            return Err(Error::GroupTooSmall { group, size: n });
        }
        let mut idx = list.clone();
        idx.shuffle(&mut rng);
        // Absorb products like 0.29·100 = 28.999999999999996.
        let n_train = (n as f64 * ft + 1e-9).floor() as usize;
        let n_val = ((n as f64 * fv + 1e-9).floor() as usize).min(n - n_train);
        out.train.extend_from_slice(&idx[..n_train]);
        out.validation
            .extend_from_slice(&idx[n_train..n_train + n_val]);
        out.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
