use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledClip, ManeuverClass};
use crate::error::{Error, Result};

/// Train/validation/test partition of clip ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Resolves the ids of one part back to clips.
    pub fn select<'a>(&self, part: &[String], clips: &'a [LabeledClip]) -> Vec<&'a LabeledClip> {
        let by_id: BTreeMap<&str, &LabeledClip> =
            clips.iter().map(|c| (c.clip_id.as_str(), c)).collect();
        part.iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .collect()
    }
}

/// Stratified, seeded split. Each class is shuffled and cut independently:
/// `floor(n·r_train)` to train, `floor(n·r_val)` to validation, the
/// remainder to test.
pub fn split_dataset(
    clips: &[LabeledClip],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (rt, rv, rs) = ratios;
    if !(rt > 0.0 && rv > 0.0 && rs > 0.0) || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios must be positive and sum to 1, got ({rt}, {rv}, {rs})"
        )));
    }
    if clips.is_empty() {
        return Err(Error::config("cannot split an empty clip list"));
    }
    let mut seen = HashSet::new();
    for c in clips {
        if !seen.insert(c.clip_id.as_str()) {
            return Err(Error::validation(format!(
                "duplicate clip id {:?}",
                c.clip_id
            )));
        }
    }

    let mut strata: BTreeMap<ManeuverClass, Vec<String>> = BTreeMap::new();
    for c in clips {
        strata.entry(c.label).or_default().push(c.clip_id.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit {
        train: vec![],
        val: vec![],
        test: vec![],
        seed,
    };
    for (_, mut ids) in strata {
        ids.shuffle(&mut rng);
        let n = ids.len() as f64;
        let n_train = floor_share(n, rt);
        let n_val = floor_share(n, rv);
        let mut rest = ids.split_off(n_train);
        split.train.extend(ids);
        let test = rest.split_off(n_val);
        split.val.extend(rest);
        split.test.extend(test);
    }
    Ok(split)
}

/// `floor(n·r)`, tolerant of binary representation error in `r`
/// (0.6 · 5 must give 3).
fn floor_share(n: f64, r: f64) -> usize {
    (n * r + 1e-9).floor() as usize
}
