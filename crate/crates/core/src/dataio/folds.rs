use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Assignment of subjects to `k` test folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSpec {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

/// Shuffle the distinct subjects with `seed` and deal them round-robin into
/// `k` folds.
pub fn kfold_split(subjects: &[String], k: usize, seed: u64) -> Result<FoldSpec> {
    if k == 0 {
        return Err(Error::invalid("kfold_split", "k must be positive"));
    }
    let mut distinct: Vec<&String> = subjects.iter().collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::invalid(
            "kfold_split",
            format!("{} distinct subjects cannot fill {k} folds", distinct.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let assignment = distinct
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i % k))
        .collect();
    Ok(FoldSpec { k, assignment })
}

impl FoldSpec {
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.assignment.get(subject).copied()
    }

    pub fn test_subjects(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    /// Indices of `subjects` (one entry per sample) in the training and test
    /// part of `fold`. Samples of unknown subjects are an error.
    pub fn split(&self, subjects: &[&str], fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if fold >= self.k {
            return Err(Error::invalid("fold", format!("fold {fold} out of range for k = {}", self.k)));
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, s) in subjects.iter().enumerate() {
            match self.fold_of(s) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => return Err(Error::invalid("fold", format!("subject {s:?} is not in the fold assignment"))),
            }
        }
        Ok((train, test))
    }
}
