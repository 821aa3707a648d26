//! Seeded k-fold assignment at step or subject level.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    StepLevel,
    SubjectLevel,
}

impl std::str::FromStr for FoldMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "step" | "step_level" | "step-level" => Ok(FoldMode::StepLevel),
            "subject" | "subject_level" | "subject-level" => Ok(FoldMode::SubjectLevel),
            other => Err(format!("unknown fold mode `{other}` (step, subject)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub mode: FoldMode,
    /// Fold index of every sample, in dataset order.
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Step level: shuffle samples, deal round-robin. Subject level: shuffle
/// distinct subjects (sorted first, so input order does not matter), deal them
/// round-robin, and every sample follows its subject.
pub fn make_folds(subject_ids: &[&str], k: usize, mode: FoldMode, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(contract(format!("need at least 2 folds, got {k}")));
    }
    if subject_ids.len() < k {
        return Err(contract(format!("{} samples cannot fill {k} folds", subject_ids.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; subject_ids.len()];
    match mode {
        FoldMode::StepLevel => {
            let mut idx: Vec<usize> = (0..subject_ids.len()).collect();
            idx.shuffle(&mut rng);
            for (pos, i) in idx.into_iter().enumerate() {
                fold_of[i] = pos % k;
            }
        }
        FoldMode::SubjectLevel => {
            let mut subjects: Vec<&str> = subject_ids.to_vec();
            subjects.sort_unstable();
            subjects.dedup();
            if subjects.len() < k {
                return Err(contract(format!("{} subjects cannot fill {k} subject-level folds", subjects.len())));
            }
            subjects.shuffle(&mut rng);
            let fold: BTreeMap<&str, usize> = subjects.iter().enumerate().map(|(i, s)| (*s, i % k)).collect();
            for (i, s) in subject_ids.iter().enumerate() {
                fold_of[i] = fold[s];
            }
        }
    }
    Ok(FoldAssignment { k, mode, fold_of })
}
