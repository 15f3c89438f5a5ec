use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Assignment of every example to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    /// Set when some declared class has fewer than `k` examples, so not
    /// every fold can hold one of each.
    pub best_effort: bool,
}

/// Stratified folds: each class is shuffled with `seed`, then dealt
/// round-robin, continuing from the fold where the previous class stopped so
/// fold sizes stay within one of each other.
pub fn make_folds(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    if labels.len() < k {
        return Err(EvalError::TooFewExamples { examples: labels.len(), k });
    }
    let n_classes = n_classes.max(labels.iter().max().map_or(0, |m| m + 1));
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let best_effort = by_class.iter().any(|members| members.len() < k);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; labels.len()];
    let mut next = 0usize;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        best_effort,
    })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// `(train, test)` example indices for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    /// `counts[fold][class]`.
    pub fn class_counts(&self, labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0usize; n_classes]; self.k];
        for (&f, &l) in self.assignments.iter().zip(labels) {
            counts[f][l] += 1;
        }
        counts
    }
}
