//! Stratified k-fold assignment.

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id per record.
    pub assignments: Vec<usize>,
    /// Class each record was stratified on.
    pub strata: Vec<usize>,
}

/// Indices of one cross-validation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    /// Round `r` tests on fold `r`, validates on fold `(r + 1) % k` and
    /// trains on the remaining `k - 2` folds.
    pub fn round(&self, r: usize) -> Result<RoundSplit> {
        if r >= self.k {
            return Err(Error::invalid(format!("round {r} outside {} folds", self.k)));
        }
        let val_fold = (r + 1) % self.k;
        let mut split = RoundSplit {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (i, &f) in self.assignments.iter().enumerate() {
            if f == r {
                split.test.push(i);
            } else if f == val_fold {
                split.val.push(i);
            } else {
                split.train.push(i);
            }
        }
        Ok(split)
    }
}

/// The class a record is stratified on: its only label, or for label sets
/// the constituent class that is most frequent in the whole dataset (ties to
/// the lowest class id).
pub fn stratum(labels: &[usize], class_counts: &[usize]) -> usize {
    let mut best = labels[0];
    for &c in labels {
        if class_counts[c] > class_counts[best] || (class_counts[c] == class_counts[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Shuffles each stratum with the seed, then deals records round-robin over
/// the folds, continuing the dealing position from one stratum to the next.
/// Per-stratum fold counts therefore differ by at most one, and so do fold
/// sizes.
pub fn stratified_kfold(labels: &[Vec<usize>], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} records into {k} folds")));
    }
    if let Some(i) = labels.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("record {i} has no labels")));
    }
    let n_classes = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; n_classes];
    for &c in labels.iter().flatten() {
        counts[c] += 1;
    }
    let strata: Vec<usize> = labels.iter().map(|l| stratum(l, &counts)).collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &s) in strata.iter().enumerate() {
        groups[s].push(i);
    }
    for (c, group) in groups.iter().enumerate() {
        if !group.is_empty() && group.len() < k {
            log::warn!(
                "class {c} has {} stratification members for {k} folds; some folds will lack it",
                group.len()
            );
        }
    }
    let root = Stream::new(seed);
    let mut assignments = vec![0usize; n];
    let mut offset = 0;
    for (c, group) in groups.iter_mut().enumerate() {
        root.split(c as u64).shuffle(group);
        for (j, &i) in group.iter().enumerate() {
            assignments[i] = (offset + j) % k;
        }
        offset += group.len();
    }
    Ok(FoldPlan {
        k,
        assignments,
        strata,
    })
}
