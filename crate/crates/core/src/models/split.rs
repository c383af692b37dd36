//! Stratified train/test splits and k-fold partitions over label vectors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn class_indices(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class.retain(|c| !c.is_empty());
    by_class
}

/// Returns sorted `(train, test)` row indices. Each class contributes
/// `round(test_fraction · n_c)` rows to the test side, kept within
/// `[1, n_c − 1]`.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let classes = class_indices(labels);
    if classes.len() < 2 {
        return Err(Error::TooFewRows("stratified split needs at least two classes".into()));
    }
    if let Some(c) = classes.iter().find(|c| c.len() < 2) {
        return Err(Error::TooFewRows(format!(
            "class of row {} has a single row; two per class required",
            c[0]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut members in classes {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Partitions row indices into `k` folds, each sorted. Rows of every class
/// are shuffled and dealt round-robin, continuing the deal position from
/// one class to the next so fold sizes stay balanced.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let classes = class_indices(labels);
    if classes.is_empty() {
        return Err(Error::TooFewRows("no rows".into()));
    }
    if let Some(c) = classes.iter().find(|c| c.len() < k) {
        return Err(Error::TooFewRows(format!(
            "class with {} rows cannot fill {k} folds",
            c.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for mut members in classes {
        members.shuffle(&mut rng);
        for (i, m) in members.iter().enumerate() {
            folds[(offset + i) % k].push(*m);
        }
        offset += members.len();
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}
