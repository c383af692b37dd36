//! Gradient-boosted regression trees on the logistic loss.
//!
//! Multiclass targets are handled one-vs-rest: one additive model per
//! class, with predicted scores `σ(F_k)` renormalized to sum to one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowOptions, Node, SquaredErrorStat};
use super::{derive_seed, GradientBoostingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedScorer {
    pub base_score: f64,
    pub learning_rate: f64,
    /// Each tree stores a single-element leaf: the raw additive update.
    pub trees: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingModel {
    /// One scorer for class 1 when binary, one per class otherwise.
    pub scorers: Vec<BoostedScorer>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn fit_binary(rows: &[Vec<f64>], y: &[f64], params: &GradientBoostingParams, seed: u64) -> BoostedScorer {
    let n = rows.len();
    let prior = (y.iter().sum::<f64>() / n as f64).clamp(1e-12, 1.0 - 1e-12);
    let base_score = (prior / (1.0 - prior)).ln();
    let mut f = vec![base_score; n];
    let opts = GrowOptions {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: None,
    };
    let samples: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let resid: Vec<f64> = y.iter().zip(&p).map(|(y, p)| y - p).collect();
        let leaf = |s: &[usize]| {
            let num: f64 = s.iter().map(|&i| resid[i]).sum();
            let den: f64 = s.iter().map(|&i| p[i] * (1.0 - p[i])).sum();
            vec![if den > 1e-12 { num / den } else { 0.0 }]
        };
        let tree = grow(rows, &samples, &SquaredErrorStat::new(&resid), &opts, &mut rng, &leaf);
        for (fi, row) in f.iter_mut().zip(rows) {
            *fi += params.learning_rate * tree.leaf_for(row)[0];
        }
        trees.push(tree);
    }
    BoostedScorer {
        base_score,
        learning_rate: params.learning_rate,
        trees,
    }
}

pub fn fit(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    params: &GradientBoostingParams,
    seed: u64,
) -> BoostingModel {
    let targets: Vec<usize> = if n_classes == 2 {
        vec![1]
    } else {
        (0..n_classes).collect()
    };
    let scorers = targets
        .par_iter()
        .map(|&c| {
            let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == c))).collect();
            fit_binary(rows, &y, params, derive_seed(seed, c as u64))
        })
        .collect();
    BoostingModel { scorers }
}

impl BoostedScorer {
    pub fn raw(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.leaf_for(row)[0])
                .sum::<f64>()
    }
}

impl BoostingModel {
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        if self.scorers.len() == 1 {
            let p = sigmoid(self.scorers[0].raw(row));
            return vec![1.0 - p, p];
        }
        let s: Vec<f64> = self.scorers.iter().map(|sc| sigmoid(sc.raw(row))).collect();
        let total: f64 = s.iter().sum();
        s.into_iter().map(|v| v / total).collect()
    }
}
