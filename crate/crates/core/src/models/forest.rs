//! Random forest of Gini CART trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{class_frequencies, grow, GiniStat, GrowOptions, Node};
use super::{derive_seed, RandomForestParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Node>,
}

pub fn default_features_per_split(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).max(1)
}

pub fn fit(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    params: &RandomForestParams,
    seed: u64,
) -> ForestModel {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let opts = GrowOptions {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: Some(
            params
                .features_per_split
                .unwrap_or_else(|| default_features_per_split(p)),
        ),
    };
    let empty = GiniStat::new(labels, n_classes);
    let leaf = |s: &[usize]| class_frequencies(labels, n_classes, s);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(rows, &samples, &empty, &opts, &mut rng, &leaf)
        })
        .collect();
    ForestModel { trees }
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.trees.first().map_or(0, |t| t.leaf_for(row).len())];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.leaf_for(row)) {
                *a += v;
            }
        }
        let k = self.trees.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}
