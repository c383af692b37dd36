//! Permutation importance and Shapley-value attributions.
//!
//! Attributions explain the class-1 (home win) probability. Features left
//! out of a coalition are filled in from background rows and the model
//! output is averaged over the background.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::eval::{evaluate, Averaging};
use crate::models::{derive_seed, Dataset, TrainedModel};

pub const DEFAULT_TOP_N: usize = 20;
pub const MAX_EXACT_FEATURES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    Accuracy,
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub mean_drop: f64,
    pub std_drop: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub metric: ImportanceMetric,
    pub baseline: f64,
    pub repeats: usize,
    /// Ordered by rank (largest mean drop first).
    pub entries: Vec<ImportanceEntry>,
}

fn metric_value(probs: &[Vec<f64>], labels: &[usize], metric: ImportanceMetric) -> Result<f64> {
    let averaging = if probs.first().map_or(2, Vec::len) == 2 {
        Averaging::BinaryPositive
    } else {
        Averaging::Macro
    };
    let r = evaluate(probs, labels, averaging, 0.5)?;
    match metric {
        ImportanceMetric::Accuracy => Ok(r.accuracy),
        ImportanceMetric::Auc => r.auc.ok_or(Error::SingleClassLabels),
    }
}

/// Permutation importance for any probability predictor over `data`.
pub fn permutation_importance_with<P>(
    predict: &P,
    data: &Dataset,
    repeats: usize,
    seed: u64,
    metric: ImportanceMetric,
) -> Result<ImportanceReport>
where
    P: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if repeats == 0 {
        return Err(Error::InvalidRepeats);
    }
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let score = |rows: &[Vec<f64>]| {
        let probs: Vec<Vec<f64>> = rows.iter().map(|r| predict(r)).collect();
        metric_value(&probs, &data.labels, metric)
    };
    let baseline = score(&data.rows)?;
    let p = data.feature_names.len();
    let drops: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|f| {
            let mut ds = Vec::with_capacity(repeats);
            let mut rows = data.rows.clone();
            let mut column: Vec<f64> = data.rows.iter().map(|r| r[f]).collect();
            for rep in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, f as u64), rep as u64));
                column.copy_from_slice(&data.rows.iter().map(|r| r[f]).collect::<Vec<_>>());
                column.shuffle(&mut rng);
                for (r, v) in rows.iter_mut().zip(&column) {
                    r[f] = *v;
                }
                ds.push(baseline - score(&rows)?);
            }
            let mean = ds.iter().sum::<f64>() / repeats as f64;
            let var = ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / repeats as f64;
            Ok((mean, var.sqrt()))
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| drops[b].0.total_cmp(&drops[a].0).then(a.cmp(&b)));
    let entries = order
        .iter()
        .enumerate()
        .map(|(rank, &f)| ImportanceEntry {
            feature: data.feature_names[f].clone(),
            mean_drop: drops[f].0,
            std_drop: drops[f].1,
            rank: rank + 1,
        })
        .collect();
    Ok(ImportanceReport {
        metric,
        baseline,
        repeats,
        entries,
    })
}

/// Permutation importance of a trained model on held-out `data`.
pub fn permutation_importance(
    model: &TrainedModel,
    data: &Dataset,
    repeats: usize,
    seed: u64,
    metric: ImportanceMetric,
) -> Result<ImportanceReport> {
    if model.feature_names != data.feature_names {
        return Err(Error::FeatureMismatch(format!(
            "model has {} features, table has {}",
            model.feature_names.len(),
            data.feature_names.len()
        )));
    }
    permutation_importance_with(&|r: &[f64]| model.predict_row(r), data, repeats, seed, metric)
}

impl ImportanceReport {
    pub fn top(&self, n: usize) -> ImportanceReport {
        ImportanceReport {
            entries: self.entries.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "mean_drop", "std_drop", "rank"])?;
        for e in &self.entries {
            w.write_record([
                e.feature.clone(),
                e.mean_drop.to_string(),
                e.std_drop.to_string(),
                e.rank.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMode {
    /// Enumerates all 2^p coalitions.
    Exact,
    /// Averages marginal contributions over random feature orderings.
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyMatrix {
    pub feature_names: Vec<String>,
    pub row_ids: Vec<String>,
    pub feature_values: Vec<Vec<f64>>,
    /// `contributions[row][feature]`.
    pub contributions: Vec<Vec<f64>>,
    /// Mean model output over the background rows.
    pub base_value: f64,
}

/// Mean output over the background with the features in `mask` taken from
/// `row`.
fn coalition_value<F: Fn(&[f64]) -> f64>(
    f: &F,
    row: &[f64],
    background: &[Vec<f64>],
    mask: &[bool],
    buf: &mut Vec<f64>,
) -> f64 {
    let mut total = 0.0;
    for b in background {
        buf.clear();
        buf.extend(
            b.iter()
                .zip(row)
                .zip(mask)
                .map(|((bv, rv), &m)| if m { *rv } else { *bv }),
        );
        total += f(buf);
    }
    total / background.len() as f64
}

fn exact_row<F: Fn(&[f64]) -> f64>(f: &F, row: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let p = row.len();
    let mut buf = Vec::with_capacity(p);
    let mut mask = vec![false; p];
    let values: Vec<f64> = (0..1usize << p)
        .map(|s| {
            for (j, m) in mask.iter_mut().enumerate() {
                *m = s >> j & 1 == 1;
            }
            coalition_value(f, row, background, &mask, &mut buf)
        })
        .collect();
    // weight[k] = k! (p−k−1)! / p! = 1 / (p · C(p−1, k))
    let weight: Vec<f64> = (0..p)
        .map(|k| {
            let binom = (0..k).fold(1.0, |c, t| c * (p - 1 - t) as f64 / (t + 1) as f64);
            1.0 / (p as f64 * binom)
        })
        .collect();
    (0..p)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << p)
                .filter(|s| s & bit == 0)
                .map(|s| weight[(s as u64).count_ones() as usize] * (values[s | bit] - values[s]))
                .sum()
        })
        .collect()
}

fn monte_carlo_row<F: Fn(&[f64]) -> f64>(
    f: &F,
    row: &[f64],
    background: &[Vec<f64>],
    base: f64,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let p = row.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    let mut buf = Vec::with_capacity(p);
    for _ in 0..samples {
        order.shuffle(&mut rng);
        let mut mask = vec![false; p];
        let mut prev = base;
        for &j in &order {
            mask[j] = true;
            let v = coalition_value(f, row, background, &mask, &mut buf);
            phi[j] += v - prev;
            prev = v;
        }
    }
    phi.iter_mut().for_each(|v| *v /= samples.max(1) as f64);
    phi
}

/// Shapley contributions of every feature to `f` for each of `rows`.
pub fn shapley_values<F>(
    f: &F,
    feature_names: &[String],
    rows: &[Vec<f64>],
    background: &[Vec<f64>],
    mode: ShapleyMode,
    seed: u64,
) -> Result<ShapleyMatrix>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    let p = feature_names.len();
    if mode == ShapleyMode::Exact && p > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeaturesForExact(p));
    }
    if let Some(r) = rows.iter().chain(background).find(|r| r.len() != p) {
        return Err(Error::FeatureMismatch(format!(
            "row has {} values for {p} features",
            r.len()
        )));
    }
    let base_value = background.iter().map(|b| f(b)).sum::<f64>() / background.len() as f64;
    let contributions = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| match mode {
            ShapleyMode::Exact => exact_row(f, row, background),
            ShapleyMode::MonteCarlo { samples } => {
                monte_carlo_row(f, row, background, base_value, samples, derive_seed(seed, i as u64))
            }
        })
        .collect();
    Ok(ShapleyMatrix {
        feature_names: feature_names.to_vec(),
        row_ids: (0..rows.len()).map(|i| i.to_string()).collect(),
        feature_values: rows.to_vec(),
        contributions,
        base_value,
    })
}

/// Shapley values of a trained model's class-1 probability.
pub fn model_shapley_values(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    background: &[Vec<f64>],
    mode: ShapleyMode,
    seed: u64,
) -> Result<ShapleyMatrix> {
    let f = |r: &[f64]| model.predict_row(r)[1];
    shapley_values(&f, &model.feature_names, rows, background, mode, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummaryEntry {
    pub feature: String,
    pub mean_abs_contribution: f64,
    /// Competition rank: tied features share the best rank of the tie.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub base_value: f64,
    pub rows: usize,
    pub entries: Vec<ShapSummaryEntry>,
}

pub fn shap_summary(m: &ShapleyMatrix) -> ShapSummary {
    let p = m.feature_names.len();
    let n = m.contributions.len().max(1) as f64;
    let means: Vec<f64> = (0..p)
        .map(|j| m.contributions.iter().map(|r| r[j].abs()).sum::<f64>() / n)
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let mut entries: Vec<ShapSummaryEntry> = Vec::with_capacity(p);
    for (pos, &j) in order.iter().enumerate() {
        let rank = match entries.last() {
            Some(prev) if prev.mean_abs_contribution == means[j] => prev.rank,
            _ => pos + 1,
        };
        entries.push(ShapSummaryEntry {
            feature: m.feature_names[j].clone(),
            mean_abs_contribution: means[j],
            rank,
        });
    }
    ShapSummary {
        base_value: m.base_value,
        rows: m.contributions.len(),
        entries,
    }
}

impl ShapleyMatrix {
    /// One `(row_id, feature, feature_value, contribution)` line per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row_id", "feature", "feature_value", "contribution"])?;
        for ((id, vals), contrib) in self.row_ids.iter().zip(&self.feature_values).zip(&self.contributions) {
            for ((name, v), c) in self.feature_names.iter().zip(vals).zip(contrib) {
                w.write_record([id.clone(), name.clone(), v.to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
