//! Seeded random hyperparameter search scored by stratified k-fold CV.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{argmax, auc, evaluate, Averaging};
use super::split::stratified_kfold;
use super::{
    derive_seed, train, Dataset, Family, GradientBoostingParams, Hyperparameters, LogisticParams, ModelSpec,
    RandomForestParams,
};
use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 10;

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

/// Draws one spec from the family's search grid.
pub fn sample_spec<R: Rng>(family: Family, rng: &mut R, seed: u64) -> ModelSpec {
    let hyperparameters = match family {
        Family::LogisticRegression => Hyperparameters::LogisticRegression(LogisticParams {
            l2_strength: log_uniform(rng, 1e-4, 1e2),
        }),
        Family::RandomForest => Hyperparameters::RandomForest(RandomForestParams {
            n_trees: rng.gen_range(100..=500),
            max_depth: rng.gen_range(3..=20),
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }),
        Family::GradientBoosting => Hyperparameters::GradientBoosting(GradientBoostingParams {
            n_rounds: rng.gen_range(50..=500),
            learning_rate: log_uniform(rng, 0.01, 0.3),
            max_depth: rng.gen_range(2..=8),
            min_leaf: 5,
        }),
    };
    ModelSpec { hyperparameters, seed }
}

/// Whether a spec lies inside its family's declared search grid.
pub fn within_grid(spec: &ModelSpec) -> bool {
    match spec.hyperparameters {
        Hyperparameters::LogisticRegression(p) => (1e-4..=1e2).contains(&p.l2_strength),
        Hyperparameters::RandomForest(p) => (100..=500).contains(&p.n_trees) && (3..=20).contains(&p.max_depth),
        Hyperparameters::GradientBoosting(p) => {
            (50..=500).contains(&p.n_rounds)
                && (0.01..=0.3).contains(&p.learning_rate)
                && (2..=8).contains(&p.max_depth)
        }
    }
}

/// Mean fold score of `spec`: AUC for binary data, macro-F1 otherwise.
pub fn cv_score(spec: &ModelSpec, data: &Dataset, folds: &[Vec<usize>]) -> Result<f64> {
    let scores = folds
        .par_iter()
        .map(|held_out| {
            let mut in_fold = vec![false; data.len()];
            held_out.iter().for_each(|&i| in_fold[i] = true);
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_fold[i]).collect();
            let model = train(spec, &data.subset(&train_idx))?;
            let test = data.subset(held_out);
            let probs = model.predict_rows(&test.rows);
            if data.n_classes == 2 {
                let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
                let pos: Vec<bool> = test.labels.iter().map(|&l| l == 1).collect();
                auc(&scores, &pos)
            } else {
                debug_assert!(probs.iter().all(|p| argmax(p) < data.n_classes));
                evaluate(&probs, &test.labels, Averaging::Macro, 0.5).map(|r| r.f1)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub spec: ModelSpec,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: ModelSpec,
    pub best_score: f64,
    pub folds: usize,
    pub candidates: Vec<Candidate>,
}

/// Scores every candidate on the same folds and keeps the first best one.
pub fn tune_candidates(candidates: &[ModelSpec], data: &Dataset, folds: usize, seed: u64) -> Result<TuneOutcome> {
    if candidates.is_empty() {
        return Err(Error::Config("tuning budget must be at least 1".into()));
    }
    let smallest = data.class_counts().into_iter().filter(|&c| c > 0).min().unwrap_or(0);
    let k = folds.min(smallest);
    if k < 2 {
        return Err(Error::TooFewRows(format!(
            "smallest class has {smallest} rows; cross-validation needs 2"
        )));
    }
    let fold_sets = stratified_kfold(&data.labels, k, derive_seed(seed, u64::MAX))?;
    let scored: Vec<Candidate> = candidates
        .par_iter()
        .map(|spec| match cv_score(spec, data, &fold_sets) {
            Ok(s) if s.is_finite() => Candidate {
                spec: *spec,
                score: Some(s),
                error: None,
            },
            Ok(s) => Candidate {
                spec: *spec,
                score: None,
                error: Some(format!("non-finite score {s}")),
            },
            Err(e) => {
                log::warn!("candidate skipped: {e}");
                Candidate {
                    spec: *spec,
                    score: None,
                    error: Some(format!("{}: {e}", e.class())),
                }
            }
        })
        .collect();
    let mut best: Option<(ModelSpec, f64)> = None;
    for c in &scored {
        if let Some(s) = c.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c.spec, s));
            }
        }
    }
    let (best, best_score) = best.ok_or_else(|| Error::DegenerateData("every tuning candidate failed".into()))?;
    Ok(TuneOutcome {
        best,
        best_score,
        folds: k,
        candidates: scored,
    })
}

/// Random search with `budget` draws from the family's grid.
pub fn tune(family: Family, data: &Dataset, budget: usize, seed: u64) -> Result<TuneOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<ModelSpec> = (0..budget).map(|_| sample_spec(family, &mut rng, seed)).collect();
    tune_candidates(&candidates, data, DEFAULT_FOLDS, seed)
}
