//! Match-outcome classifiers: logistic regression, random forest and
//! gradient boosting, with stratified splitting, evaluation and tuning.

pub mod boosting;
pub mod eval;
pub mod forest;
pub mod logistic;
pub mod split;
pub mod tree;
pub mod tune;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

pub use eval::{evaluate, Averaging, EvaluationReport};
pub use split::{stratified_kfold, stratified_split};
pub use tune::{tune, TuneOutcome};

/// Version of the persisted model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Rows, labels and feature names in the shape the learners consume.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::FeatureMismatch(format!(
                "row has {} values for {} features",
                r.len(),
                feature_names.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::MalformedInput(format!("label {l} outside {n_classes} classes")));
        }
        Ok(Self {
            feature_names,
            rows,
            labels,
            n_classes,
        })
    }

    pub fn from_table(table: &FeatureTable) -> Result<Self> {
        Self::new(
            table.feature_names.clone(),
            table.rows.iter().map(|r| r.features.clone()).collect(),
            table.rows.iter().map(|r| r.label.class_index()).collect(),
            table.options.target_kind.n_classes(),
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LogisticRegression,
    RandomForest,
    GradientBoosting,
}

impl Family {
    pub const ALL: [Family; 3] = [
        Family::LogisticRegression,
        Family::RandomForest,
        Family::GradientBoosting,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Family::LogisticRegression => "lr",
            Family::RandomForest => "rf",
            Family::GradientBoosting => "gb",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic_regression" => Ok(Family::LogisticRegression),
            "rf" | "random_forest" => Ok(Family::RandomForest),
            "gb" | "gradient_boosting" => Ok(Family::GradientBoosting),
            _ => Err(Error::Config(format!("unknown model family `{s}` (lr|rf|gb)"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2_strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Defaults to ⌊√p⌋ when absent.
    pub features_per_split: Option<usize>,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "hyperparameters", rename_all = "snake_case")]
pub enum Hyperparameters {
    LogisticRegression(LogisticParams),
    RandomForest(RandomForestParams),
    GradientBoosting(GradientBoostingParams),
}

impl Hyperparameters {
    pub fn family(&self) -> Family {
        match self {
            Hyperparameters::LogisticRegression(_) => Family::LogisticRegression,
            Hyperparameters::RandomForest(_) => Family::RandomForest,
            Hyperparameters::GradientBoosting(_) => Family::GradientBoosting,
        }
    }

    /// Mid-grid settings used when no tuning is requested.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::LogisticRegression => Hyperparameters::LogisticRegression(LogisticParams { l2_strength: 1.0 }),
            Family::RandomForest => Hyperparameters::RandomForest(RandomForestParams {
                n_trees: 200,
                max_depth: 8,
                min_leaf: 1,
                features_per_split: None,
                bootstrap: true,
            }),
            Family::GradientBoosting => Hyperparameters::GradientBoosting(GradientBoostingParams {
                n_rounds: 100,
                learning_rate: 0.05,
                max_depth: 3,
                min_leaf: 5,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        self.hyperparameters.family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParameters {
    LogisticRegression(logistic::LogisticModel),
    RandomForest(forest::ForestModel),
    GradientBoosting(boosting::BoostingModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub n_classes: usize,
    pub parameters: FittedParameters,
}

/// SplitMix64 finalizer applied to `master + index`; used for every
/// derived stream (trees, folds, repeats) so results do not depend on
/// scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_finite(rows: &[Vec<f64>]) -> Result<()> {
    for (r, row) in rows.iter().enumerate() {
        if let Some(f) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: r, feature: f });
        }
    }
    Ok(())
}

pub fn train(spec: &ModelSpec, data: &Dataset) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    check_finite(&data.rows)?;
    if data.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateData("training labels take a single value".into()));
    }
    let (rows, labels, k) = (&data.rows, &data.labels, data.n_classes);
    let parameters = match &spec.hyperparameters {
        Hyperparameters::LogisticRegression(p) => {
            FittedParameters::LogisticRegression(logistic::fit(rows, labels, k, p.l2_strength)?)
        }
        Hyperparameters::RandomForest(p) => FittedParameters::RandomForest(forest::fit(rows, labels, k, p, spec.seed)),
        Hyperparameters::GradientBoosting(p) => {
            FittedParameters::GradientBoosting(boosting::fit(rows, labels, k, p, spec.seed))
        }
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: *spec,
        feature_names: data.feature_names.clone(),
        n_classes: k,
        parameters,
    })
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family()
    }

    /// Class probabilities of a row already in this model's feature order.
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        match &self.parameters {
            FittedParameters::LogisticRegression(m) => m.predict_row(row),
            FittedParameters::RandomForest(m) => m.predict_row(row),
            FittedParameters::GradientBoosting(m) => m.predict_row(row),
        }
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::MalformedInput(format!(
                "model format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// Probabilities for `rows` whose columns are named `feature_names`.
pub fn predict_proba(model: &TrainedModel, feature_names: &[String], rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if feature_names != model.feature_names.as_slice() {
        let first = model
            .feature_names
            .iter()
            .zip(feature_names)
            .position(|(a, b)| a != b)
            .unwrap_or(model.feature_names.len().min(feature_names.len()));
        return Err(Error::FeatureMismatch(format!(
            "model expects {} features, table has {} (first difference at column {first})",
            model.feature_names.len(),
            feature_names.len()
        )));
    }
    check_finite(rows)?;
    Ok(model.predict_rows(rows))
}
