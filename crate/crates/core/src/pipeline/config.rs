//! Plain `key = value` pipeline configuration.
//!
//! Blank lines and `#` comments are ignored. Relative paths resolve
//! against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureMode, Granularity, RollingOptions, TargetKind};
use crate::models::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterRows {
    /// One row per (match, team) full-game network.
    Match,
    /// One row per team: the mean over its networks.
    TeamSeason,
    Both,
}

impl ClusterRows {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterRows::Match => "match",
            ClusterRows::TeamSeason => "team_season",
            ClusterRows::Both => "both",
        }
    }
}

impl FromStr for ClusterRows {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "match" => Ok(ClusterRows::Match),
            "team_season" => Ok(ClusterRows::TeamSeason),
            "both" => Ok(ClusterRows::Both),
            _ => Err(Error::Config(format!(
                "cluster_rows must be match, team_season or both, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub events: Vec<PathBuf>,
    pub matches: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub rolling: RollingOptions,
    pub granularity: Granularity,
    /// Modes trained and evaluated; `--mode` narrows this to one.
    pub modes: Vec<FeatureMode>,
    pub target_kind: TargetKind,
    pub families: Vec<Family>,
    pub seed: u64,
    pub tune_budget: usize,
    pub test_fraction: f64,
    pub k_range: (usize, usize),
    pub pca_components: usize,
    pub cluster_rows: ClusterRows,
    pub top_n: usize,
    pub importance_repeats: usize,
    pub shapley_samples: usize,
    pub shapley_rows: usize,
    pub shapley_background: usize,
    /// Model analysed by importance and simulation.
    pub explain_family: Family,
    pub explain_mode: FeatureMode,
}

const KEYS: &[&str] = &[
    "events",
    "matches",
    "output_dir",
    "window",
    "min_history",
    "venue_conditioned",
    "granularity",
    "modes",
    "target",
    "families",
    "seed",
    "tune_budget",
    "test_fraction",
    "k_range",
    "pca_components",
    "cluster_rows",
    "top_n",
    "importance_repeats",
    "shapley_samples",
    "shapley_rows",
    "shapley_background",
    "explain_family",
    "explain_mode",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("`{key}` must list at least one value")));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{v}` for `{key}`"))),
    }
}

/// `lo..hi` inclusive, e.g. `2..10`.
fn parse_range(v: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("k_range must look like `2..10`, got `{v}`"));
    let (a, b) = v.split_once("..").ok_or_else(bad)?;
    let lo: usize = a.trim().parse().map_err(|_| bad())?;
    let hi: usize = b.trim().parse().map_err(|_| bad())?;
    if lo < 1 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let require = |k: &str| get(k).ok_or_else(|| Error::Config(format!("missing required key `{k}`")));
        let paths = |k: &str| -> Result<Vec<PathBuf>> {
            Ok(parse_list::<String>(k, require(k)?)?
                .into_iter()
                .map(|p| base_dir.join(p))
                .collect())
        };
        let defaults = RollingOptions::default();
        let cfg = Self {
            events: paths("events")?,
            matches: paths("matches")?,
            output_dir: base_dir.join(require("output_dir")?),
            rolling: RollingOptions {
                window: get("window").map_or(Ok(defaults.window), |v| parse("window", v))?,
                min_history: get("min_history").map_or(Ok(defaults.min_history), |v| parse("min_history", v))?,
                venue_conditioned: get("venue_conditioned")
                    .map_or(Ok(defaults.venue_conditioned), |v| parse_bool("venue_conditioned", v))?,
            },
            granularity: get("granularity").map_or(Ok(Granularity::Halves), |v| parse("granularity", v))?,
            modes: get("modes").map_or(Ok(FeatureMode::ALL.to_vec()), |v| parse_list("modes", v))?,
            target_kind: get("target").map_or(Ok(TargetKind::Binary), |v| parse("target", v))?,
            families: get("families").map_or(
                Ok(vec![
                    Family::LogisticRegression,
                    Family::RandomForest,
                    Family::GradientBoosting,
                ]),
                |v| parse_list("families", v),
            )?,
            seed: get("seed").map_or(Ok(42), |v| parse("seed", v))?,
            tune_budget: get("tune_budget").map_or(Ok(10), |v| parse("tune_budget", v))?,
            test_fraction: get("test_fraction").map_or(Ok(0.3), |v| parse("test_fraction", v))?,
            k_range: get("k_range").map_or(Ok((2, 10)), parse_range)?,
            pca_components: get("pca_components").map_or(Ok(2), |v| parse("pca_components", v))?,
            cluster_rows: get("cluster_rows").map_or(Ok(ClusterRows::Both), |v| v.parse())?,
            top_n: get("top_n").map_or(Ok(crate::explain::DEFAULT_TOP_N), |v| parse("top_n", v))?,
            importance_repeats: get("importance_repeats").map_or(Ok(10), |v| parse("importance_repeats", v))?,
            shapley_samples: get("shapley_samples").map_or(Ok(32), |v| parse("shapley_samples", v))?,
            shapley_rows: get("shapley_rows").map_or(Ok(30), |v| parse("shapley_rows", v))?,
            shapley_background: get("shapley_background").map_or(Ok(10), |v| parse("shapley_background", v))?,
            explain_family: get("explain_family").map_or(Ok(Family::RandomForest), |v| parse("explain_family", v))?,
            explain_mode: get("explain_mode").map_or(Ok(FeatureMode::Mixed), |v| parse("explain_mode", v))?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
        }
        if self.rolling.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if self.importance_repeats == 0 {
            return Err(Error::Config("importance_repeats must be at least 1".into()));
        }
        if self.shapley_background == 0 || self.shapley_samples == 0 {
            return Err(Error::Config(
                "shapley_samples and shapley_background must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Input files named by the config that do not exist.
    pub fn missing_inputs(&self) -> Vec<&Path> {
        self.events
            .iter()
            .chain(&self.matches)
            .map(PathBuf::as_path)
            .filter(|p| !p.exists())
            .collect()
    }

    pub fn k_values(&self) -> Vec<usize> {
        (self.k_range.0..=self.k_range.1).collect()
    }

    /// Every setting as `key -> value`, paths as given after resolution.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        let list = |v: &[String]| v.join(",");
        let paths = |v: &[PathBuf]| list(&v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
        BTreeMap::from([
            ("events", paths(&self.events)),
            ("matches", paths(&self.matches)),
            ("output_dir", self.output_dir.display().to_string()),
            ("window", self.rolling.window.to_string()),
            ("min_history", self.rolling.min_history.to_string()),
            ("venue_conditioned", self.rolling.venue_conditioned.to_string()),
            ("granularity", self.granularity.as_str().to_string()),
            (
                "modes",
                list(&self.modes.iter().map(|m| m.as_str().to_string()).collect::<Vec<_>>()),
            ),
            ("target", self.target_kind.as_str().to_string()),
            (
                "families",
                list(
                    &self
                        .families
                        .iter()
                        .map(|f| f.short_name().to_string())
                        .collect::<Vec<_>>(),
                ),
            ),
            ("seed", self.seed.to_string()),
            ("tune_budget", self.tune_budget.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("k_range", format!("{}..{}", self.k_range.0, self.k_range.1)),
            ("pca_components", self.pca_components.to_string()),
            ("cluster_rows", self.cluster_rows.as_str().to_string()),
            ("top_n", self.top_n.to_string()),
            ("importance_repeats", self.importance_repeats.to_string()),
            ("shapley_samples", self.shapley_samples.to_string()),
            ("shapley_rows", self.shapley_rows.to_string()),
            ("shapley_background", self.shapley_background.to_string()),
            ("explain_family", self.explain_family.short_name().to_string()),
            ("explain_mode", self.explain_mode.as_str().to_string()),
        ])
    }

    /// Hash of the settings in `keys` (all settings when `keys` is None).
    /// Paths are excluded: inputs enter fingerprints through their content.
    pub fn hash_of(&self, keys: Option<&[&str]>) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.echo() {
            if matches!(k, "events" | "matches" | "output_dir") {
                continue;
            }
            if keys.is_none_or(|ks| ks.contains(&k)) {
                h.update(k.as_bytes());
                h.update(b"=");
                h.update(v.as_bytes());
                h.update(b"\n");
            }
        }
        hex::encode(h.finalize())
    }
}
