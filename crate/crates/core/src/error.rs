//! Crate-wide error type.
//!
//! Every variant maps to a stable machine-readable class name (used by the
//! CLI's single-line error output) and to one of the process exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("match {0} has no valid 11-player starting list")]
    MissingStarters(String),

    #[error("duplicate match id {0}")]
    DuplicateMatch(String),

    #[error("match {match_id}: player {player} substituted off but never on the pitch")]
    UnresolvableSubstitution { match_id: String, player: String },

    #[error("no node positions available")]
    NoPositions,

    #[error("team {team}: only {coverage} prior matches, {required} required")]
    InsufficientHistory {
        team: String,
        coverage: usize,
        required: usize,
    },

    #[error("too few rows: {0}")]
    TooFewRows(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("non-finite value in row {row}, feature {feature}")]
    NonFiniteFeature { row: usize, feature: usize },

    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),

    #[error("labels contain a single class")]
    SingleClassLabels,

    #[error("k = {k} exceeds the {distinct} distinct rows")]
    KTooLarge { k: usize, distinct: usize },

    #[error("silhouette needs at least two clusters")]
    SingleCluster,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty data")]
    EmptyData,

    #[error("repeats must be at least 1")]
    InvalidRepeats,

    #[error("exact Shapley enumeration supports at most 12 features, got {0}")]
    TooManyFeaturesForExact(usize),

    #[error("background set is empty")]
    EmptyBackground,

    #[error("zero variance input")]
    ZeroVariance,

    #[error("need at least 3 observations, got {0}")]
    TooShort(usize),

    #[error("team {0} has no networks for the season")]
    MissingTeam(String),

    #[error("unknown or non-domestic league: {0}")]
    UnknownLeague(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {}; run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("pipeline directory is locked by another invocation ({})", .0.display())]
    LockHeld(PathBuf),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable class name, e.g. `MissingArtifact`.
    pub fn class(&self) -> &'static str {
        match self {
            Error::MalformedInput(_) => "MalformedInput",
            Error::MissingStarters(_) => "MissingStarters",
            Error::DuplicateMatch(_) => "DuplicateMatch",
            Error::UnresolvableSubstitution { .. } => "UnresolvableSubstitution",
            Error::NoPositions => "NoPositions",
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::TooFewRows(_) => "TooFewRows",
            Error::DegenerateData(_) => "DegenerateData",
            Error::NonFiniteFeature { .. } => "NonFiniteFeature",
            Error::FeatureMismatch(_) => "FeatureMismatch",
            Error::SingleClassLabels => "SingleClassLabels",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::SingleCluster => "SingleCluster",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyData => "EmptyData",
            Error::InvalidRepeats => "InvalidRepeats",
            Error::TooManyFeaturesForExact(_) => "TooManyFeaturesForExact",
            Error::EmptyBackground => "EmptyBackground",
            Error::ZeroVariance => "ZeroVariance",
            Error::TooShort(_) => "TooShort",
            Error::MissingTeam(_) => "MissingTeam",
            Error::UnknownLeague(_) => "UnknownLeague",
            Error::Config(_) => "ConfigError",
            Error::MissingArtifact { .. } => "MissingArtifact",
            Error::LockHeld(_) => "LockHeld",
            Error::Numeric(_) => "NumericFailure",
            Error::Io(_) => "IoError",
            Error::Json(_) => "MalformedInput",
            Error::Csv(_) => "MalformedInput",
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::LockHeld(_) | Error::UnknownLeague(_) => 2,
            Error::Numeric(_)
            | Error::DegenerateData(_)
            | Error::NonFiniteFeature { .. }
            | Error::ZeroVariance
            | Error::SingleClassLabels => 4,
            _ => 3,
        }
    }
}
