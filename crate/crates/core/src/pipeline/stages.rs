//! The pipeline stages. Each reads earlier artifacts from the store and
//! returns its own; [`Store::run_stage`] handles hashing and skipping.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{model_shapley_values, permutation_importance, shap_summary, ImportanceMetric, ShapleyMode};
use crate::features::{
    build_table, compute_match_stats, FeatureMode, FeatureTable, MatchStats, MetricsStore, StatsStore, TableMeta,
    TableOptions, TargetKind,
};
use crate::ingest::{
    load_matches, order_events, parse_event_log, parse_wyscout_matches, write_events_csv, write_matches_csv,
    Competition, Event, EventFormat, MatchDiagnostic, MatchId, MatchRecord, TeamId,
};
use crate::league::{
    holdout_evaluation, metric_rank_correlations, rows_by_league, simulate_league, standings, write_correlations_csv,
    write_standings_csv, Fixture, Provenance, SimulationComparison,
};
use crate::models::eval::{evaluate, write_points_csv, Averaging};
use crate::models::split::stratified_split;
use crate::models::tune::tune;
use crate::models::{predict_proba, train, Dataset, Family, Hyperparameters, ModelSpec, TrainedModel};
use crate::netmetrics::{aggregate, NetworkMetrics};
use crate::passnet::{build_all_segments, PassingNetwork, Segment};
use crate::unsupervised::{distinct_rows, elbow_scan, pca, KMeansOptions};

use super::config::{ClusterRows, PipelineConfig};
use super::store::{to_json_bytes, Input, Outputs, StageStatus, Store};

const EVENTS: &str = "ingest/events.csv";
const MATCHES: &str = "ingest/matches.csv";
const NETWORKS: &str = "nets/networks.json";
const NETWORK_METRICS: &str = "metrics/network_metrics.csv";
const MATCH_STATS: &str = "metrics/match_stats.csv";
const COMPARISON: &str = "eval/comparison.json";
const SIMULATION: &str = "simulate/comparison.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    BuildNets,
    Metrics,
    Features,
    Train,
    Evaluate,
    Cluster,
    Importance,
    Simulate,
    Correlate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::BuildNets,
        Stage::Metrics,
        Stage::Features,
        Stage::Train,
        Stage::Evaluate,
        Stage::Cluster,
        Stage::Importance,
        Stage::Simulate,
        Stage::Correlate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::BuildNets => "build-nets",
            Stage::Metrics => "metrics",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Cluster => "cluster",
            Stage::Importance => "importance",
            Stage::Simulate => "simulate",
            Stage::Correlate => "correlate",
            Stage::Report => "report",
        }
    }

    pub fn run(self, cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
        match self {
            Stage::Ingest => ingest(cfg, store),
            Stage::BuildNets => build_nets(cfg, store),
            Stage::Metrics => metrics(cfg, store),
            Stage::Features => features(cfg, store),
            Stage::Train => train_stage(cfg, store),
            Stage::Evaluate => evaluate_stage(cfg, store),
            Stage::Cluster => cluster(cfg, store),
            Stage::Importance => importance(cfg, store),
            Stage::Simulate => simulate(cfg, store),
            Stage::Correlate => correlate(cfg, store),
            Stage::Report => report(cfg, store),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig, store: &Store) -> Result<Vec<(Stage, StageStatus)>> {
    Stage::ALL.into_iter().map(|s| Ok((s, s.run(cfg, store)?))).collect()
}

fn csv_bytes<F>(write: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn art(path: &str, stage: Stage) -> Input {
    Input::artifact(path, stage.name())
}

fn read_matches(store: &Store) -> Result<Vec<MatchRecord>> {
    Ok(load_matches(&store.read(MATCHES, Stage::Ingest.name())?)?.matches)
}

fn read_events(store: &Store) -> Result<Vec<Event>> {
    parse_event_log(&store.read(EVENTS, Stage::Ingest.name())?, EventFormat::CanonicalCsv)
}

fn events_by_match(events: Vec<Event>) -> HashMap<MatchId, Vec<Event>> {
    let mut out: HashMap<MatchId, Vec<Event>> = HashMap::new();
    for e in events {
        out.entry(e.match_id.clone()).or_default().push(e);
    }
    out
}

fn is_json(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Debug, Serialize)]
struct IngestReport {
    matches: usize,
    events: usize,
    draws: usize,
    decisive: usize,
    orphan_events: usize,
    excluded: Vec<MatchDiagnostic>,
}

fn ingest(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let missing = cfg.missing_inputs();
    if let Some(p) = missing.first() {
        return Err(Error::Config(format!("input file {} does not exist", p.display())));
    }
    let inputs: Vec<Input> = cfg
        .events
        .iter()
        .chain(&cfg.matches)
        .map(|p| Input::External(p.clone()))
        .collect();
    store.run_stage(cfg, Stage::Ingest.name(), &[], &inputs, || {
        let mut matches = Vec::new();
        let mut excluded = Vec::new();
        let mut events = Vec::new();
        for p in &cfg.matches {
            let bytes = std::fs::read(p)?;
            if is_json(p) {
                let w = parse_wyscout_matches(&bytes)?;
                matches.extend(w.loaded.matches);
                excluded.extend(w.loaded.diagnostics);
                events.extend(w.substitutions);
            } else {
                let l = load_matches(&bytes)?;
                matches.extend(l.matches);
                excluded.extend(l.diagnostics);
            }
        }
        let mut seen = std::collections::HashSet::new();
        for m in &matches {
            if !seen.insert(&m.match_id) {
                return Err(Error::DuplicateMatch(m.match_id.0.clone()));
            }
        }
        for p in &cfg.events {
            let format = if is_json(p) {
                EventFormat::WyscoutJson
            } else {
                EventFormat::CanonicalCsv
            };
            events.extend(parse_event_log(&std::fs::read(p)?, format)?);
        }
        let known: std::collections::HashSet<&MatchId> = matches.iter().map(|m| &m.match_id).collect();
        let before = events.len();
        events.retain(|e| known.contains(&e.match_id));
        let orphan_events = before - events.len();
        // Canonical order: matches by (date, id), events by match then time.
        matches.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.match_id.cmp(&b.match_id)));
        let rank: HashMap<&MatchId, usize> = matches.iter().enumerate().map(|(i, m)| (&m.match_id, i)).collect();
        events.sort_by_key(|e| rank[&e.match_id]);
        let events = order_events(events);
        let draws = matches.iter().filter(|m| m.is_draw()).count();
        let report = IngestReport {
            matches: matches.len(),
            events: events.len(),
            draws,
            decisive: matches.len() - draws,
            orphan_events,
            excluded,
        };
        Ok(Outputs::from([
            (EVENTS.to_string(), csv_bytes(|b| write_events_csv(&events, b))?),
            (MATCHES.to_string(), csv_bytes(|b| write_matches_csv(&matches, b))?),
            ("ingest/diagnostics.json".to_string(), to_json_bytes(&report)?),
        ]))
    })
}

#[derive(Debug, Serialize)]
struct NetDiagnostic {
    match_id: MatchId,
    team_id: TeamId,
    error_class: String,
    message: String,
}

fn build_nets(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let inputs = [art(EVENTS, Stage::Ingest), art(MATCHES, Stage::Ingest)];
    store.run_stage(cfg, Stage::BuildNets.name(), &[], &inputs, || {
        let matches = read_matches(store)?;
        let grouped = events_by_match(read_events(store)?);
        let none = Vec::new();
        let results: Vec<std::result::Result<Vec<PassingNetwork>, NetDiagnostic>> = matches
            .par_iter()
            .flat_map_iter(|m| {
                let ev = grouped.get(&m.match_id).unwrap_or(&none);
                [&m.home_team_id, &m.away_team_id].map(|team| {
                    build_all_segments(ev, m, team)
                        .map(Vec::from)
                        .map_err(|e| NetDiagnostic {
                            match_id: m.match_id.clone(),
                            team_id: team.clone(),
                            error_class: e.class().to_string(),
                            message: e.to_string(),
                        })
                })
            })
            .collect();
        let mut nets = Vec::new();
        let mut diags = Vec::new();
        for r in results {
            match r {
                Ok(n) => nets.extend(n),
                Err(d) => {
                    log::warn!("no network for {} in {}: {}", d.team_id, d.match_id, d.message);
                    diags.push(d);
                }
            }
        }
        Ok(Outputs::from([
            (NETWORKS.to_string(), to_json_bytes(&nets)?),
            ("nets/diagnostics.json".to_string(), to_json_bytes(&diags)?),
        ]))
    })
}

fn write_metrics_csv(rows: &[(MatchId, TeamId, Segment, NetworkMetrics)], out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["match_id".to_string(), "team_id".into(), "segment".into()];
    header.extend(NetworkMetrics::column_names());
    w.write_record(&header)?;
    for (m, t, s, v) in rows {
        let mut rec = vec![m.0.clone(), t.0.clone(), s.as_str().to_string()];
        rec.extend(v.values().into_iter().map(opt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Network metric rows in file order.
pub fn read_metrics_csv(data: &[u8]) -> Result<Vec<(MatchId, TeamId, Segment, NetworkMetrics)>> {
    let mut rdr = csv::Reader::from_reader(data);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(3)
            .map(|v| {
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse()
                        .map(Some)
                        .map_err(|_| Error::MalformedInput(format!("bad metric `{v}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((
            MatchId::new(&rec[0]),
            TeamId::new(&rec[1]),
            rec[2].parse()?,
            NetworkMetrics::from_values(&values)?,
        ));
    }
    Ok(out)
}

fn read_stats_csv(data: &[u8]) -> Result<StatsStore> {
    let mut rdr = csv::Reader::from_reader(data);
    let mut out = StatsStore::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::MalformedInput(format!("bad statistic `{v}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.insert(
            (MatchId::new(&rec[0]), TeamId::new(&rec[1])),
            MatchStats::from_values(&values)?,
        );
    }
    Ok(out)
}

fn metrics(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let inputs = [
        art(NETWORKS, Stage::BuildNets),
        art(EVENTS, Stage::Ingest),
        art(MATCHES, Stage::Ingest),
    ];
    store.run_stage(cfg, Stage::Metrics.name(), &[], &inputs, || {
        let nets: Vec<PassingNetwork> = serde_json::from_slice(&store.read(NETWORKS, Stage::BuildNets.name())?)?;
        let rows: Vec<_> = nets
            .par_iter()
            .map(|n| (n.match_id.clone(), n.team_id.clone(), n.segment, aggregate(n)))
            .collect();
        let matches = read_matches(store)?;
        let grouped = events_by_match(read_events(store)?);
        let none = Vec::new();
        let stats: Vec<Result<(MatchId, TeamId, MatchStats)>> = matches
            .par_iter()
            .flat_map_iter(|m| {
                let ev = grouped.get(&m.match_id).unwrap_or(&none);
                [&m.home_team_id, &m.away_team_id]
                    .map(|t| compute_match_stats(ev, m, t).map(|s| (m.match_id.clone(), t.clone(), s)))
            })
            .collect();
        let stats = stats.into_iter().collect::<Result<Vec<_>>>()?;
        let stats_csv = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            let mut header = vec!["match_id".to_string(), "team_id".into()];
            header.extend(MatchStats::NAMES.iter().map(|s| s.to_string()));
            w.write_record(&header)?;
            for (m, t, s) in &stats {
                let mut rec = vec![m.0.clone(), t.0.clone()];
                rec.extend(s.values().iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
            w.flush()?;
            Ok(())
        })?;
        Ok(Outputs::from([
            (NETWORK_METRICS.to_string(), csv_bytes(|b| write_metrics_csv(&rows, b))?),
            (MATCH_STATS.to_string(), stats_csv),
        ]))
    })
}

fn load_stores(store: &Store) -> Result<(MetricsStore, StatsStore)> {
    let rows = read_metrics_csv(&store.read(NETWORK_METRICS, Stage::Metrics.name())?)?;
    let metrics = rows.into_iter().map(|(m, t, s, v)| ((m, t, s), v)).collect();
    let stats = read_stats_csv(&store.read(MATCH_STATS, Stage::Metrics.name())?)?;
    Ok((metrics, stats))
}

fn table_options(cfg: &PipelineConfig, mode: FeatureMode, target_kind: TargetKind) -> TableOptions {
    TableOptions {
        mode,
        granularity: cfg.granularity,
        target_kind,
        rolling: cfg.rolling,
    }
}

/// `<mode>_<granularity>_<target>`, the stem shared by a mode's artifacts.
pub fn table_tag(cfg: &PipelineConfig, mode: FeatureMode) -> String {
    format!(
        "{}_{}_{}",
        mode.as_str(),
        cfg.granularity.as_str(),
        cfg.target_kind.as_str()
    )
}

fn table_paths(cfg: &PipelineConfig, mode: FeatureMode) -> (String, String) {
    let tag = table_tag(cfg, mode);
    (format!("features/{tag}.csv"), format!("features/{tag}.table.json"))
}

fn read_table(cfg: &PipelineConfig, store: &Store, mode: FeatureMode) -> Result<FeatureTable> {
    let (csv_path, meta_path) = table_paths(cfg, mode);
    let meta: TableMeta = serde_json::from_slice(&store.read(&meta_path, Stage::Features.name())?)?;
    FeatureTable::read_csv(&store.read(&csv_path, Stage::Features.name())?, &meta)
}

fn table_inputs(cfg: &PipelineConfig, modes: &[FeatureMode]) -> Vec<Input> {
    modes
        .iter()
        .flat_map(|&m| {
            let (a, b) = table_paths(cfg, m);
            [art(&a, Stage::Features), art(&b, Stage::Features)]
        })
        .collect()
}

const TABLE_KEYS: &[&str] = &[
    "window",
    "min_history",
    "venue_conditioned",
    "granularity",
    "modes",
    "target",
];

fn features(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let inputs = [
        art(NETWORK_METRICS, Stage::Metrics),
        art(MATCH_STATS, Stage::Metrics),
        art(MATCHES, Stage::Ingest),
    ];
    store.run_stage(cfg, Stage::Features.name(), TABLE_KEYS, &inputs, || {
        let matches = read_matches(store)?;
        let (metrics, stats) = load_stores(store)?;
        let mut out = Outputs::new();
        for &mode in &cfg.modes {
            let table = build_table(&matches, &metrics, &stats, &table_options(cfg, mode, cfg.target_kind));
            log::info!("{} table: {} rows, skips {:?}", mode, table.rows.len(), table.skips);
            let (csv_path, meta_path) = table_paths(cfg, mode);
            out.insert(csv_path, csv_bytes(|b| table.write_csv(b))?);
            out.insert(meta_path, to_json_bytes(&table.meta())?);
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitRecord {
    seed: u64,
    test_fraction: f64,
    train: Vec<MatchId>,
    test: Vec<MatchId>,
}

fn split_path(cfg: &PipelineConfig, mode: FeatureMode) -> String {
    format!("models/{}.split.json", table_tag(cfg, mode))
}

fn model_path(cfg: &PipelineConfig, mode: FeatureMode, family: Family) -> String {
    format!("models/{}_{}.json", table_tag(cfg, mode), family.short_name())
}

/// Mode and family analysed by importance, per-league evaluation and
/// simulation: the configured ones when trained, otherwise the first
/// trained ones.
fn analysis_target(cfg: &PipelineConfig) -> (FeatureMode, Family) {
    let mode = if cfg.modes.contains(&cfg.explain_mode) {
        cfg.explain_mode
    } else {
        cfg.modes[0]
    };
    let family = if cfg.families.contains(&cfg.explain_family) {
        cfg.explain_family
    } else {
        cfg.families[0]
    };
    (mode, family)
}

fn subset_by_ids(table: &FeatureTable, data: &Dataset, ids: &[MatchId]) -> Result<Dataset> {
    let pos: HashMap<&MatchId, usize> = table.rows.iter().enumerate().map(|(i, r)| (&r.match_id, i)).collect();
    let idx = ids
        .iter()
        .map(|id| {
            pos.get(id)
                .copied()
                .ok_or_else(|| Error::FeatureMismatch(format!("split lists match {id} absent from the table")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(data.subset(&idx))
}

const TRAIN_KEYS: &[&str] = &[
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
];

fn train_stage(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let inputs = table_inputs(cfg, &cfg.modes);
    store.run_stage(cfg, Stage::Train.name(), TRAIN_KEYS, &inputs, || {
        let mut out = Outputs::new();
        for &mode in &cfg.modes {
            let table = read_table(cfg, store, mode)?;
            let data = Dataset::from_table(&table)?;
            let (tr, te) = stratified_split(&data.labels, cfg.test_fraction, cfg.seed)?;
            let ids = |idx: &[usize]| idx.iter().map(|&i| table.rows[i].match_id.clone()).collect();
            let split = SplitRecord {
                seed: cfg.seed,
                test_fraction: cfg.test_fraction,
                train: ids(&tr),
                test: ids(&te),
            };
            out.insert(split_path(cfg, mode), to_json_bytes(&split)?);
            let train_d = data.subset(&tr);
            for &family in &cfg.families {
                let spec = if cfg.tune_budget == 0 {
                    ModelSpec {
                        hyperparameters: Hyperparameters::default_for(family),
                        seed: cfg.seed,
                    }
                } else {
                    let outcome = tune(family, &train_d, cfg.tune_budget, cfg.seed)?;
                    let tuning = format!("models/{}_{}.tuning.json", table_tag(cfg, mode), family.short_name());
                    out.insert(tuning, to_json_bytes(&outcome)?);
                    outcome.best
                };
                let model = train(&spec, &train_d)?;
                log::info!("trained {} on {} ({} rows)", family.short_name(), mode, train_d.len());
                let mut json = model.to_json()?.into_bytes();
                json.push(b'\n');
                out.insert(model_path(cfg, mode, family), json);
            }
        }
        Ok(out)
    })
}

/// One line of the mode/family comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: FeatureMode,
    pub family: Family,
    pub test_rows: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

fn read_model(store: &Store, path: &str) -> Result<TrainedModel> {
    let bytes = store.read(path, Stage::Train.name())?;
    TrainedModel::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::MalformedInput(e.to_string()))?)
}

fn read_split(cfg: &PipelineConfig, store: &Store, mode: FeatureMode) -> Result<SplitRecord> {
    Ok(serde_json::from_slice(
        &store.read(&split_path(cfg, mode), Stage::Train.name())?,
    )?)
}

fn averaging(kind: TargetKind) -> Averaging {
    match kind {
        TargetKind::Binary => Averaging::BinaryPositive,
        TargetKind::Ternary => Averaging::Macro,
    }
}

fn league_map(matches: &[MatchRecord]) -> HashMap<MatchId, Competition> {
    matches.iter().map(|m| (m.match_id.clone(), m.competition)).collect()
}

fn evaluate_stage(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let mut inputs = table_inputs(cfg, &cfg.modes);
    for &mode in &cfg.modes {
        inputs.push(art(&split_path(cfg, mode), Stage::Train));
        for &family in &cfg.families {
            inputs.push(art(&model_path(cfg, mode, family), Stage::Train));
        }
    }
    inputs.push(art(MATCHES, Stage::Ingest));
    let mut keys = TRAIN_KEYS.to_vec();
    keys.extend(["explain_mode", "explain_family"]);
    store.run_stage(cfg, Stage::Evaluate.name(), &keys, &inputs, || {
        let mut out = Outputs::new();
        let mut rows = Vec::new();
        for &mode in &cfg.modes {
            let table = read_table(cfg, store, mode)?;
            let data = Dataset::from_table(&table)?;
            let split = read_split(cfg, store, mode)?;
            let test = subset_by_ids(&table, &data, &split.test)?;
            for &family in &cfg.families {
                let model = read_model(store, &model_path(cfg, mode, family))?;
                let probs = predict_proba(&model, &test.feature_names, &test.rows)?;
                let report = evaluate(&probs, &test.labels, averaging(cfg.target_kind), 0.5)?;
                let stem = format!("eval/{}_{}", table_tag(cfg, mode), family.short_name());
                if !report.roc_points.is_empty() {
                    out.insert(
                        format!("{stem}_roc.csv"),
                        csv_bytes(|b| write_points_csv(b, ("fpr", "tpr"), &report.roc_points))?,
                    );
                    out.insert(
                        format!("{stem}_pr.csv"),
                        csv_bytes(|b| write_points_csv(b, ("recall", "precision"), &report.pr_points))?,
                    );
                }
                rows.push(ComparisonRow {
                    mode,
                    family,
                    test_rows: test.len(),
                    accuracy: report.accuracy,
                    precision: report.precision,
                    recall: report.recall,
                    f1: report.f1,
                    auc: report.auc,
                });
                out.insert(format!("{stem}.json"), to_json_bytes(&report)?);
            }
        }
        out.insert(COMPARISON.to_string(), to_json_bytes(&rows)?);
        out.insert(
            "eval/comparison.csv".to_string(),
            csv_bytes(|b| write_comparison_csv(&rows, b))?,
        );

        let (mode, family) = analysis_target(cfg);
        let table = read_table(cfg, store, mode)?;
        let full = Dataset::from_table(&table)?;
        let leagues = rows_by_league(&table, &league_map(&read_matches(store)?));
        let per_league = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["league", "mode", "family", "rows", "accuracy", "auc", "error"])?;
            for (league, idx) in leagues.iter().filter(|(l, _)| l.is_domestic()) {
                let d = full.subset(idx);
                let (acc, auc, err) = match holdout_evaluation(&d, family, cfg.tune_budget, cfg.seed) {
                    Ok((_, r)) => (r.accuracy.to_string(), opt(r.auc), String::new()),
                    Err(e) => (String::new(), String::new(), e.class().to_string()),
                };
                w.write_record([
                    league.as_str(),
                    mode.as_str(),
                    family.short_name(),
                    &d.len().to_string(),
                    &acc,
                    &auc,
                    &err,
                ])?;
            }
            w.flush()?;
            Ok(())
        })?;
        out.insert("eval/per_league.csv".to_string(), per_league);
        Ok(out)
    })
}

fn write_comparison_csv(rows: &[ComparisonRow], out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mode",
        "family",
        "test_rows",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "auc",
    ])?;
    for r in rows {
        w.write_record([
            r.mode.as_str().to_string(),
            r.family.short_name().to_string(),
            r.test_rows.to_string(),
            r.accuracy.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            opt(r.auc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Clustering inputs: full-game network metric rows with league labels.
/// Match rows are (match, team) networks; team-season rows average them.
pub fn cluster_rows(
    metric_rows: &[(MatchId, TeamId, Segment, NetworkMetrics)],
    matches: &[MatchRecord],
    granularity: ClusterRows,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let leagues = league_map(matches);
    let league_index = |c: Competition| Competition::ALL.iter().position(|&x| x == c).unwrap_or(0);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut by_team: BTreeMap<&TeamId, (Vec<Vec<f64>>, usize)> = BTreeMap::new();
    for (m, t, s, v) in metric_rows {
        if *s != Segment::Full {
            continue;
        }
        let (Some(values), Some(&league)) = (v.values().into_iter().collect::<Option<Vec<f64>>>(), leagues.get(m))
        else {
            continue;
        };
        match granularity {
            ClusterRows::TeamSeason => {
                let e = by_team.entry(t).or_insert_with(|| (Vec::new(), league_index(league)));
                e.0.push(values);
            }
            _ => {
                data.push(values);
                labels.push(league_index(league));
            }
        }
    }
    for (rows, label) in by_team.into_values() {
        let n = rows.len() as f64;
        let mean = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        data.push(mean);
        labels.push(label);
    }
    (data, labels)
}

fn cluster(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let inputs = [art(NETWORK_METRICS, Stage::Metrics), art(MATCHES, Stage::Ingest)];
    store.run_stage(
        cfg,
        Stage::Cluster.name(),
        &["k_range", "pca_components", "cluster_rows", "seed"],
        &inputs,
        || {
            let metric_rows = read_metrics_csv(&store.read(NETWORK_METRICS, Stage::Metrics.name())?)?;
            let matches = read_matches(store)?;
            let grains: &[ClusterRows] = match cfg.cluster_rows {
                ClusterRows::Both => &[ClusterRows::Match, ClusterRows::TeamSeason],
                ClusterRows::Match => &[ClusterRows::Match],
                ClusterRows::TeamSeason => &[ClusterRows::TeamSeason],
            };
            let mut out = Outputs::new();
            for &g in grains {
                let (data, labels) = cluster_rows(&metric_rows, &matches, g);
                let distinct = distinct_rows(&data);
                let ks: Vec<usize> = cfg.k_values().into_iter().filter(|&k| k <= distinct).collect();
                if ks.is_empty() || data.len() < 2 {
                    log::warn!("{} clustering skipped: {} rows", g.as_str(), data.len());
                    continue;
                }
                let opts = KMeansOptions::default();
                let name = g.as_str();
                for with_pca in [false, true] {
                    let scan = elbow_scan(&data, Some(&labels), &ks, cfg.seed, with_pca, cfg.pca_components, &opts)?;
                    let file = if with_pca {
                        format!("cluster/scan_{name}_pca.csv")
                    } else {
                        format!("cluster/scan_{name}.csv")
                    };
                    out.insert(file, csv_bytes(|b| scan.write_csv(b))?);
                }
                let model = pca(&data)?;
                out.insert(format!("cluster/pca_{name}.csv"), csv_bytes(|b| model.write_csv(b))?);
            }
            Ok(out)
        },
    )
}

fn importance(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let (mode, family) = analysis_target(cfg);
    let mut inputs = table_inputs(cfg, &[mode]);
    inputs.push(art(&split_path(cfg, mode), Stage::Train));
    inputs.push(art(&model_path(cfg, mode, family), Stage::Train));
    let keys = [
        "explain_mode",
        "explain_family",
        "modes",
        "families",
        "top_n",
        "importance_repeats",
        "shapley_samples",
        "shapley_rows",
        "shapley_background",
        "seed",
    ];
    store.run_stage(cfg, Stage::Importance.name(), &keys, &inputs, || {
        let table = read_table(cfg, store, mode)?;
        let data = Dataset::from_table(&table)?;
        let split = read_split(cfg, store, mode)?;
        let test = subset_by_ids(&table, &data, &split.test)?;
        let train_d = subset_by_ids(&table, &data, &split.train)?;
        let model = read_model(store, &model_path(cfg, mode, family))?;
        let metric = match cfg.target_kind {
            TargetKind::Binary => ImportanceMetric::Auc,
            TargetKind::Ternary => ImportanceMetric::Accuracy,
        };
        let perm = permutation_importance(&model, &test, cfg.importance_repeats, cfg.seed, metric)?;
        let mut out = Outputs::new();
        out.insert(
            "importance/permutation.csv".into(),
            csv_bytes(|b| perm.top(cfg.top_n).write_csv(b))?,
        );

        let n_rows = cfg.shapley_rows.min(test.len());
        let n_bg = cfg.shapley_background.min(train_d.len());
        // Evenly spaced background rows keep the choice seed-independent.
        let background: Vec<Vec<f64>> = (0..n_bg)
            .map(|i| train_d.rows[i * train_d.len() / n_bg.max(1)].clone())
            .collect();
        let mut shap = model_shapley_values(
            &model,
            &test.rows[..n_rows],
            &background,
            ShapleyMode::MonteCarlo {
                samples: cfg.shapley_samples,
            },
            cfg.seed,
        )?;
        shap.row_ids = split.test[..n_rows].iter().map(|m| m.0.clone()).collect();
        let mut summary = shap_summary(&shap);
        summary.entries.truncate(cfg.top_n);
        out.insert("importance/shapley.csv".into(), csv_bytes(|b| shap.write_csv(b))?);
        out.insert("importance/shap_summary.json".into(), to_json_bytes(&summary)?);
        Ok(out)
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LeagueSimulation {
    league: Competition,
    teams: usize,
    simulated_matches: usize,
    training_rows: usize,
    #[serde(flatten)]
    comparison: Option<SimulationComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn simulate(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let inputs = [
        art(NETWORK_METRICS, Stage::Metrics),
        art(MATCH_STATS, Stage::Metrics),
        art(MATCHES, Stage::Ingest),
    ];
    let keys = [
        "explain_mode",
        "explain_family",
        "modes",
        "families",
        "granularity",
        "window",
        "min_history",
        "venue_conditioned",
        "seed",
    ];
    store.run_stage(cfg, Stage::Simulate.name(), &keys, &inputs, || {
        let (mode, family) = analysis_target(cfg);
        let matches = read_matches(store)?;
        let (metrics, stats) = load_stores(store)?;
        let table = build_table(
            &matches,
            &metrics,
            &stats,
            &table_options(cfg, mode, TargetKind::Ternary),
        );
        let spec = ModelSpec {
            hyperparameters: Hyperparameters::default_for(family),
            seed: cfg.seed,
        };
        let mut leagues: Vec<Competition> = matches
            .iter()
            .map(|m| m.competition)
            .filter(|c| c.is_domestic())
            .collect();
        leagues.sort();
        leagues.dedup();
        let results: Vec<_> = leagues
            .par_iter()
            .map(|&l| (l, simulate_league(l, &table, &matches, &spec)))
            .collect();
        let mut tables = Vec::new();
        let mut summary = Vec::new();
        let mut sim_matches = csv::Writer::from_writer(Vec::new());
        sim_matches.write_record([
            "league",
            "match_id",
            "home",
            "away",
            "predicted",
            "actual",
            "home_points",
            "away_points",
        ])?;
        for (league, r) in results {
            match r {
                Ok(s) => {
                    for m in &s.matches {
                        sim_matches.write_record([
                            league.as_str(),
                            m.match_id.as_str(),
                            m.home.as_str(),
                            m.away.as_str(),
                            &m.predicted.class_index().to_string(),
                            &m.actual.class_index().to_string(),
                            &m.home_points.to_string(),
                            &m.away_points.to_string(),
                        ])?;
                    }
                    summary.push(LeagueSimulation {
                        league,
                        teams: s.real.rows.len(),
                        simulated_matches: s.matches.len(),
                        training_rows: s.training_rows,
                        comparison: Some(s.comparison),
                        error: None,
                    });
                    tables.push(s.real);
                    tables.push(s.simulated);
                }
                Err(e) => {
                    log::warn!("simulation of {league} failed: {e}");
                    summary.push(LeagueSimulation {
                        league,
                        teams: 0,
                        simulated_matches: 0,
                        training_rows: 0,
                        comparison: None,
                        error: Some(format!("{}: {e}", e.class())),
                    });
                }
            }
        }
        let sim_csv = sim_matches.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(Outputs::from([
            (
                "simulate/standings.csv".to_string(),
                csv_bytes(|b| write_standings_csv(b, &tables))?,
            ),
            (SIMULATION.to_string(), to_json_bytes(&summary)?),
            ("simulate/matches.csv".to_string(), sim_csv),
        ]))
    })
}

fn correlate(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let inputs = [art(NETWORK_METRICS, Stage::Metrics), art(MATCHES, Stage::Ingest)];
    store.run_stage(cfg, Stage::Correlate.name(), &[], &inputs, || {
        let metric_rows = read_metrics_csv(&store.read(NETWORK_METRICS, Stage::Metrics.name())?)?;
        let matches = read_matches(store)?;
        let leagues = league_map(&matches);
        let columns = NetworkMetrics::column_names();
        let mut out = Outputs::new();
        let mut tables = Vec::new();
        let mut domestic: Vec<Competition> = matches
            .iter()
            .map(|m| m.competition)
            .filter(|c| c.is_domestic())
            .collect();
        domestic.sort();
        domestic.dedup();
        for league in domestic {
            let games: Vec<&MatchRecord> = matches.iter().filter(|m| m.competition == league).collect();
            let mut teams: Vec<TeamId> = games
                .iter()
                .flat_map(|m| [m.home_team_id.clone(), m.away_team_id.clone()])
                .collect();
            teams.sort();
            teams.dedup();
            let results: Vec<Fixture> = games
                .iter()
                .map(|m| (m.home_team_id.clone(), m.away_team_id.clone(), m.outcome()))
                .collect();
            let table = standings(league, Provenance::Real, &teams, &results);
            let obs: Vec<(TeamId, Vec<Option<f64>>)> = metric_rows
                .iter()
                .filter(|(m, _, s, _)| *s == Segment::Full && leagues.get(m) == Some(&league))
                .map(|(_, t, _, v)| (t.clone(), v.values()))
                .collect();
            match metric_rank_correlations(&columns, &obs, &table) {
                Ok(c) => {
                    out.insert(
                        format!("correlate/{}.csv", league.as_str()),
                        csv_bytes(|b| write_correlations_csv(b, &c))?,
                    );
                }
                Err(e) => log::warn!("correlations for {league} skipped: {e}"),
            }
            tables.push(table);
        }
        out.insert(
            "correlate/standings.csv".into(),
            csv_bytes(|b| write_standings_csv(b, &tables))?,
        );
        Ok(out)
    })
}

fn report(cfg: &PipelineConfig, store: &Store) -> Result<StageStatus> {
    let mut inputs = vec![art(COMPARISON, Stage::Evaluate)];
    if store.exists(SIMULATION) {
        inputs.push(art(SIMULATION, Stage::Simulate));
    }
    store.run_stage(cfg, Stage::Report.name(), &["modes", "families", "target", "granularity"], &inputs, || {
        let rows: Vec<ComparisonRow> = serde_json::from_slice(&store.read(COMPARISON, Stage::Evaluate.name())?)?;
        let pct = |v: f64| format!("{:.2}%", 100.0 * v);
        let auc = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |a| format!("{a:.2}"));

        let modes_csv = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            let mut header = vec!["family".to_string()];
            for m in FeatureMode::ALL {
                header.push(format!("{m}_accuracy"));
                header.push(format!("{m}_auc"));
            }
            w.write_record(&header)?;
            for &family in &cfg.families {
                let mut rec = vec![family.short_name().to_string()];
                for m in FeatureMode::ALL {
                    let r = rows.iter().find(|r| r.mode == m && r.family == family);
                    rec.push(r.map(|r| r.accuracy.to_string()).unwrap_or_default());
                    rec.push(opt(r.and_then(|r| r.auc)));
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
            Ok(())
        })?;

        let mut md = String::new();
        md.push_str(&format!(
            "# Outcome model comparison\n\nTarget: {}, granularity: {}, seed: {}\n\n",
            cfg.target_kind, cfg.granularity, cfg.seed
        ));
        md.push_str("## Per mode\n\n| Mode | Model | Accuracy | Precision | Recall | F1 | AUC |\n|---|---|---|---|---|---|---|\n");
        for r in &rows {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                r.mode,
                r.family.short_name(),
                pct(r.accuracy),
                pct(r.precision),
                pct(r.recall),
                pct(r.f1),
                auc(r.auc)
            ));
        }
        md.push_str("\n## Accuracy and AUC across modes\n\n| Model | Nets acc | Nets AUC | Stats acc | Stats AUC | Mixed acc | Mixed AUC |\n|---|---|---|---|---|---|---|\n");
        for &family in &cfg.families {
            md.push_str(&format!("| {} |", family.short_name()));
            for m in FeatureMode::ALL {
                match rows.iter().find(|r| r.mode == m && r.family == family) {
                    Some(r) => md.push_str(&format!(" {} | {} |", pct(r.accuracy), auc(r.auc))),
                    None => md.push_str(" - | - |"),
                }
            }
            md.push('\n');
        }
        if let Some(best) = rows.iter().max_by(|a, b| a.accuracy.total_cmp(&b.accuracy)) {
            md.push_str(&format!("\nBest accuracy: {} on {} features ({}).\n", best.family.short_name(), best.mode, pct(best.accuracy)));
        }
        if store.exists(SIMULATION) {
            let sims: Vec<LeagueSimulation> = serde_json::from_slice(&store.read(SIMULATION, Stage::Simulate.name())?)?;
            md.push_str("\n## Season simulation\n\n| League | Teams | Exact | Within 2 | Champion |\n|---|---|---|---|---|\n");
            for s in &sims {
                match &s.comparison {
                    Some(c) => md.push_str(&format!(
                        "| {} | {} | {} | {} | {} |\n",
                        s.league, s.teams, c.exact_hits, c.within_two, c.champion_correct
                    )),
                    None => md.push_str(&format!("| {} | - | - | - | {} |\n", s.league, s.error.as_deref().unwrap_or("failed"))),
                }
            }
        }
        Ok(Outputs::from([
            ("report/table_modes.csv".to_string(), modes_csv),
            ("report/table_metrics.csv".to_string(), csv_bytes(|b| write_comparison_csv(&rows, b))?),
            ("report/summary.md".to_string(), md.into_bytes()),
        ]))
    })
}
