//! Match statistics and rolling-average feature tables.
//!
//! Feature names follow one pattern: `avg_<column>_T<k>[_<half>]`, where
//! `T1` is the home team, `T2` the away team, `<column>` a network metric
//! column (`min_clustering`, `avg_shortest_path`, ...) or a statistic
//! (`goals_against`, ...), and the half suffix appears only for network
//! metrics at half granularity.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Event, EventKind, MatchId, MatchRecord, Outcome, TeamId};
use crate::netmetrics::NetworkMetrics;
use crate::passnet::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchStats {
    pub saves: f64,
    pub red_cards: f64,
    pub yellow_cards: f64,
    pub assists: f64,
    pub shots: f64,
    pub opponent_shots: f64,
    pub shots_on_target: f64,
    pub passes: f64,
    pub goals: f64,
    pub opponent_goals: f64,
    pub possession: f64,
    pub pass_accuracy: f64,
    pub save_accuracy: f64,
    pub shot_on_target_accuracy: f64,
}

impl MatchStats {
    pub const NAMES: [&'static str; 14] = [
        "saves",
        "red_cards",
        "yellow_cards",
        "assists",
        "shots",
        "shots_against",
        "shots_on_target",
        "passes",
        "goals",
        "goals_against",
        "possession",
        "pass_accuracy",
        "save_accuracy",
        "shot_on_target_accuracy",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.saves,
            self.red_cards,
            self.yellow_cards,
            self.assists,
            self.shots,
            self.opponent_shots,
            self.shots_on_target,
            self.passes,
            self.goals,
            self.opponent_goals,
            self.possession,
            self.pass_accuracy,
            self.save_accuracy,
            self.shot_on_target_accuracy,
        ]
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        let v: [f64; 14] = v
            .try_into()
            .map_err(|_| Error::MalformedInput(format!("expected 14 statistics, got {}", v.len())))?;
        Ok(Self {
            saves: v[0],
            red_cards: v[1],
            yellow_cards: v[2],
            assists: v[3],
            shots: v[4],
            opponent_shots: v[5],
            shots_on_target: v[6],
            passes: v[7],
            goals: v[8],
            opponent_goals: v[9],
            possession: v[10],
            pass_accuracy: v[11],
            save_accuracy: v[12],
            shot_on_target_accuracy: v[13],
        })
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Tallies the statistics of `team` in one match.
///
/// Goals come from the match score. Possession is the team's share of all
/// pass attempts in the match (0.5 when nobody passed).
pub fn compute_match_stats(events: &[Event], record: &MatchRecord, team: &TeamId) -> Result<MatchStats> {
    let (goals, conceded) = record
        .goals_for_against(team)
        .ok_or_else(|| Error::MalformedInput(format!("team {team} did not play match {}", record.match_id)))?;
    let mut own = [0usize; 10];
    let mut opp = [0usize; 10];
    let mut completed = 0usize;
    let mut on_target = 0usize;
    let mut saves = 0usize;
    for e in events.iter().filter(|e| e.match_id == record.match_id) {
        let mine = e.team_id == *team;
        let idx = EventKind::ALL.iter().position(|k| *k == e.kind).unwrap_or(9);
        if mine {
            own[idx] += 1;
            match e.kind {
                EventKind::Pass if e.success => completed += 1,
                EventKind::Shot if e.success => on_target += 1,
                EventKind::Save if e.success => saves += 1,
                _ => {}
            }
        } else {
            opp[idx] += 1;
        }
    }
    let count = |arr: &[usize; 10], k: EventKind| arr[EventKind::ALL.iter().position(|x| *x == k).unwrap()] as f64;
    let passes = count(&own, EventKind::Pass);
    let opp_passes = count(&opp, EventKind::Pass);
    let shots = count(&own, EventKind::Shot);
    let saves = saves as f64;
    let conceded = f64::from(conceded);
    Ok(MatchStats {
        saves,
        red_cards: count(&own, EventKind::RedCard),
        yellow_cards: count(&own, EventKind::YellowCard),
        assists: count(&own, EventKind::Assist),
        shots,
        opponent_shots: count(&opp, EventKind::Shot),
        shots_on_target: on_target as f64,
        passes,
        goals: f64::from(goals),
        opponent_goals: conceded,
        possession: if passes + opp_passes > 0.0 {
            passes / (passes + opp_passes)
        } else {
            0.5
        },
        pass_accuracy: ratio(completed as f64, passes),
        save_accuracy: ratio(saves, saves + conceded),
        shot_on_target_accuracy: ratio(on_target as f64, shots),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Venue {
    Home,
    Away,
}

/// One past match of one team, as a flat value vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamMatchEntry {
    pub match_id: MatchId,
    pub date: NaiveDate,
    pub venue: Venue,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingOptions {
    pub window: usize,
    pub min_history: usize,
    pub venue_conditioned: bool,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            window: 5,
            min_history: 5,
            venue_conditioned: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rolling {
    /// Mean of the present values per feature; `None` when every averaged
    /// match lacked the value.
    pub values: Vec<Option<f64>>,
    pub coverage: usize,
}

/// Averages the `window` most recent qualifying matches in `history` that
/// took place strictly before `target_date`.
pub fn rolling_features(
    history: &[TeamMatchEntry],
    team: &TeamId,
    target_date: NaiveDate,
    venue: Venue,
    opts: &RollingOptions,
) -> Result<Rolling> {
    let mut prior: Vec<&TeamMatchEntry> = history
        .iter()
        .filter(|h| h.date < target_date && (!opts.venue_conditioned || h.venue == venue))
        .collect();
    prior.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.match_id.cmp(&b.match_id)));
    let used = &prior[prior.len().saturating_sub(opts.window)..];
    let coverage = used.len();
    if coverage < opts.min_history.max(1) {
        return Err(Error::InsufficientHistory {
            team: team.0.clone(),
            coverage,
            required: opts.min_history.max(1),
        });
    }
    let width = used[0].values.len();
    let values = (0..width)
        .map(|i| {
            let present: Vec<f64> = used.iter().filter_map(|h| h.values.get(i).copied().flatten()).collect();
            (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
        })
        .collect();
    Ok(Rolling { values, coverage })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Nets,
    Stats,
    Mixed,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Nets, FeatureMode::Stats, FeatureMode::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Nets => "nets",
            FeatureMode::Stats => "stats",
            FeatureMode::Mixed => "mixed",
        }
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (nets|stats|mixed)")))
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[serde(rename = "full")]
    FullGame,
    Halves,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::FullGame => "full",
            Granularity::Halves => "halves",
        }
    }

    pub fn segments(self) -> &'static [Segment] {
        match self {
            Granularity::FullGame => &[Segment::Full],
            Granularity::Halves => &[Segment::FirstHalf, Segment::SecondHalf],
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Granularity::FullGame),
            "halves" => Ok(Granularity::Halves),
            _ => Err(Error::Config(format!("unknown granularity `{s}` (full|halves)"))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Binary,
    Ternary,
}

impl TargetKind {
    pub fn n_classes(self) -> usize {
        match self {
            TargetKind::Binary => 2,
            TargetKind::Ternary => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Binary => "binary",
            TargetKind::Ternary => "ternary",
        }
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(TargetKind::Binary),
            "ternary" => Ok(TargetKind::Ternary),
            _ => Err(Error::Config(format!("unknown target `{s}` (binary|ternary)"))),
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableOptions {
    pub mode: FeatureMode,
    pub granularity: Granularity,
    pub target_kind: TargetKind,
    pub rolling: RollingOptions,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Mixed,
            granularity: Granularity::Halves,
            target_kind: TargetKind::Binary,
            rolling: RollingOptions::default(),
        }
    }
}

pub type MetricsStore = HashMap<(MatchId, TeamId, Segment), NetworkMetrics>;
pub type StatsStore = HashMap<(MatchId, TeamId), MatchStats>;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub match_id: MatchId,
    pub features: Vec<f64>,
    pub label: Outcome,
    /// Prior matches averaged for (home, away); unknown for tables read
    /// back from disk.
    pub coverage: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub draws_excluded: usize,
    pub insufficient_history: usize,
    pub missing_values: usize,
    pub missing_inputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub options: TableOptions,
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
    pub skips: SkipCounts,
}

/// Per-team column names (without the `avg_` prefix and team tag) and the
/// half suffix for each.
fn base_columns(mode: FeatureMode, granularity: Granularity) -> Vec<(String, &'static str)> {
    let mut cols = Vec::new();
    if mode != FeatureMode::Stats {
        for seg in granularity.segments() {
            let suffix = match seg {
                Segment::Full => "",
                Segment::FirstHalf => "_1H",
                Segment::SecondHalf => "_2H",
            };
            cols.extend(NetworkMetrics::column_names().into_iter().map(|c| (c, suffix)));
        }
    }
    if mode != FeatureMode::Nets {
        cols.extend(MatchStats::NAMES.iter().map(|n| (n.to_string(), "")));
    }
    cols
}

pub fn feature_names(mode: FeatureMode, granularity: Granularity) -> Vec<String> {
    let cols = base_columns(mode, granularity);
    (1..=2)
        .flat_map(|k| cols.iter().map(move |(c, s)| format!("avg_{c}_T{k}{s}")))
        .collect()
}

fn team_values(
    record: &MatchRecord,
    team: &TeamId,
    opts: &TableOptions,
    metrics: &MetricsStore,
    stats: &StatsStore,
) -> Option<Vec<Option<f64>>> {
    let mut out = Vec::new();
    if opts.mode != FeatureMode::Stats {
        for seg in opts.granularity.segments() {
            let m = metrics.get(&(record.match_id.clone(), team.clone(), *seg))?;
            out.extend(m.values());
        }
    }
    if opts.mode != FeatureMode::Nets {
        let s = stats.get(&(record.match_id.clone(), team.clone()))?;
        out.extend(s.values().map(Some));
    }
    Some(out)
}

/// Assembles one row per match whose two teams both have enough history.
///
/// Every match in `matches` (draws included) counts as history; which
/// matches become rows depends on the target kind.
pub fn build_table(
    matches: &[MatchRecord],
    metrics: &MetricsStore,
    stats: &StatsStore,
    opts: &TableOptions,
) -> FeatureTable {
    let mut ordered: Vec<&MatchRecord> = matches.iter().collect();
    ordered.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.match_id.cmp(&b.match_id)));

    let mut histories: HashMap<&TeamId, Vec<TeamMatchEntry>> = HashMap::new();
    for m in &ordered {
        for (team, venue) in [(&m.home_team_id, Venue::Home), (&m.away_team_id, Venue::Away)] {
            if let Some(values) = team_values(m, team, opts, metrics, stats) {
                histories.entry(team).or_default().push(TeamMatchEntry {
                    match_id: m.match_id.clone(),
                    date: m.date,
                    venue,
                    values,
                });
            }
        }
    }

    let mut skips = SkipCounts::default();
    let mut rows = Vec::new();
    let empty = Vec::new();
    for m in &ordered {
        let label = m.outcome();
        if opts.target_kind == TargetKind::Binary && label == Outcome::Draw {
            skips.draws_excluded += 1;
            continue;
        }
        let side = |team: &TeamId, venue| {
            let hist = histories.get(team).unwrap_or(&empty);
            rolling_features(hist, team, m.date, venue, &opts.rolling)
        };
        let (home, away) = match (side(&m.home_team_id, Venue::Home), side(&m.away_team_id, Venue::Away)) {
            (Ok(h), Ok(a)) => (h, a),
            (Err(Error::InsufficientHistory { .. }), _) | (_, Err(Error::InsufficientHistory { .. })) => {
                skips.insufficient_history += 1;
                continue;
            }
            _ => {
                skips.missing_inputs += 1;
                continue;
            }
        };
        let features: Option<Vec<f64>> = home.values.iter().chain(&away.values).copied().collect();
        let Some(features) = features else {
            skips.missing_values += 1;
            continue;
        };
        rows.push(FeatureRow {
            match_id: m.match_id.clone(),
            features,
            label,
            coverage: Some((home.coverage, away.coverage)),
        });
    }
    FeatureTable {
        options: *opts,
        feature_names: feature_names(opts.mode, opts.granularity),
        rows,
        skips,
    }
}

/// Sidecar metadata of a persisted table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub mode: FeatureMode,
    pub granularity: Granularity,
    pub target_kind: TargetKind,
    pub window: usize,
    pub min_history: usize,
    pub venue_conditioned: bool,
    pub rows: usize,
    pub skips: SkipCounts,
}

impl FeatureTable {
    pub fn meta(&self) -> TableMeta {
        TableMeta {
            mode: self.options.mode,
            granularity: self.options.granularity,
            target_kind: self.options.target_kind,
            window: self.options.rolling.window,
            min_history: self.options.rolling.min_history,
            venue_conditioned: self.options.rolling.venue_conditioned,
            rows: self.rows.len(),
            skips: self.skips,
        }
    }

    /// CSV with header `<features...>,label,match_id`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.push("label".into());
        header.push("match_id".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.features.iter().map(f64::to_string).collect();
            rec.push(r.label.class_index().to_string());
            rec.push(r.match_id.0.clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(data: &[u8], meta: &TableMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(data);
        let header = rdr.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[n - 2] != "label" || &header[n - 1] != "match_id" {
            return Err(Error::MalformedInput(
                "feature table must end with label,match_id".into(),
            ));
        }
        let feature_names: Vec<String> = header.iter().take(n - 2).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let features = rec
                .iter()
                .take(n - 2)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::MalformedInput(format!("bad feature value `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let label = rec[n - 2]
                .parse::<usize>()
                .ok()
                .and_then(Outcome::from_class_index)
                .ok_or_else(|| Error::MalformedInput(format!("bad label `{}`", &rec[n - 2])))?;
            rows.push(FeatureRow {
                match_id: MatchId::new(&rec[n - 1]),
                features,
                label,
                coverage: None,
            });
        }
        Ok(Self {
            options: TableOptions {
                mode: meta.mode,
                granularity: meta.granularity,
                target_kind: meta.target_kind,
                rolling: RollingOptions {
                    window: meta.window,
                    min_history: meta.min_history,
                    venue_conditioned: meta.venue_conditioned,
                },
            },
            feature_names,
            rows,
            skips: meta.skips,
        })
    }
}
