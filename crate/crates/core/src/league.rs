//! Season-level analyses: metric/ranking correlations, per-league model
//! evaluation and leave-one-league-out season simulation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::features::{FeatureTable, TargetKind};
use crate::ingest::{Competition, MatchId, MatchRecord, Outcome, TeamId};
use crate::models::eval::argmax;
use crate::models::{evaluate, stratified_split, train, tune, Averaging, Dataset, EvaluationReport, Family, ModelSpec};

/// Sample correlation and two-sided p-value from the t distribution with
/// n − 2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooShort(n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    if r.abs() >= 1.0 {
        return Ok((r, 0.0));
    }
    let df = nf - 2.0;
    let t2 = r * r * df / (1.0 - r * r);
    let p = beta_reg(df / 2.0, 0.5, df / (df + t2));
    Ok((r, p.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    Simulated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Simulated => "simulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandingRow {
    pub rank: usize,
    pub team: TeamId,
    pub points: u32,
    pub wins: u32,
    pub draws: u32,
    pub losses: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandingsTable {
    pub league: Competition,
    pub provenance: Provenance,
    pub rows: Vec<StandingRow>,
}

/// A result as (home, away, outcome).
pub type Fixture = (TeamId, TeamId, Outcome);

/// Points awarded to (home, away) for one outcome: 3/0, 1/1 or 0/3.
pub fn match_points(outcome: Outcome) -> (u32, u32) {
    match outcome {
        Outcome::HomeWin => (3, 0),
        Outcome::Draw => (1, 1),
        Outcome::HomeLoss => (0, 3),
    }
}

/// Table from results; `teams` are listed even without a fixture. Ties
/// break on points, then wins, then team id.
pub fn standings(league: Competition, provenance: Provenance, teams: &[TeamId], results: &[Fixture]) -> StandingsTable {
    let mut acc: BTreeMap<TeamId, StandingRow> = teams
        .iter()
        .map(|t| {
            (
                t.clone(),
                StandingRow {
                    rank: 0,
                    team: t.clone(),
                    points: 0,
                    wins: 0,
                    draws: 0,
                    losses: 0,
                },
            )
        })
        .collect();
    for (home, away, outcome) in results {
        let (hp, ap) = match_points(*outcome);
        for (team, pts) in [(home, hp), (away, ap)] {
            let row = acc.entry(team.clone()).or_insert_with(|| StandingRow {
                rank: 0,
                team: team.clone(),
                points: 0,
                wins: 0,
                draws: 0,
                losses: 0,
            });
            row.points += pts;
            match pts {
                3 => row.wins += 1,
                1 => row.draws += 1,
                _ => row.losses += 1,
            }
        }
    }
    let mut rows: Vec<StandingRow> = acc.into_values().collect();
    rows.sort_by(|a, b| {
        b.points
            .cmp(&a.points)
            .then(b.wins.cmp(&a.wins))
            .then(a.team.cmp(&b.team))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    StandingsTable {
        league,
        provenance,
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationComparison {
    pub exact_hits: usize,
    pub within_two: usize,
    pub champion_correct: bool,
}

pub fn compare(real: &StandingsTable, simulated: &StandingsTable) -> SimulationComparison {
    let sim_rank: HashMap<&TeamId, usize> = simulated.rows.iter().map(|r| (&r.team, r.rank)).collect();
    let mut exact_hits = 0;
    let mut within_two = 0;
    for r in &real.rows {
        if let Some(&s) = sim_rank.get(&r.team) {
            let d = s.abs_diff(r.rank);
            exact_hits += usize::from(d == 0);
            within_two += usize::from(d <= 2);
        }
    }
    let champion_correct =
        matches!((real.rows.first(), simulated.rows.first()), (Some(a), Some(b)) if a.team == b.team);
    SimulationComparison {
        exact_hits,
        within_two,
        champion_correct,
    }
}

impl StandingsTable {
    pub fn rank_of(&self, team: &TeamId) -> Option<usize> {
        self.rows.iter().find(|r| &r.team == team).map(|r| r.rank)
    }
}

/// Standings CSV: `league,rank,team,points,provenance`.
pub fn write_standings_csv<W: Write>(out: W, tables: &[StandingsTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["league", "rank", "team", "points", "provenance"])?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                t.league.as_str().to_string(),
                r.rank.to_string(),
                r.team.0.clone(),
                r.points.to_string(),
                t.provenance.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: String,
    pub r: Option<f64>,
    pub p: Option<f64>,
    /// Error class when the correlation is undefined for this metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

/// Correlates each metric's per-team season mean with the team's final
/// rank. `observations` holds one metric vector per network.
pub fn metric_rank_correlations(
    columns: &[String],
    observations: &[(TeamId, Vec<Option<f64>>)],
    standings: &StandingsTable,
) -> Result<Vec<MetricCorrelation>> {
    let mut by_team: HashMap<&TeamId, Vec<&Vec<Option<f64>>>> = HashMap::new();
    for (team, v) in observations {
        by_team.entry(team).or_default().push(v);
    }
    for r in &standings.rows {
        if !by_team.contains_key(&r.team) {
            return Err(Error::MissingTeam(r.team.0.clone()));
        }
    }
    Ok(columns
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut means = Vec::new();
            let mut ranks = Vec::new();
            for r in &standings.rows {
                let vals: Vec<f64> = by_team[&r.team]
                    .iter()
                    .filter_map(|v| v.get(j).copied().flatten())
                    .collect();
                if !vals.is_empty() {
                    means.push(vals.iter().sum::<f64>() / vals.len() as f64);
                    ranks.push(r.rank as f64);
                }
            }
            match pearson(&means, &ranks) {
                Ok((r, p)) => MetricCorrelation {
                    metric: name.clone(),
                    r: Some(r),
                    p: Some(p),
                    flag: None,
                },
                Err(e) => MetricCorrelation {
                    metric: name.clone(),
                    r: None,
                    p: None,
                    flag: Some(e.class().to_string()),
                },
            }
        })
        .collect())
}

/// Correlation CSV: `metric,r,p` (empty cells for flagged metrics).
pub fn write_correlations_csv<W: Write>(out: W, rows: &[MetricCorrelation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "r", "p"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in rows {
        w.write_record([c.metric.clone(), opt(c.r), opt(c.p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Row indices of `table` grouped by the competition of each row's match.
pub fn rows_by_league(
    table: &FeatureTable,
    league_of: &HashMap<MatchId, Competition>,
) -> BTreeMap<Competition, Vec<usize>> {
    let mut out: BTreeMap<Competition, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        if let Some(&c) = league_of.get(&r.match_id) {
            out.entry(c).or_default().push(i);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueEvaluation {
    pub league: Competition,
    pub rows: usize,
    pub spec: ModelSpec,
    pub report: EvaluationReport,
}

/// Split (30 % test), tune on the training part, train and evaluate.
pub fn holdout_evaluation(
    data: &Dataset,
    family: Family,
    budget: usize,
    seed: u64,
) -> Result<(ModelSpec, EvaluationReport)> {
    let (tr, te) = stratified_split(&data.labels, 0.3, seed)?;
    let train_d = data.subset(&tr);
    let test_d = data.subset(&te);
    let spec = if budget == 0 {
        ModelSpec {
            hyperparameters: crate::models::Hyperparameters::default_for(family),
            seed,
        }
    } else {
        tune(family, &train_d, budget, seed)?.best
    };
    let model = train(&spec, &train_d)?;
    let probs = model.predict_rows(&test_d.rows);
    let averaging = if data.n_classes == 2 {
        Averaging::BinaryPositive
    } else {
        Averaging::Macro
    };
    Ok((spec, evaluate(&probs, &test_d.labels, averaging, 0.5)?))
}

/// Runs the holdout pipeline separately on each domestic league's rows.
pub fn per_league_evaluation(
    table: &FeatureTable,
    league_of: &HashMap<MatchId, Competition>,
    family: Family,
    budget: usize,
    seed: u64,
) -> Result<Vec<LeagueEvaluation>> {
    let full = Dataset::from_table(table)?;
    rows_by_league(table, league_of)
        .into_iter()
        .filter(|(league, _)| league.is_domestic())
        .map(|(league, idx)| {
            let d = full.subset(&idx);
            let (spec, report) = holdout_evaluation(&d, family, budget, seed)?;
            Ok(LeagueEvaluation {
                league,
                rows: d.len(),
                spec,
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedMatch {
    pub match_id: MatchId,
    pub home: TeamId,
    pub away: TeamId,
    pub predicted: Outcome,
    pub actual: Outcome,
    pub home_points: u32,
    pub away_points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub league: Competition,
    pub spec: ModelSpec,
    pub training_rows: usize,
    pub matches: Vec<SimulatedMatch>,
    pub real: StandingsTable,
    pub simulated: StandingsTable,
    pub comparison: SimulationComparison,
}

/// Leave-one-league-out season simulation.
///
/// A three-class model is trained on every row outside `target`
/// (international tournaments included); each covered target-league match
/// is then predicted as its argmax class and scored 3/1/0. The real table
/// comes from every actual `target` result in `matches`.
pub fn simulate_league(
    target: Competition,
    table: &FeatureTable,
    matches: &[MatchRecord],
    spec: &ModelSpec,
) -> Result<SimulationResult> {
    if !target.is_domestic() {
        return Err(Error::UnknownLeague(target.as_str().to_string()));
    }
    if table.options.target_kind != TargetKind::Ternary {
        return Err(Error::Config(
            "league simulation needs a ternary feature table (use --with-draws)".into(),
        ));
    }
    let by_id: HashMap<&MatchId, &MatchRecord> = matches.iter().map(|m| (&m.match_id, m)).collect();
    let league_matches: Vec<&MatchRecord> = matches.iter().filter(|m| m.competition == target).collect();
    if league_matches.is_empty() {
        return Err(Error::UnknownLeague(format!("{target} has no matches in the input")));
    }
    let full = Dataset::from_table(table)?;
    let (mut train_idx, mut target_idx) = (Vec::new(), Vec::new());
    for (i, r) in table.rows.iter().enumerate() {
        match by_id.get(&r.match_id) {
            Some(m) if m.competition == target => target_idx.push(i),
            Some(_) => train_idx.push(i),
            None => {}
        }
    }
    let model = train(spec, &full.subset(&train_idx))?;

    let mut teams: Vec<TeamId> = league_matches
        .iter()
        .flat_map(|m| [m.home_team_id.clone(), m.away_team_id.clone()])
        .collect();
    teams.sort();
    teams.dedup();
    let real_results: Vec<Fixture> = league_matches
        .iter()
        .map(|m| (m.home_team_id.clone(), m.away_team_id.clone(), m.outcome()))
        .collect();
    let real = standings(target, Provenance::Real, &teams, &real_results);

    let simulated_matches: Vec<SimulatedMatch> = target_idx
        .iter()
        .map(|&i| {
            let row = &table.rows[i];
            let m = by_id[&row.match_id];
            let predicted = Outcome::from_class_index(argmax(&model.predict_row(&row.features)))
                .expect("ternary model predicts a known class");
            let (home_points, away_points) = match_points(predicted);
            SimulatedMatch {
                match_id: row.match_id.clone(),
                home: m.home_team_id.clone(),
                away: m.away_team_id.clone(),
                predicted,
                actual: m.outcome(),
                home_points,
                away_points,
            }
        })
        .collect();
    let sim_results: Vec<Fixture> = simulated_matches
        .iter()
        .map(|s| (s.home.clone(), s.away.clone(), s.predicted))
        .collect();
    let simulated = standings(target, Provenance::Simulated, &teams, &sim_results);
    let comparison = compare(&real, &simulated);
    Ok(SimulationResult {
        league: target,
        spec: *spec,
        training_rows: train_idx.len(),
        matches: simulated_matches,
        real,
        simulated,
        comparison,
    })
}
