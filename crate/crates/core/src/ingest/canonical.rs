use std::collections::HashSet;
use std::io::Write;

use chrono::NaiveDate;
use csv::StringRecord;

use super::{
    clamp_coordinate, Event, EventKind, LoadedMatches, MatchDiagnostic, MatchId, MatchRecord, PlayerId, TeamId,
};
use crate::error::{Error, Result};

pub const EVENTS_HEADER: [&str; 12] = [
    "match_id",
    "team_id",
    "player_id",
    "period",
    "second",
    "kind",
    "success",
    "x",
    "y",
    "recipient_id",
    "sub_out_id",
    "sub_in_id",
];

pub const MATCHES_HEADER: [&str; 9] = [
    "match_id",
    "competition",
    "date",
    "home_team_id",
    "away_team_id",
    "home_goals",
    "away_goals",
    "home_starters",
    "away_starters",
];

/// Resolves each required column name to its index in the header.
fn column_indices<const N: usize>(header: &StringRecord, required: [&str; N]) -> Result<[usize; N]> {
    let mut out = [0usize; N];
    for (slot, name) in out.iter_mut().zip(required) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MalformedInput(format!("missing required column `{name}`")))?;
    }
    Ok(out)
}

fn reader(stream: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(stream)
}

fn optional_id(s: &str) -> Option<PlayerId> {
    (!s.is_empty()).then(|| PlayerId::new(s))
}

fn parse_bool(s: &str, line: u64) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::MalformedInput(format!("line {line}: bad boolean `{other}`"))),
    }
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::MalformedInput(format!("line {line}: bad {what} `{s}`")))
}

pub(super) fn parse_events_csv(stream: &[u8]) -> Result<Vec<Event>> {
    if stream.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut rdr = reader(stream);
    let header = rdr.headers()?.clone();
    let cols = column_indices(&header, EVENTS_HEADER)?;
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(cols[i]).unwrap_or("");
        let context = format!("line {line}");
        let event = Event {
            match_id: MatchId::new(field(0)),
            team_id: TeamId::new(field(1)),
            player_id: PlayerId::new(field(2)),
            period: field(3).parse()?,
            second: parse_f64(field(4), "second", line)?,
            kind: EventKind::from_name(field(5)),
            success: parse_bool(field(6), line)?,
            x: clamp_coordinate(parse_f64(field(7), "x", line)?, &context)?,
            y: clamp_coordinate(parse_f64(field(8), "y", line)?, &context)?,
            recipient_id: optional_id(field(9)),
            sub_out_id: optional_id(field(10)),
            sub_in_id: optional_id(field(11)),
        };
        event
            .validate()
            .map_err(|e| Error::MalformedInput(format!("{context}: {e}")))?;
        events.push(event);
    }
    Ok(events)
}

pub fn write_events_csv<W: Write>(events: &[Event], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        let opt = |p: &Option<PlayerId>| p.as_ref().map_or("", |p| p.as_str()).to_owned();
        w.write_record([
            e.match_id.0.clone(),
            e.team_id.0.clone(),
            e.player_id.0.clone(),
            e.period.as_str().to_owned(),
            e.second.to_string(),
            e.kind.as_str().to_owned(),
            e.success.to_string(),
            e.x.to_string(),
            e.y.to_string(),
            opt(&e.recipient_id),
            opt(&e.sub_out_id),
            opt(&e.sub_in_id),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_starters(s: &str) -> Vec<PlayerId> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(PlayerId::new)
        .collect()
}

/// Loads match metadata. Matches without a valid 11-player starting list on
/// either side are excluded and reported in `diagnostics`.
pub fn load_matches(stream: &[u8]) -> Result<LoadedMatches> {
    let mut out = LoadedMatches::default();
    if stream.iter().all(u8::is_ascii_whitespace) {
        return Ok(out);
    }
    let mut rdr = reader(stream);
    let header = rdr.headers()?.clone();
    let cols = column_indices(&header, MATCHES_HEADER)?;
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(cols[i]).unwrap_or("");
        let match_id = MatchId::new(field(0));
        if !seen.insert(match_id.clone()) {
            return Err(Error::DuplicateMatch(match_id.0));
        }
        let goals = |i: usize| {
            field(i)
                .parse::<u32>()
                .map_err(|_| Error::MalformedInput(format!("line {line}: bad goal count `{}`", field(i))))
        };
        let date = NaiveDate::parse_from_str(field(2), "%Y-%m-%d")
            .map_err(|_| Error::MalformedInput(format!("line {line}: bad date `{}`", field(2))))?;
        let record = MatchRecord {
            match_id,
            competition: field(1).parse()?,
            date,
            home_team_id: TeamId::new(field(3)),
            away_team_id: TeamId::new(field(4)),
            home_goals: goals(5)?,
            away_goals: goals(6)?,
            home_starters: parse_starters(field(7)),
            away_starters: parse_starters(field(8)),
        };
        match record.check_starters() {
            Ok(()) => out.matches.push(record),
            Err(reason) => {
                log::warn!("excluding match {}: {reason}", record.match_id);
                out.diagnostics.push(MatchDiagnostic {
                    error_class: "MissingStarters".into(),
                    message: Error::MissingStarters(record.match_id.0.clone()).to_string() + ": " + &reason,
                    match_id: record.match_id,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_matches_csv<W: Write>(matches: &[MatchRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(MATCHES_HEADER)?;
    let join = |ps: &[PlayerId]| ps.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(";");
    for m in matches {
        w.write_record([
            m.match_id.0.clone(),
            m.competition.as_str().to_owned(),
            m.date.format("%Y-%m-%d").to_string(),
            m.home_team_id.0.clone(),
            m.away_team_id.0.clone(),
            m.home_goals.to_string(),
            m.away_goals.to_string(),
            join(&m.home_starters),
            join(&m.away_starters),
        ])?;
    }
    w.flush()?;
    Ok(())
}
