//! Wyscout v2 public-dataset mapping.
//!
//! | Wyscout                                   | canonical                       |
//! |-------------------------------------------|---------------------------------|
//! | eventId 8 (Pass)                          | `Pass`, success = tag 1801      |
//! | eventId 10 (Shot), 3/33 penalty, 3/35 FK  | `Shot`, success = tag 1801      |
//! | eventId 9 (Save attempt)                  | `Save`, success = tag 1801      |
//! | eventId 2 (Foul)                          | `Foul`                          |
//! | tag 101 on a shot                         | extra `Goal` event              |
//! | tag 102 (own goal)                        | extra `Goal` for the other team |
//! | tag 301 (assist)                          | extra `Assist` event            |
//! | tag 1702 (yellow card)                    | extra `YellowCard` event        |
//! | tags 1701 / 1703 (red, second yellow)     | extra `RedCard` event           |
//! | everything else                           | `Other`                         |
//!
//! Tag 1802 marks an unsuccessful action. Wyscout passes carry no receiver;
//! the receiver of a completed pass is the next player of the same team to
//! touch the ball in the same period. A completed pass whose receiver cannot
//! be identified (the next same-team event is by the passer, or none follows
//! within [`RECEIVER_WINDOW_SECONDS`]) is recorded as unsuccessful so every
//! completed pass has a recipient. Extra-time and shoot-out periods are
//! skipped.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer};
use serde_json::Value;

use super::{
    clamp_coordinate, Competition, Event, EventKind, LoadedMatches, MatchDiagnostic, MatchId, MatchRecord, Period,
    PlayerId, TeamId,
};
use crate::error::{Error, Result};

pub const RECEIVER_WINDOW_SECONDS: f64 = 10.0;

const TAG_GOAL: i64 = 101;
const TAG_OWN_GOAL: i64 = 102;
const TAG_ASSIST: i64 = 301;
const TAG_RED: i64 = 1701;
const TAG_YELLOW: i64 = 1702;
const TAG_SECOND_YELLOW: i64 = 1703;
const TAG_ACCURATE: i64 = 1801;

fn lenient_i64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<i64, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::Number(n) => n.as_i64().unwrap_or(0),
        Value::String(s) => s.parse().unwrap_or(0),
        _ => 0,
    })
}

#[derive(Debug, Deserialize)]
struct RawTag {
    id: i64,
}

#[derive(Debug, Deserialize)]
struct RawPosition {
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawEvent {
    #[serde(deserialize_with = "lenient_i64")]
    event_id: i64,
    #[serde(default, deserialize_with = "lenient_i64")]
    sub_event_id: i64,
    #[serde(deserialize_with = "lenient_i64")]
    match_id: i64,
    #[serde(deserialize_with = "lenient_i64")]
    team_id: i64,
    #[serde(deserialize_with = "lenient_i64")]
    player_id: i64,
    match_period: String,
    event_sec: f64,
    #[serde(default)]
    positions: Vec<RawPosition>,
    #[serde(default)]
    tags: Vec<RawTag>,
}

impl RawEvent {
    fn has_tag(&self, id: i64) -> bool {
        self.tags.iter().any(|t| t.id == id)
    }

    fn base_kind(&self) -> EventKind {
        match (self.event_id, self.sub_event_id) {
            (8, _) => EventKind::Pass,
            (10, _) | (3, 33) | (3, 35) => EventKind::Shot,
            (9, _) => EventKind::Save,
            (2, _) => EventKind::Foul,
            _ => EventKind::Other,
        }
    }
}

pub(super) fn parse_wyscout_events(stream: &[u8]) -> Result<Vec<Event>> {
    if stream.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let raw: Vec<RawEvent> =
        serde_json::from_slice(stream).map_err(|e| Error::MalformedInput(format!("wyscout events: {e}")))?;

    // Both teams of each match, needed to credit own goals.
    let mut teams: HashMap<i64, Vec<i64>> = HashMap::new();
    for r in &raw {
        let t = teams.entry(r.match_id).or_default();
        if !t.contains(&r.team_id) {
            t.push(r.team_id);
        }
    }

    let mut out = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let period = match r.match_period.as_str() {
            "1H" => Period::FirstHalf,
            "2H" => Period::SecondHalf,
            _ => continue,
        };
        let (x, y) = match r.positions.first() {
            Some(p) => {
                let ctx = format!("wyscout match {} event #{i}", r.match_id);
                (clamp_coordinate(p.x, &ctx)?, clamp_coordinate(p.y, &ctx)?)
            }
            None => (0.0, 0.0),
        };
        let kind = r.base_kind();
        let mut success = r.has_tag(TAG_ACCURATE);
        let mut recipient_id = None;
        if kind == EventKind::Pass && success {
            recipient_id = infer_receiver(&raw, i).map(|p| PlayerId::new(p.to_string()));
            success = recipient_id.is_some();
        }
        let base = Event {
            match_id: MatchId::new(r.match_id.to_string()),
            team_id: TeamId::new(r.team_id.to_string()),
            player_id: PlayerId::new(r.player_id.to_string()),
            period,
            second: r.event_sec.max(0.0),
            kind,
            success,
            x,
            y,
            recipient_id,
            sub_out_id: None,
            sub_in_id: None,
        };
        let derived = |kind: EventKind| Event {
            kind,
            success: true,
            recipient_id: None,
            ..base.clone()
        };
        let mut extra = Vec::new();
        if kind == EventKind::Shot && r.has_tag(TAG_GOAL) {
            extra.push(derived(EventKind::Goal));
        }
        if r.has_tag(TAG_OWN_GOAL) {
            let other = teams[&r.match_id].iter().find(|&&t| t != r.team_id).copied();
            if let Some(other) = other {
                let mut g = derived(EventKind::Goal);
                g.team_id = TeamId::new(other.to_string());
                extra.push(g);
            }
        }
        if r.has_tag(TAG_ASSIST) {
            extra.push(derived(EventKind::Assist));
        }
        if r.has_tag(TAG_YELLOW) {
            extra.push(derived(EventKind::YellowCard));
        }
        if r.has_tag(TAG_RED) || r.has_tag(TAG_SECOND_YELLOW) {
            extra.push(derived(EventKind::RedCard));
        }
        out.push(base);
        out.extend(extra);
    }
    Ok(out)
}

/// Next same-team player touching the ball after event `i`, if different
/// from the passer.
fn infer_receiver(raw: &[RawEvent], i: usize) -> Option<i64> {
    let pass = &raw[i];
    raw[i + 1..]
        .iter()
        .take_while(|e| {
            e.match_id == pass.match_id
                && e.match_period == pass.match_period
                && e.event_sec - pass.event_sec <= RECEIVER_WINDOW_SECONDS
        })
        .find(|e| e.team_id == pass.team_id)
        .map(|e| e.player_id)
        .filter(|&p| p != pass.player_id && p != 0)
}

fn competition_from_wyscout(id: i64) -> Option<Competition> {
    match id {
        364 => Some(Competition::PremierLeague),
        412 => Some(Competition::Ligue1),
        426 => Some(Competition::Bundesliga),
        524 => Some(Competition::SerieA),
        795 => Some(Competition::LaLiga),
        28 => Some(Competition::WorldCup),
        102 => Some(Competition::Euro),
        _ => None,
    }
}

/// Match records plus the substitution events that Wyscout stores with the
/// match metadata rather than in the event stream.
#[derive(Debug, Clone, Default)]
pub struct WyscoutMatches {
    pub loaded: LoadedMatches,
    pub substitutions: Vec<Event>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawMatch {
    #[serde(deserialize_with = "lenient_i64")]
    wy_id: i64,
    #[serde(deserialize_with = "lenient_i64")]
    competition_id: i64,
    dateutc: String,
    teams_data: BTreeMap<String, RawTeamData>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawTeamData {
    side: String,
    #[serde(deserialize_with = "lenient_i64")]
    score: i64,
    #[serde(default)]
    formation: Option<RawFormation>,
}

#[derive(Debug, Deserialize)]
struct RawFormation {
    #[serde(default)]
    lineup: Value,
    #[serde(default)]
    substitutions: Value,
}

fn player_ids(v: &Value) -> Vec<PlayerId> {
    v.as_array()
        .map(|a| {
            a.iter()
                .filter_map(|p| p.get("playerId").and_then(Value::as_i64))
                .map(|p| PlayerId::new(p.to_string()))
                .collect()
        })
        .unwrap_or_default()
}

/// Parses a Wyscout `matches_*.json` document.
pub fn parse_wyscout_matches(stream: &[u8]) -> Result<WyscoutMatches> {
    let raw: Vec<RawMatch> =
        serde_json::from_slice(stream).map_err(|e| Error::MalformedInput(format!("wyscout matches: {e}")))?;
    let mut out = WyscoutMatches::default();
    let mut seen = std::collections::HashSet::new();
    for m in raw {
        let match_id = MatchId::new(m.wy_id.to_string());
        if !seen.insert(match_id.clone()) {
            return Err(Error::DuplicateMatch(match_id.0));
        }
        let competition = competition_from_wyscout(m.competition_id).ok_or_else(|| {
            Error::MalformedInput(format!("match {match_id}: unknown competition {}", m.competition_id))
        })?;
        let date = NaiveDate::parse_from_str(m.dateutc.get(..10).unwrap_or(""), "%Y-%m-%d")
            .map_err(|_| Error::MalformedInput(format!("match {match_id}: bad date `{}`", m.dateutc)))?;
        let side = |s: &str| m.teams_data.iter().find(|(_, t)| t.side == s);
        let (Some((home_id, home)), Some((away_id, away))) = (side("home"), side("away")) else {
            return Err(Error::MalformedInput(format!(
                "match {match_id}: missing home/away team"
            )));
        };
        let lineup = |t: &RawTeamData| t.formation.as_ref().map(|f| player_ids(&f.lineup)).unwrap_or_default();
        let record = MatchRecord {
            match_id: match_id.clone(),
            competition,
            date,
            home_team_id: TeamId::new(home_id.clone()),
            away_team_id: TeamId::new(away_id.clone()),
            home_goals: home.score.max(0) as u32,
            away_goals: away.score.max(0) as u32,
            home_starters: lineup(home),
            away_starters: lineup(away),
        };
        if let Err(reason) = record.check_starters() {
            out.loaded.diagnostics.push(MatchDiagnostic {
                match_id,
                error_class: "MissingStarters".into(),
                message: reason,
            });
            continue;
        }
        for (team_id, team) in [(home_id, home), (away_id, away)] {
            let Some(subs) = team.formation.as_ref().and_then(|f| f.substitutions.as_array()) else {
                continue;
            };
            for s in subs {
                let get = |k: &str| s.get(k).and_then(Value::as_i64);
                let (Some(p_in), Some(p_out)) = (get("playerIn"), get("playerOut")) else {
                    continue;
                };
                let minute = get("minute").unwrap_or(46).max(0) as f64;
                let (period, second) = if minute <= 45.0 {
                    (Period::FirstHalf, minute * 60.0)
                } else {
                    (Period::SecondHalf, (minute - 45.0) * 60.0)
                };
                out.substitutions.push(Event {
                    match_id: match_id.clone(),
                    team_id: TeamId::new(team_id.clone()),
                    player_id: PlayerId::new(p_out.to_string()),
                    period,
                    second,
                    kind: EventKind::Substitution,
                    success: true,
                    x: 0.0,
                    y: 0.0,
                    recipient_id: None,
                    sub_out_id: Some(PlayerId::new(p_out.to_string())),
                    sub_in_id: Some(PlayerId::new(p_in.to_string())),
                });
            }
        }
        out.loaded.matches.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_event_log, EventFormat};

    fn ev(id: i64, sub: &str, team: i64, player: i64, sec: f64, tags: &[i64]) -> String {
        let tags: Vec<String> = tags.iter().map(|t| format!("{{\"id\":{t}}}")).collect();
        format!(
            r#"{{"eventId":{id},"subEventId":{sub},"matchId":1,"teamId":{team},"playerId":{player},"matchPeriod":"1H","eventSec":{sec},"positions":[{{"x":50,"y":40}},{{"x":60,"y":40}}],"tags":[{}]}}"#,
            tags.join(",")
        )
    }

    #[test]
    fn pass_receiver_inferred_from_next_same_team_event() {
        let json = format!(
            "[{},{},{}]",
            ev(8, "85", 10, 1, 1.0, &[1801]),
            ev(1, "13", 20, 7, 2.0, &[]),
            ev(8, "85", 10, 2, 3.0, &[1802])
        );
        let events = parse_event_log(json.as_bytes(), EventFormat::WyscoutJson).unwrap();
        assert_eq!(events[0].kind, EventKind::Pass);
        assert!(events[0].success);
        assert_eq!(events[0].recipient_id, Some(PlayerId::new("2")));
        assert_eq!(events[1].kind, EventKind::Other);
        assert!(!events[2].success);
        assert_eq!(events[2].recipient_id, None);
    }

    #[test]
    fn unidentified_receiver_downgrades_pass() {
        let json = format!("[{}]", ev(8, "85", 10, 1, 1.0, &[1801]));
        let events = parse_event_log(json.as_bytes(), EventFormat::WyscoutJson).unwrap();
        assert!(!events[0].success);
        assert!(events.iter().all(|e| e.validate().is_ok()));
    }

    #[test]
    fn derived_goal_assist_and_cards() {
        let json = format!(
            "[{},{},{},{}]",
            ev(8, "85", 10, 1, 1.0, &[301, 1801]),
            ev(10, "100", 10, 2, 2.0, &[101, 1801]),
            ev(2, "\"\"", 20, 5, 3.0, &[1702]),
            ev(9, "90", 20, 9, 4.0, &[1801])
        );
        let events = parse_event_log(json.as_bytes(), EventFormat::WyscoutJson).unwrap();
        let kinds: Vec<_> = events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [
                EventKind::Pass,
                EventKind::Assist,
                EventKind::Shot,
                EventKind::Goal,
                EventKind::Foul,
                EventKind::YellowCard,
                EventKind::Save
            ]
        );
        assert!(events[6].success);
    }

    #[test]
    fn own_goal_credited_to_opponent() {
        let json = format!("[{},{}]", ev(1, "10", 10, 1, 1.0, &[102]), ev(8, "85", 20, 3, 2.0, &[]));
        let events = parse_event_log(json.as_bytes(), EventFormat::WyscoutJson).unwrap();
        let goal = events.iter().find(|e| e.kind == EventKind::Goal).unwrap();
        assert_eq!(goal.team_id, TeamId::new("20"));
    }

    #[test]
    fn matches_document() {
        let lineup = |base: i64| {
            (0..11)
                .map(|i| format!("{{\"playerId\":{}}}", base + i))
                .collect::<Vec<_>>()
                .join(",")
        };
        let json = format!(
            r#"[{{"wyId":5,"competitionId":364,"dateutc":"2017-08-11 18:45:00","teamsData":{{
                "1609":{{"side":"home","score":4,"formation":{{"lineup":[{}],"substitutions":[{{"playerIn":99,"playerOut":100,"minute":60}}]}}}},
                "1631":{{"side":"away","score":3,"formation":{{"lineup":[{}],"substitutions":"null"}}}}}}}}]"#,
            lineup(100),
            lineup(200)
        );
        let parsed = parse_wyscout_matches(json.as_bytes()).unwrap();
        let m = &parsed.loaded.matches[0];
        assert_eq!(m.competition, Competition::PremierLeague);
        assert_eq!((m.home_goals, m.away_goals), (4, 3));
        assert_eq!(m.home_team_id, TeamId::new("1609"));
        assert_eq!(m.date, NaiveDate::from_ymd_opt(2017, 8, 11).unwrap());
        assert_eq!(parsed.substitutions.len(), 1);
        let s = &parsed.substitutions[0];
        assert_eq!(s.period, Period::SecondHalf);
        assert_eq!(s.second, 900.0);
        assert_eq!(s.sub_in_id, Some(PlayerId::new("99")));
    }
}
