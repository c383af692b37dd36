//! Event and match ingestion.
//!
//! Two event sources are supported: the canonical CSV layout written by this
//! crate and Wyscout v2 public-dataset JSON. Both are mapped onto [`Event`].
//! Match metadata comes either from the canonical matches CSV or from a
//! Wyscout `matches_*.json` file (which also carries substitutions).

mod canonical;
mod wyscout;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use canonical::{load_matches, write_events_csv, write_matches_csv, EVENTS_HEADER, MATCHES_HEADER};
pub use wyscout::{parse_wyscout_matches, WyscoutMatches};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_type!(MatchId);
id_type!(TeamId);
id_type!(PlayerId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Period {
    #[serde(rename = "1H")]
    FirstHalf,
    #[serde(rename = "2H")]
    SecondHalf,
}

impl Period {
    pub fn as_str(self) -> &'static str {
        match self {
            Period::FirstHalf => "1H",
            Period::SecondHalf => "2H",
        }
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1H" => Ok(Period::FirstHalf),
            "2H" => Ok(Period::SecondHalf),
            other => Err(Error::MalformedInput(format!("unknown period `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Pass,
    Shot,
    Save,
    Foul,
    YellowCard,
    RedCard,
    Substitution,
    Goal,
    Assist,
    Other,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::Pass,
        EventKind::Shot,
        EventKind::Save,
        EventKind::Foul,
        EventKind::YellowCard,
        EventKind::RedCard,
        EventKind::Substitution,
        EventKind::Goal,
        EventKind::Assist,
        EventKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Pass => "Pass",
            EventKind::Shot => "Shot",
            EventKind::Save => "Save",
            EventKind::Foul => "Foul",
            EventKind::YellowCard => "YellowCard",
            EventKind::RedCard => "RedCard",
            EventKind::Substitution => "Substitution",
            EventKind::Goal => "Goal",
            EventKind::Assist => "Assist",
            EventKind::Other => "Other",
        }
    }

    /// Unknown names map to `Other`.
    pub fn from_name(s: &str) -> Self {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .unwrap_or(EventKind::Other)
    }
}

/// One atomic match event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub match_id: MatchId,
    pub team_id: TeamId,
    pub player_id: PlayerId,
    pub period: Period,
    /// Seconds from the start of the period. Stoppage time keeps counting
    /// past 45 minutes within the same period.
    pub second: f64,
    pub kind: EventKind,
    pub success: bool,
    pub x: f64,
    pub y: f64,
    pub recipient_id: Option<PlayerId>,
    pub sub_out_id: Option<PlayerId>,
    pub sub_in_id: Option<PlayerId>,
}

impl Event {
    pub fn is_completed_pass(&self) -> bool {
        self.kind == EventKind::Pass && self.success
    }

    /// Checks the per-event invariants (coordinates, recipient and
    /// substitution field presence).
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.x) || !(0.0..=100.0).contains(&self.y) {
            return Err(Error::MalformedInput(format!(
                "match {}: coordinate ({}, {}) outside [0,100]",
                self.match_id, self.x, self.y
            )));
        }
        if !(self.second.is_finite() && self.second >= 0.0) {
            return Err(Error::MalformedInput(format!(
                "match {}: invalid event time {}",
                self.match_id, self.second
            )));
        }
        if self.recipient_id.is_some() != self.is_completed_pass() {
            return Err(Error::MalformedInput(format!(
                "match {}: recipient must be present exactly on completed passes",
                self.match_id
            )));
        }
        let is_sub = self.kind == EventKind::Substitution;
        if is_sub != (self.sub_in_id.is_some() && self.sub_out_id.is_some())
            || (!is_sub && (self.sub_in_id.is_some() || self.sub_out_id.is_some()))
        {
            return Err(Error::MalformedInput(format!(
                "match {}: substitution fields must be present exactly on substitutions",
                self.match_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Competition {
    LaLiga,
    PremierLeague,
    SerieA,
    Ligue1,
    Bundesliga,
    WorldCup,
    Euro,
}

impl Competition {
    pub const ALL: [Competition; 7] = [
        Competition::LaLiga,
        Competition::PremierLeague,
        Competition::SerieA,
        Competition::Ligue1,
        Competition::Bundesliga,
        Competition::WorldCup,
        Competition::Euro,
    ];

    pub const DOMESTIC: [Competition; 5] = [
        Competition::LaLiga,
        Competition::PremierLeague,
        Competition::SerieA,
        Competition::Ligue1,
        Competition::Bundesliga,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Competition::LaLiga => "LaLiga",
            Competition::PremierLeague => "PremierLeague",
            Competition::SerieA => "SerieA",
            Competition::Ligue1 => "Ligue1",
            Competition::Bundesliga => "Bundesliga",
            Competition::WorldCup => "WorldCup",
            Competition::Euro => "Euro",
        }
    }

    pub fn is_domestic(self) -> bool {
        Self::DOMESTIC.contains(&self)
    }
}

impl fmt::Display for Competition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Competition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::MalformedInput(format!("unknown competition `{s}`")))
    }
}

/// Match result from the home side's perspective. The discriminants are the
/// class indices used by the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    HomeLoss = 0,
    HomeWin = 1,
    Draw = 2,
}

impl Outcome {
    pub fn from_score(home_goals: u32, away_goals: u32) -> Self {
        match home_goals.cmp(&away_goals) {
            std::cmp::Ordering::Greater => Outcome::HomeWin,
            std::cmp::Ordering::Less => Outcome::HomeLoss,
            std::cmp::Ordering::Equal => Outcome::Draw,
        }
    }

    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Outcome::HomeLoss),
            1 => Some(Outcome::HomeWin),
            2 => Some(Outcome::Draw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub match_id: MatchId,
    pub competition: Competition,
    pub date: NaiveDate,
    pub home_team_id: TeamId,
    pub away_team_id: TeamId,
    pub home_goals: u32,
    pub away_goals: u32,
    pub home_starters: Vec<PlayerId>,
    pub away_starters: Vec<PlayerId>,
}

impl MatchRecord {
    pub fn outcome(&self) -> Outcome {
        Outcome::from_score(self.home_goals, self.away_goals)
    }

    pub fn is_draw(&self) -> bool {
        self.home_goals == self.away_goals
    }

    pub fn starters(&self, team: &TeamId) -> Option<&[PlayerId]> {
        if *team == self.home_team_id {
            Some(&self.home_starters)
        } else if *team == self.away_team_id {
            Some(&self.away_starters)
        } else {
            None
        }
    }

    pub fn opponent(&self, team: &TeamId) -> Option<&TeamId> {
        if *team == self.home_team_id {
            Some(&self.away_team_id)
        } else if *team == self.away_team_id {
            Some(&self.home_team_id)
        } else {
            None
        }
    }

    /// Goals scored and conceded by `team`.
    pub fn goals_for_against(&self, team: &TeamId) -> Option<(u32, u32)> {
        if *team == self.home_team_id {
            Some((self.home_goals, self.away_goals))
        } else if *team == self.away_team_id {
            Some((self.away_goals, self.home_goals))
        } else {
            None
        }
    }

    pub(crate) fn check_starters(&self) -> std::result::Result<(), String> {
        for (side, list) in [("home", &self.home_starters), ("away", &self.away_starters)] {
            if list.len() != 11 {
                return Err(format!("{side} side lists {} starters", list.len()));
            }
            let unique: HashSet<_> = list.iter().collect();
            if unique.len() != 11 {
                return Err(format!("{side} starters contain duplicates"));
            }
        }
        Ok(())
    }
}

/// A match that was rejected while loading, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDiagnostic {
    pub match_id: MatchId,
    pub error_class: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedMatches {
    pub matches: Vec<MatchRecord>,
    pub diagnostics: Vec<MatchDiagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    WyscoutJson,
    CanonicalCsv,
}

/// Coordinates may overshoot the pitch by up to this much and get clamped.
pub const CLAMP_TOLERANCE: f64 = 0.5;

pub(crate) fn clamp_coordinate(v: f64, context: &str) -> Result<f64> {
    if !v.is_finite() || !(-CLAMP_TOLERANCE..=100.0 + CLAMP_TOLERANCE).contains(&v) {
        return Err(Error::MalformedInput(format!(
            "{context}: coordinate {v} outside [0,100]"
        )));
    }
    Ok(v.clamp(0.0, 100.0))
}

/// Parses an event stream into canonical events, ordered by (period, second)
/// within each match. Matches keep their order of first appearance.
pub fn parse_event_log(stream: &[u8], format: EventFormat) -> Result<Vec<Event>> {
    let events = match format {
        EventFormat::CanonicalCsv => canonical::parse_events_csv(stream)?,
        EventFormat::WyscoutJson => wyscout::parse_wyscout_events(stream)?,
    };
    Ok(order_events(events))
}

pub(crate) fn order_events(mut events: Vec<Event>) -> Vec<Event> {
    let mut first_seen: std::collections::HashMap<MatchId, usize> = Default::default();
    for e in &events {
        let next = first_seen.len();
        first_seen.entry(e.match_id.clone()).or_insert(next);
    }
    events.sort_by(|a, b| {
        first_seen[&a.match_id]
            .cmp(&first_seen[&b.match_id])
            .then(a.period.cmp(&b.period))
            .then(a.second.total_cmp(&b.second))
    });
    events
}

/// Keeps decisive matches only, unless `include_draws` is set.
pub fn filter_outcomes(matches: &[MatchRecord], include_draws: bool) -> Vec<MatchRecord> {
    matches
        .iter()
        .filter(|m| include_draws || !m.is_draw())
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, h: u32, a: u32) -> MatchRecord {
        let starters = |p: &str| (0..11).map(|i| PlayerId::new(format!("{p}{i}"))).collect();
        MatchRecord {
            match_id: MatchId::new(id),
            competition: Competition::LaLiga,
            date: NaiveDate::from_ymd_opt(2017, 9, 1).unwrap(),
            home_team_id: TeamId::new("h"),
            away_team_id: TeamId::new("a"),
            home_goals: h,
            away_goals: a,
            home_starters: starters("h"),
            away_starters: starters("a"),
        }
    }

    #[test]
    fn outcome_labels() {
        assert_eq!(Outcome::from_score(2, 1), Outcome::HomeWin);
        assert_eq!(Outcome::from_score(0, 1), Outcome::HomeLoss);
        assert_eq!(Outcome::from_score(1, 1), Outcome::Draw);
        assert_eq!(Outcome::HomeWin.class_index(), 1);
        assert_eq!(Outcome::HomeLoss.class_index(), 0);
        assert_eq!(Outcome::Draw.class_index(), 2);
    }

    #[test]
    fn filter_drops_draws_in_order() {
        let ms = vec![
            record("a", 1, 0),
            record("b", 1, 1),
            record("c", 0, 2),
            record("d", 0, 0),
        ];
        let kept = filter_outcomes(&ms, false);
        let ids: Vec<_> = kept.iter().map(|m| m.match_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert_eq!(filter_outcomes(&ms, true), ms);
    }

    #[test]
    fn all_draws_filtered_to_empty() {
        let ms = vec![record("a", 1, 1), record("b", 0, 0)];
        assert!(filter_outcomes(&ms, false).is_empty());
    }

    #[test]
    fn clamp_tolerance() {
        assert_eq!(clamp_coordinate(100.4, "t").unwrap(), 100.0);
        assert_eq!(clamp_coordinate(-0.5, "t").unwrap(), 0.0);
        assert!(clamp_coordinate(100.6, "t").is_err());
        assert!(clamp_coordinate(f64::NAN, "t").is_err());
    }

    #[test]
    fn unknown_kind_is_other() {
        assert_eq!(EventKind::from_name("Duel"), EventKind::Other);
        assert_eq!(EventKind::from_name("Pass"), EventKind::Pass);
    }
}
