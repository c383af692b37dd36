//! Player passing networks.
//!
//! One network per (match, team, segment) with exactly eleven nodes, one per
//! starter. Substitutes are folded onto the slot of the player they replaced
//! so the node set never changes during a match.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Event, EventKind, MatchId, MatchRecord, Period, PlayerId, TeamId};

pub const SLOTS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Segment {
    Full,
    #[serde(rename = "1H")]
    FirstHalf,
    #[serde(rename = "2H")]
    SecondHalf,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Full, Segment::FirstHalf, Segment::SecondHalf];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Full => "Full",
            Segment::FirstHalf => "1H",
            Segment::SecondHalf => "2H",
        }
    }

    pub fn contains(self, period: Period) -> bool {
        match self {
            Segment::Full => true,
            Segment::FirstHalf => period == Period::FirstHalf,
            Segment::SecondHalf => period == Period::SecondHalf,
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|seg| seg.as_str() == s)
            .ok_or_else(|| Error::MalformedInput(format!("unknown segment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Player id to starter slot, for one team in one match.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotMap {
    starters: Vec<PlayerId>,
    slots: HashMap<PlayerId, usize>,
}

impl SlotMap {
    pub fn slot(&self, player: &PlayerId) -> Option<usize> {
        self.slots.get(player).copied()
    }

    pub fn starters(&self) -> &[PlayerId] {
        &self.starters
    }

    /// Every player that appeared for the team.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PlayerId, usize)> {
        self.slots.iter().map(|(p, &s)| (p, s))
    }
}

/// Maps each starter to itself and each substitute to the slot of the player
/// it replaced, following replacement chains in time order.
pub fn build_substitution_map(events: &[Event], record: &MatchRecord, team: &TeamId) -> Result<SlotMap> {
    let starters = record
        .starters(team)
        .ok_or_else(|| Error::MalformedInput(format!("team {team} did not play match {}", record.match_id)))?
        .to_vec();
    let mut slots: HashMap<PlayerId, usize> = starters.iter().cloned().zip(0..).collect();

    let mut subs: Vec<&Event> = events
        .iter()
        .filter(|e| e.kind == EventKind::Substitution && e.team_id == *team && e.match_id == record.match_id)
        .collect();
    subs.sort_by(|a, b| a.period.cmp(&b.period).then(a.second.total_cmp(&b.second)));

    for sub in subs {
        let (Some(out), Some(inn)) = (&sub.sub_out_id, &sub.sub_in_id) else {
            return Err(Error::MalformedInput(format!(
                "match {}: substitution without player ids",
                record.match_id
            )));
        };
        let slot = slots.get(out).copied().ok_or_else(|| Error::UnresolvableSubstitution {
            match_id: record.match_id.0.clone(),
            player: out.0.clone(),
        })?;
        slots.insert(inn.clone(), slot);
    }
    Ok(SlotMap { starters, slots })
}

/// Counts of passes that could not become edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetworkDiagnostics {
    /// Completed passes between two players folded onto the same slot.
    pub same_slot_passes: usize,
    /// Passes whose passer or receiver is not on the team sheet.
    pub unmapped_passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassingNetwork {
    pub match_id: MatchId,
    pub team_id: TeamId,
    pub segment: Segment,
    pub slots: Vec<PlayerId>,
    /// `weights[i][j]` = completed passes from slot i to slot j.
    pub weights: [[u32; SLOTS]; SLOTS],
    pub positions: [Option<Position>; SLOTS],
    #[serde(skip)]
    pub diagnostics: NetworkDiagnostics,
}

impl PassingNetwork {
    pub fn empty(match_id: MatchId, team_id: TeamId, segment: Segment, slots: Vec<PlayerId>) -> Self {
        Self {
            match_id,
            team_id,
            segment,
            slots,
            weights: [[0; SLOTS]; SLOTS],
            positions: [None; SLOTS],
            diagnostics: NetworkDiagnostics::default(),
        }
    }

    pub fn total_passes(&self) -> u64 {
        self.weights.iter().flatten().map(|&w| u64::from(w)).sum()
    }

    /// Structural invariants: zero diagonal, 11 slots, positions on the pitch.
    pub fn validate(&self) -> Result<()> {
        if self.slots.len() != SLOTS {
            return Err(Error::MalformedInput(format!("network has {} slots", self.slots.len())));
        }
        if (0..SLOTS).any(|i| self.weights[i][i] != 0) {
            return Err(Error::MalformedInput("network has a self-loop".into()));
        }
        let on_pitch = |v: f64| (0.0..=100.0).contains(&v);
        if self
            .positions
            .iter()
            .flatten()
            .any(|p| !on_pitch(p.x) || !on_pitch(p.y))
        {
            return Err(Error::MalformedInput("node position off the pitch".into()));
        }
        Ok(())
    }
}

/// Builds the passing network of `team` over `segment`.
pub fn build_passing_network(
    events: &[Event],
    record: &MatchRecord,
    team: &TeamId,
    segment: Segment,
) -> Result<PassingNetwork> {
    let map = build_substitution_map(events, record, team)?;
    Ok(network_from_map(events, record, team, segment, &map))
}

fn network_from_map(
    events: &[Event],
    record: &MatchRecord,
    team: &TeamId,
    segment: Segment,
    map: &SlotMap,
) -> PassingNetwork {
    let mut net = PassingNetwork::empty(record.match_id.clone(), team.clone(), segment, map.starters().to_vec());
    let mut sums = [(0.0f64, 0.0f64, 0usize); SLOTS];

    let passes = events.iter().filter(|e| {
        e.kind == EventKind::Pass && e.team_id == *team && e.match_id == record.match_id && segment.contains(e.period)
    });
    for e in passes {
        let Some(from) = map.slot(&e.player_id) else {
            net.diagnostics.unmapped_passes += 1;
            continue;
        };
        let s = &mut sums[from];
        s.0 += e.x;
        s.1 += e.y;
        s.2 += 1;
        if !e.success {
            continue;
        }
        match e.recipient_id.as_ref().and_then(|r| map.slot(r)) {
            None => net.diagnostics.unmapped_passes += 1,
            Some(to) if to == from => net.diagnostics.same_slot_passes += 1,
            Some(to) => net.weights[from][to] += 1,
        }
    }
    for (pos, (sx, sy, n)) in net.positions.iter_mut().zip(sums) {
        if n > 0 {
            *pos = Some(Position {
                x: sx / n as f64,
                y: sy / n as f64,
            });
        }
    }
    net
}

/// Full, first-half and second-half networks of one team, sharing one
/// substitution map.
pub fn build_all_segments(events: &[Event], record: &MatchRecord, team: &TeamId) -> Result<[PassingNetwork; 3]> {
    let map = build_substitution_map(events, record, team)?;
    Ok(Segment::ALL.map(|seg| network_from_map(events, record, team, seg, &map)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Competition;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn p(s: &str) -> PlayerId {
        PlayerId::new(s)
    }

    fn record() -> MatchRecord {
        MatchRecord {
            match_id: MatchId::new("m"),
            competition: Competition::PremierLeague,
            date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            home_team_id: TeamId::new("A"),
            away_team_id: TeamId::new("B"),
            home_goals: 1,
            away_goals: 0,
            home_starters: (1..=11).map(|i| p(&format!("p{i}"))).collect(),
            away_starters: (1..=11).map(|i| p(&format!("q{i}"))).collect(),
        }
    }

    fn pass(from: &str, to: Option<&str>, period: Period, second: f64) -> Event {
        Event {
            match_id: MatchId::new("m"),
            team_id: TeamId::new("A"),
            player_id: p(from),
            period,
            second,
            kind: EventKind::Pass,
            success: to.is_some(),
            x: 30.0,
            y: 60.0,
            recipient_id: to.map(p),
            sub_out_id: None,
            sub_in_id: None,
        }
    }

    fn sub(out: &str, inn: &str, second: f64) -> Event {
        Event {
            kind: EventKind::Substitution,
            success: true,
            recipient_id: None,
            sub_out_id: Some(p(out)),
            sub_in_id: Some(p(inn)),
            ..pass(out, None, Period::SecondHalf, second)
        }
    }

    #[test]
    fn no_substitutions_is_identity() {
        let m = record();
        let map = build_substitution_map(&[], &m, &TeamId::new("A")).unwrap();
        assert_eq!(map.len(), 11);
        for (i, s) in m.home_starters.iter().enumerate() {
            assert_eq!(map.slot(s), Some(i));
        }
    }

    #[test]
    fn substitute_takes_replaced_slot() {
        let m = record();
        let map = build_substitution_map(&[sub("p9", "p15", 600.0)], &m, &TeamId::new("A")).unwrap();
        assert_eq!(map.slot(&p("p15")), Some(8));
        assert_eq!(map.slot(&p("p9")), Some(8));
        assert_eq!(map.len(), 12);
    }

    #[test]
    fn substitution_chain_resolves_to_original_slot() {
        let m = record();
        // Listed out of order on purpose: the map follows match time.
        let events = [sub("p15", "p21", 1500.0), sub("p9", "p15", 600.0)];
        let map = build_substitution_map(&events, &m, &TeamId::new("A")).unwrap();
        assert_eq!(map.slot(&p("p21")), Some(8));
    }

    #[test]
    fn unresolvable_substitution() {
        let m = record();
        let err = build_substitution_map(&[sub("p99", "p15", 600.0)], &m, &TeamId::new("A")).unwrap_err();
        assert!(matches!(err, Error::UnresolvableSubstitution { player, .. } if player == "p99"));
    }

    #[test]
    fn first_half_passes_counted_in_full_only() {
        let m = record();
        let events: Vec<_> = (0..3)
            .map(|i| pass("p1", Some("p2"), Period::FirstHalf, i as f64))
            .collect();
        let team = TeamId::new("A");
        let full = build_passing_network(&events, &m, &team, Segment::Full).unwrap();
        let second = build_passing_network(&events, &m, &team, Segment::SecondHalf).unwrap();
        assert_eq!(full.weights[0][1], 3);
        assert_eq!(second.weights[0][1], 0);
        assert_eq!(second.positions[0], None);
        assert_eq!(full.positions[0], Some(Position { x: 30.0, y: 60.0 }));
    }

    #[test]
    fn failed_pass_adds_no_weight() {
        let m = record();
        let net = build_passing_network(
            &[pass("p1", None, Period::FirstHalf, 1.0)],
            &m,
            &TeamId::new("A"),
            Segment::Full,
        )
        .unwrap();
        assert_eq!(net.total_passes(), 0);
        // A failed pass still contributes its origin to the mean position.
        assert!(net.positions[0].is_some());
    }

    #[test]
    fn substitute_pass_lands_on_replaced_slot() {
        let m = record();
        let events = vec![
            sub("p9", "p15", 100.0),
            pass("p15", Some("p3"), Period::SecondHalf, 200.0),
            pass("p3", Some("p15"), Period::SecondHalf, 210.0),
        ];
        let net = build_passing_network(&events, &m, &TeamId::new("A"), Segment::Full).unwrap();
        assert_eq!(net.weights[8][2], 1);
        assert_eq!(net.weights[2][8], 1);
        assert_eq!(net.total_passes(), 2);
    }

    #[test]
    fn same_slot_pass_dropped_and_counted() {
        let m = record();
        let events = vec![
            sub("p9", "p15", 100.0),
            pass("p9", Some("p15"), Period::SecondHalf, 50.0),
        ];
        let net = build_passing_network(&events, &m, &TeamId::new("A"), Segment::Full).unwrap();
        assert_eq!(net.total_passes(), 0);
        assert_eq!(net.diagnostics.same_slot_passes, 1);
        net.validate().unwrap();
    }

    #[test]
    fn json_layout() {
        let m = record();
        let net = build_passing_network(
            &[pass("p1", Some("p2"), Period::FirstHalf, 1.0)],
            &m,
            &TeamId::new("A"),
            Segment::FirstHalf,
        )
        .unwrap();
        let v = serde_json::to_value(&net).unwrap();
        assert_eq!(v["segment"], "1H");
        assert_eq!(v["weights"][0][1], 1);
        assert_eq!(v["positions"][0]["x"], 30.0);
        assert!(v["positions"][1].is_null());
        let back: PassingNetwork = serde_json::from_value(v).unwrap();
        assert_eq!(back, net);
    }

    fn arb_events() -> impl Strategy<Value = Vec<Event>> {
        proptest::collection::vec(
            (1u8..=11, 1u8..=11, any::<bool>(), any::<bool>(), 0.0f64..2800.0),
            0..80,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(a, b, ok, h2, sec)| {
                    let period = if h2 { Period::SecondHalf } else { Period::FirstHalf };
                    let to = format!("p{b}");
                    pass(&format!("p{a}"), ok.then_some(to.as_str()), period, sec)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn halves_add_up_to_full(events in arb_events()) {
            let m = record();
            let team = TeamId::new("A");
            let [full, h1, h2] = build_all_segments(&events, &m, &team).unwrap();
            for i in 0..SLOTS {
                for j in 0..SLOTS {
                    prop_assert_eq!(full.weights[i][j], h1.weights[i][j] + h2.weights[i][j]);
                }
            }
            let completed = events.iter().filter(|e| e.success && e.player_id != *e.recipient_id.as_ref().unwrap()).count();
            prop_assert_eq!(full.total_passes() as usize, completed);
        }

        #[test]
        fn event_order_irrelevant(events in arb_events(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let m = record();
            let team = TeamId::new("A");
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = build_passing_network(&events, &m, &team, Segment::Full).unwrap();
            let b = build_passing_network(&shuffled, &m, &team, Segment::Full).unwrap();
            prop_assert_eq!(a.weights, b.weights);
            for (pa, pb) in a.positions.iter().zip(&b.positions) {
                match (pa, pb) {
                    (Some(pa), Some(pb)) => {
                        prop_assert!((pa.x - pb.x).abs() < 1e-9 && (pa.y - pb.y).abs() < 1e-9);
                    }
                    (None, None) => {}
                    _ => prop_assert!(false, "position presence differs"),
                }
            }
        }
    }
}
