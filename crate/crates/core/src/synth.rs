//! Seeded synthetic match corpus.
//!
//! Teams get a latent strength that drives goals, shots and passing style:
//! stronger sides pass more, complete more passes and spread them over
//! more partners, so network and statistics features carry real signal.
//! Every league plays double round-robins; substitutions (including
//! chains where a substitute is later replaced) happen in second halves.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::ingest::{order_events, Competition, Event, EventKind, MatchId, MatchRecord, Period, PlayerId, TeamId};
use crate::passnet::SLOTS;

const HALF_SECONDS: f64 = 2700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub leagues: Vec<Competition>,
    pub teams_per_league: usize,
    /// Double round-robins played per league.
    pub seasons: usize,
    /// Mean pass attempts per team per half for an average side.
    pub passes_per_half: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            leagues: Competition::DOMESTIC.to_vec(),
            teams_per_league: 10,
            seasons: 1,
            passes_per_half: 120.0,
            start_date: NaiveDate::from_ymd_opt(2017, 8, 5).expect("valid date"),
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Two leagues of five teams: 40 matches in total.
    pub fn small() -> Self {
        Self {
            leagues: vec![Competition::Ligue1, Competition::SerieA],
            teams_per_league: 5,
            seasons: 1,
            passes_per_half: 60.0,
            seed: 40,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamProfile {
    pub team_id: TeamId,
    pub league: Competition,
    pub strength: f64,
    /// Relative involvement of each slot as passer.
    pub involvement: [f64; SLOTS],
    /// Preferred partners; row i is the recipient weighting for slot i.
    pub affinity: [[f64; SLOTS]; SLOTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub matches: Vec<MatchRecord>,
    pub events: Vec<Event>,
    pub teams: Vec<TeamProfile>,
}

/// Nominal 4-4-2 positions on the [0,100]² pitch, attacking towards x=100.
const FORMATION: [(f64, f64); SLOTS] = [
    (5.0, 50.0),
    (25.0, 15.0),
    (22.0, 38.0),
    (22.0, 62.0),
    (25.0, 85.0),
    (50.0, 15.0),
    (45.0, 40.0),
    (45.0, 60.0),
    (50.0, 85.0),
    (72.0, 40.0),
    (72.0, 60.0),
];

fn team_profile<R: Rng>(rng: &mut R, team_id: TeamId, league: Competition) -> TeamProfile {
    let strength: f64 = Normal::new(0.0, 0.7).expect("valid normal").sample(rng);
    // Weaker sides concentrate their passing on a few channels.
    let sharpness = (2.2 - 0.9 * strength).clamp(0.6, 4.0);
    let mut involvement = [0.0; SLOTS];
    for (i, v) in involvement.iter_mut().enumerate() {
        let base = if i == 0 { 0.4 } else { 1.0 };
        *v = base * rng.gen_range(0.3f64..1.0).powf(sharpness);
    }
    let mut affinity = [[0.0; SLOTS]; SLOTS];
    for (i, row) in affinity.iter_mut().enumerate() {
        for (j, a) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let (xi, yi) = FORMATION[i];
            let (xj, yj) = FORMATION[j];
            let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            let near = (-dist / 30.0).exp();
            *a = near * rng.gen_range(0.05f64..1.0).powf(sharpness);
        }
    }
    TeamProfile {
        team_id,
        league,
        strength,
        involvement,
        affinity,
    }
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            return i;
        }
        t -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Circle-method double round-robin: (matchday, home index, away index).
fn double_round_robin(n: usize) -> Vec<(usize, usize, usize)> {
    let m = n + n % 2;
    let mut ring: Vec<usize> = (0..m).collect();
    let mut first = Vec::new();
    for day in 0..m - 1 {
        for k in 0..m / 2 {
            let (a, b) = (ring[k], ring[m - 1 - k]);
            if a < n && b < n {
                let (h, aw) = if (day + k) % 2 == 0 { (a, b) } else { (b, a) };
                first.push((day, h, aw));
            }
        }
        ring[1..].rotate_right(1);
    }
    let days = m - 1;
    let second: Vec<_> = first.iter().map(|&(d, h, a)| (d + days, a, h)).collect();
    first.into_iter().chain(second).collect()
}

struct MatchBuilder<'a, R: Rng> {
    rng: &'a mut R,
    match_id: MatchId,
    events: Vec<Event>,
}

impl<R: Rng> MatchBuilder<'_, R> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        team: &TeamId,
        player: &PlayerId,
        period: Period,
        second: f64,
        kind: EventKind,
        success: bool,
        pos: (f64, f64),
        recipient: Option<PlayerId>,
    ) {
        self.events.push(Event {
            match_id: self.match_id.clone(),
            team_id: team.clone(),
            player_id: player.clone(),
            period,
            second,
            kind,
            success,
            x: pos.0.clamp(0.0, 100.0),
            y: pos.1.clamp(0.0, 100.0),
            recipient_id: recipient,
            sub_out_id: None,
            sub_in_id: None,
        });
    }

    fn time(&mut self) -> f64 {
        (self.rng.gen_range(0.0..HALF_SECONDS) * 10.0).round() / 10.0
    }
}

fn player(team: &TeamId, tag: &str, i: usize) -> PlayerId {
    PlayerId::new(format!("{team}-{tag}{i:02}"))
}

/// Who occupies each slot at a given second of the second half.
struct Lineup {
    starters: Vec<PlayerId>,
    /// (second of 2H, slot, incoming player), time-ordered.
    changes: Vec<(f64, usize, PlayerId)>,
}

impl Lineup {
    fn occupant(&self, period: Period, second: f64, slot: usize) -> &PlayerId {
        let mut who = &self.starters[slot];
        if period == Period::SecondHalf {
            for (t, s, p) in &self.changes {
                if *s == slot && *t <= second {
                    who = p;
                }
            }
        }
        who
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_team<R: Rng>(
    b: &mut MatchBuilder<'_, R>,
    prof: &TeamProfile,
    lineup: &Lineup,
    home: bool,
    goals: u32,
    opp_goals: u32,
    opp_on_target: u32,
    passes_per_half: f64,
) -> u32 {
    let team = &prof.team_id;
    let s = prof.strength;
    let shift = if home { 3.0 } else { 0.0 } + 4.0 * s;
    let completion = (0.74 + 0.07 * s + if home { 0.02 } else { 0.0 }).clamp(0.5, 0.95);
    for period in [Period::FirstHalf, Period::SecondHalf] {
        let mean = (passes_per_half * (1.0 + 0.25 * s + if home { 0.05 } else { 0.0 })).max(10.0);
        let n = Poisson::new(mean).expect("positive mean").sample(b.rng) as usize;
        for _ in 0..n {
            let t = b.time();
            let from = pick(b.rng, &prof.involvement);
            let to = pick(b.rng, &prof.affinity[from]);
            let (fx, fy) = FORMATION[from];
            let pos = (fx + shift + b.rng.gen_range(-8.0..8.0), fy + b.rng.gen_range(-8.0..8.0));
            let ok = b.rng.gen_bool(completion);
            let passer = lineup.occupant(period, t, from).clone();
            let recipient = ok.then(|| lineup.occupant(period, t, to).clone());
            b.push(team, &passer, period, t, EventKind::Pass, ok, pos, recipient);
        }
    }
    // Shots: every goal is an on-target shot, plus misses and saved efforts.
    let extra = Poisson::new((7.0 + 2.5 * s).max(1.0)).expect("positive").sample(b.rng) as u32;
    let on_target = goals + (extra as f64 * 0.3).round() as u32;
    let shots = on_target + extra - (extra as f64 * 0.3).round() as u32;
    for k in 0..shots {
        let period = if b.rng.gen_bool(0.5) {
            Period::FirstHalf
        } else {
            Period::SecondHalf
        };
        let t = b.time();
        let slot = pick(b.rng, &[0.0, 0.2, 0.3, 0.3, 0.2, 0.8, 1.0, 1.0, 0.8, 2.5, 2.5]);
        let shooter = lineup.occupant(period, t, slot).clone();
        let pos = (b.rng.gen_range(75.0..99.0), b.rng.gen_range(25.0..75.0));
        b.push(team, &shooter, period, t, EventKind::Shot, k < on_target, pos, None);
        if k < goals {
            b.push(team, &shooter, period, t, EventKind::Goal, true, pos, None);
            if b.rng.gen_bool(0.7) {
                let helper = lineup.occupant(period, t, pick(b.rng, &prof.involvement)).clone();
                b.push(team, &helper, period, t, EventKind::Assist, true, pos, None);
            }
        }
    }
    // The keeper saves the opponent's on-target shots that were not goals.
    let saves = opp_on_target.saturating_sub(opp_goals);
    for _ in 0..saves {
        let period = if b.rng.gen_bool(0.5) {
            Period::FirstHalf
        } else {
            Period::SecondHalf
        };
        let t = b.time();
        let keeper = lineup.occupant(period, t, 0).clone();
        b.push(team, &keeper, period, t, EventKind::Save, true, (4.0, 50.0), None);
    }
    let fouls = Poisson::new(11.0).expect("positive").sample(b.rng) as u32;
    for _ in 0..fouls {
        let period = if b.rng.gen_bool(0.5) {
            Period::FirstHalf
        } else {
            Period::SecondHalf
        };
        let t = b.time();
        let slot = b.rng.gen_range(1..SLOTS);
        let who = lineup.occupant(period, t, slot).clone();
        let pos = (b.rng.gen_range(10.0..90.0), b.rng.gen_range(5.0..95.0));
        b.push(team, &who, period, t, EventKind::Foul, true, pos, None);
        if b.rng.gen_bool(0.17) {
            b.push(team, &who, period, t, EventKind::YellowCard, true, pos, None);
        } else if b.rng.gen_bool(0.006) {
            b.push(team, &who, period, t, EventKind::RedCard, true, pos, None);
        }
    }
    on_target
}

fn plan_substitutions<R: Rng>(
    rng: &mut R,
    team: &TeamId,
    starters: &[PlayerId],
) -> (Lineup, Vec<(f64, PlayerId, PlayerId)>) {
    let mut changes = Vec::new();
    let mut events = Vec::new();
    let n_subs = rng.gen_range(0..=3usize);
    let mut current: Vec<PlayerId> = starters.to_vec();
    let mut times: Vec<f64> = (0..n_subs).map(|_| rng.gen_range(600.0..2400.0f64).round()).collect();
    times.sort_by(f64::total_cmp);
    let mut last_slot = None;
    for (k, t) in times.into_iter().enumerate() {
        // Sometimes replace the previous substitute again (a chain).
        let slot = match last_slot {
            Some(s) if rng.gen_bool(0.25) => s,
            _ => rng.gen_range(1..SLOTS),
        };
        let incoming = player(team, "B", k);
        events.push((t, current[slot].clone(), incoming.clone()));
        current[slot] = incoming.clone();
        changes.push((t, slot, incoming));
        last_slot = Some(slot);
    }
    (
        Lineup {
            starters: starters.to_vec(),
            changes,
        },
        events,
    )
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut teams = Vec::new();
    for (li, &league) in cfg.leagues.iter().enumerate() {
        for t in 0..cfg.teams_per_league {
            let id = TeamId::new(format!("L{}T{:02}", li + 1, t + 1));
            teams.push(team_profile(&mut rng, id, league));
        }
    }
    let schedule = double_round_robin(cfg.teams_per_league);
    let days_per_season = schedule.iter().map(|s| s.0).max().map_or(0, |d| d + 1);
    let mut fixtures = Vec::new();
    for season in 0..cfg.seasons {
        for (li, _) in cfg.leagues.iter().enumerate() {
            for &(day, h, a) in &schedule {
                let day = season * days_per_season + day;
                fixtures.push((day, li, h, a));
            }
        }
    }
    fixtures.sort_unstable();

    let mut matches = Vec::new();
    let mut events = Vec::new();
    for (n, &(day, li, h, a)) in fixtures.iter().enumerate() {
        let home = &teams[li * cfg.teams_per_league + h];
        let away = &teams[li * cfg.teams_per_league + a];
        let match_id = MatchId::new(format!("M{:05}", n + 1));
        let date = cfg.start_date + Days::new(7 * day as u64);
        let diff = home.strength - away.strength;
        let hg = Poisson::new((0.30 + 0.45 * diff).exp())
            .expect("positive")
            .sample(&mut rng) as u32;
        let ag = Poisson::new((0.02 - 0.45 * diff).exp())
            .expect("positive")
            .sample(&mut rng) as u32;
        let home_starters: Vec<PlayerId> = (0..SLOTS).map(|i| player(&home.team_id, "P", i)).collect();
        let away_starters: Vec<PlayerId> = (0..SLOTS).map(|i| player(&away.team_id, "P", i)).collect();
        let (home_lineup, home_subs) = plan_substitutions(&mut rng, &home.team_id, &home_starters);
        let (away_lineup, away_subs) = plan_substitutions(&mut rng, &away.team_id, &away_starters);

        let mut b = MatchBuilder {
            rng: &mut rng,
            match_id: match_id.clone(),
            events: Vec::new(),
        };
        // The away side shoots first so the home keeper knows what to save;
        // away saves follow once the home shots exist.
        let away_ot = simulate_team(&mut b, away, &away_lineup, false, ag, hg, 0, cfg.passes_per_half);
        let home_ot = simulate_team(&mut b, home, &home_lineup, true, hg, ag, away_ot, cfg.passes_per_half);
        for _ in 0..home_ot.saturating_sub(hg) {
            let period = if b.rng.gen_bool(0.5) {
                Period::FirstHalf
            } else {
                Period::SecondHalf
            };
            let t = b.time();
            let keeper = away_lineup.occupant(period, t, 0).clone();
            b.push(
                &away.team_id,
                &keeper,
                period,
                t,
                EventKind::Save,
                true,
                (4.0, 50.0),
                None,
            );
        }
        for (team, subs) in [(&home.team_id, home_subs), (&away.team_id, away_subs)] {
            for (t, out, inn) in subs {
                b.events.push(Event {
                    match_id: match_id.clone(),
                    team_id: team.clone(),
                    player_id: out.clone(),
                    period: Period::SecondHalf,
                    second: t,
                    kind: EventKind::Substitution,
                    success: true,
                    x: 50.0,
                    y: 0.0,
                    recipient_id: None,
                    sub_out_id: Some(out),
                    sub_in_id: Some(inn),
                });
            }
        }
        events.extend(b.events);
        matches.push(MatchRecord {
            match_id,
            competition: cfg.leagues[li],
            date,
            home_team_id: home.team_id.clone(),
            away_team_id: away.team_id.clone(),
            home_goals: hg,
            away_goals: ag,
            home_starters,
            away_starters,
        });
    }
    SynthCorpus {
        matches,
        events: order_events(events),
        teams,
    }
}
