//! Independent reference implementations shared by the integration tests.
//! Written from the task definitions, not from the library code.

#![allow(dead_code)]

use dialenv_core::worldgen::planning::{FeatureValue, FeatureWant, PreferenceKind};
use dialenv_core::worldgen::{MediationWorld, OptimizationWorld, PlanningWorld};
use dialenv_core::{generate, GenParams, World};

pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == p.len() {
            out.push(p.clone());
            return;
        }
        for j in i..p.len() {
            p.swap(i, j);
            rec(i + 1, p, out);
            p.swap(i, j);
        }
    }
    let mut out = Vec::new();
    rec(0, &mut (0..n).collect(), &mut out);
    out
}

/// `table[row][perm[row]]` summed.
pub fn perm_value(table: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(r, &c)| table[r][c]).sum()
}

/// Lexicographically smallest permutation within tolerance of the maximum.
pub fn lex_best(table: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let all: Vec<(Vec<usize>, f64)> = all_permutations(table.len())
        .into_iter()
        .map(|p| {
            let v = perm_value(table, &p);
            (p, v)
        })
        .collect();
    let max = all.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-9 * (1.0 + max.abs());
    all.into_iter()
        .filter(|(_, v)| *v >= max - eps)
        .min_by(|a, b| a.0.cmp(&b.0))
        .unwrap()
}

/// `[paper][reviewer]` table of what the given players know, 50 elsewhere.
pub fn known_table(w: &OptimizationWorld, sees: [bool; 2]) -> Vec<Vec<f64>> {
    (0..w.k)
        .map(|p| {
            (0..w.k)
                .map(|r| {
                    let seen = (sees[0] && w.masks[0][r][p]) || (sees[1] && w.masks[1][r][p]);
                    if seen {
                        w.table[r][p]
                    } else {
                        50.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Best pooled value over solo-plan value, maximised over the two players.
pub fn pooled_ratio_oracle(w: &OptimizationWorld) -> f64 {
    let pooled = known_table(w, [true, true]);
    let (_, best) = lex_best(&pooled);
    let solo = (0..2)
        .map(|p| perm_value(&pooled, &lex_best(&known_table(w, [p == 0, p == 1])).0))
        .fold(f64::NEG_INFINITY, f64::max);
    best / solo
}

/// Planning reward of a full itinerary recomputed from the preferences.
pub fn itinerary_oracle(w: &PlanningWorld, plan: &[usize]) -> f64 {
    let mut total = 0.0;
    for &s in plan {
        let site = &w.sites[s];
        for p in &w.preferences {
            if let PreferenceKind::Feature { feature, want } = &p.kind {
                let sign = match (want, site.features.get(feature)) {
                    (FeatureWant::Is(b), Some(FeatureValue::Bool(v))) => {
                        if b == v {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    (FeatureWant::OneOf(o), Some(FeatureValue::Text(v))) => {
                        if o.iter().any(|x| x.eq_ignore_ascii_case(v)) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    (FeatureWant::AtLeast(m), Some(FeatureValue::Rating(r))) => {
                        if r >= m {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    _ => 0.0,
                };
                total += sign * p.weight;
            }
        }
    }
    let theta_d = w
        .preferences
        .iter()
        .find(|p| matches!(p.kind, PreferenceKind::Distance))
        .map_or(0.0, |p| p.weight);
    for pair in plan.windows(2) {
        let [ax, ay] = w.sites[pair[0]].location;
        let [bx, by] = w.sites[pair[1]].location;
        total -= theta_d * (ax - bx).hypot(ay - by) * w.miles_per_unit;
    }
    for p in &w.preferences {
        match &p.kind {
            PreferenceKind::Budget { limit } => {
                let spent: u32 = plan.iter().map(|&s| w.sites[s].price).sum();
                if spent > *limit {
                    total -= p.weight;
                }
            }
            PreferenceKind::WantToGo { sites } => {
                let hit = plan.iter().any(|&s| sites.contains(&w.sites[s].name));
                total += if hit { p.weight } else { -p.weight };
            }
            PreferenceKind::AtLeastOne { category } => {
                let hit = plan.iter().any(|&s| w.sites[s].category == *category);
                total += if hit { p.weight } else { -p.weight };
            }
            _ => {}
        }
    }
    total
}

/// Mediation joint reward recomputed from the world definition.
pub fn flights_oracle(w: &MediationWorld, f: [usize; 2]) -> f64 {
    let mut total = 0.0;
    for (i, u) in w.users.iter().enumerate() {
        let fl = &u.flights[f[i]];
        for e in u.private_events.iter().chain(&u.shared_events) {
            if e.start < fl.arrive && fl.depart < e.end {
                total -= e.importance as f64;
            }
        }
        total += w.theta_price * (u.price_mu - fl.price as f64) / u.price_mu;
    }
    let a0 = w.users[0].flights[f[0]].arrive as f64;
    let a1 = w.users[1].flights[f[1]].arrive as f64;
    total - w.theta_arrival * (a0 - a1).abs() / 60.0
}

/// Every joint value over the F x F assignments.
pub fn all_flight_pairs(w: &MediationWorld) -> Vec<([usize; 2], f64)> {
    let mut out = Vec::new();
    for a in 0..w.users[0].flights.len() {
        for b in 0..w.users[1].flights.len() {
            out.push(([a, b], flights_oracle(w, [a, b])));
        }
    }
    out
}

/// Kolmogorov-Smirnov statistic against Uniform[lo, hi].
pub fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the one-sample KS statistic at alpha = 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

pub fn optimization_world(seed: u64) -> Result<OptimizationWorld, dialenv_core::worldgen::GenError> {
    match generate(&dialenv_core::Task::Optimization.default_params(), seed)? {
        World::Optimization(w) => Ok(w),
        _ => unreachable!(),
    }
}

pub fn planning_world(seed: u64, k: usize) -> PlanningWorld {
    match generate(&GenParams::Planning { k, s: 10 }, seed).unwrap() {
        World::Planning(w) => w,
        _ => unreachable!(),
    }
}

pub fn mediation_world(seed: u64) -> MediationWorld {
    match generate(&dialenv_core::Task::Mediation.default_params(), seed).unwrap() {
        World::Mediation(w) => w,
        _ => unreachable!(),
    }
}

/// First world at or after `seed` that generates (Optimization generation
/// can exhaust its rejection budget on a few seeds).
pub fn world_near(task: dialenv_core::Task, seed: u64) -> (u64, World) {
    let params = task.default_params();
    (seed..)
        .find_map(|s| generate(&params, s).ok().map(|w| (s, w)))
        .expect("some seed generates")
}

/// A random, often illegal, action for `task`. Proposals include repeated
/// and out-of-range entries.
pub fn random_action(
    rng: &mut rand_chacha::ChaCha8Rng,
    task: dialenv_core::Task,
    world: &World,
    sender: dialenv_core::Role,
) -> dialenv_core::DialogueAction {
    use dialenv_core::dialogue::{DialogueAction, Proposal};
    use rand::seq::IndexedRandom;
    use rand::Rng;
    const WORDS: [&str; 8] = ["hi", "I", "think", "the", "museum", "is", "nice", "ok?"];
    let text: String = (0..rng.random_range(0..6))
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(if rng.random_bool(0.2) { "  \n" } else { " " });
    let proposal = |rng: &mut rand_chacha::ChaCha8Rng| match world {
        World::Optimization(w) => {
            let mut p: Vec<usize> = (0..w.k).collect();
            p.shuffle(rng);
            if rng.random_bool(0.3) {
                let i = rng.random_range(0..w.k);
                p[i] = rng.random_range(0..w.k + 1);
            }
            Proposal::Matching(p)
        }
        World::Planning(w) => Proposal::Itinerary(
            (0..w.k)
                .map(|_| rng.random_bool(0.8).then(|| rng.random_range(0..w.sites.len().min(6))))
                .collect(),
        ),
        World::Mediation(_) => Proposal::Flights(
            (0..2)
                .map(|_| rng.random_bool(0.7).then(|| rng.random_range(0..31)))
                .collect(),
        ),
    };
    let mut action = match rng.random_range(0..10) {
        0..=2 => DialogueAction::message(sender, text),
        3 => DialogueAction::think(sender, text),
        4..=5 => DialogueAction::propose(sender, proposal(rng)),
        6..=7 => DialogueAction::accept(sender),
        _ => DialogueAction::reject(sender),
    };
    if rng.random_bool(0.5) {
        let roster = task.roster();
        action = action.to(roster[rng.random_range(0..roster.len())]);
    }
    action
}

use rand::seq::SliceRandom;

/// Drives a session with random actions from random senders. Returns every
/// state reached (starting with the fresh one) and the number of refused
/// actions.
pub fn fuzz_session(
    task: dialenv_core::Task,
    world: &World,
    seed: u64,
    attempts: usize,
    turn_mode: dialenv_core::dialogue::TurnMode,
) -> (Vec<dialenv_core::SessionState>, usize) {
    use dialenv_core::dialogue::{submit_action_from, Origin, SessionConfig, SessionState};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xF022);
    let mut config = SessionConfig::for_task(task);
    config.turn_mode = turn_mode;
    let mut states = vec![SessionState::new(task, seed, config)];
    let mut refused = 0;
    for _ in 0..attempts {
        let state = states.last().unwrap();
        let roster = task.roster();
        // Mostly the actor whose turn it is, sometimes anyone.
        let sender = if rng.random_bool(0.8) {
            dialenv_core::turn_policy(state)
        } else {
            roster[rng.random_range(0..roster.len())]
        };
        let action = random_action(&mut rng, task, world, sender);
        match submit_action_from(state, world, action, Origin::Scripted) {
            Ok(t) => states.push(t.state),
            Err(_) => refused += 1,
        }
    }
    (states, refused)
}

/// Every object key anywhere in a JSON value.
pub fn json_keys(v: &serde_json::Value, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                out.push(k.clone());
                json_keys(x, out);
            }
        }
        serde_json::Value::Array(xs) => xs.iter().for_each(|x| json_keys(x, out)),
        _ => {}
    }
}

/// Describes the first hidden field found in a payload meant for `role`.
/// Checks key names (preference weights, price weights, raw tables and
/// masks, importances for the Mediation assistant, other users' private
/// calendars) and, for Optimization, that unobserved cells stay empty.
pub fn leak_in(world: &World, role: dialenv_core::Role, payload: &serde_json::Value) -> Option<String> {
    use dialenv_core::Role;
    let mut keys = Vec::new();
    json_keys(payload, &mut keys);
    let mut forbidden = vec!["theta_price", "theta_arrival", "weight", "weights", "price_mu", "table", "masks", "private_events"];
    if role == Role::Assistant {
        forbidden.extend(["importance", "private_calendar", "preferences"]);
    }
    if let Some(k) = keys.iter().find(|k| forbidden.contains(&k.as_str())) {
        return Some(format!("key '{k}' sent to {role}"));
    }
    if let (World::Optimization(w), Some(player)) = (world, role.user_index()) {
        let mut found = None;
        scan_cells(payload, &mut |cells: &Vec<serde_json::Value>| {
            for (r, row) in cells.iter().enumerate() {
                for (p, c) in row.as_array().into_iter().flatten().enumerate() {
                    if !c.is_null() && !w.masks[player][r][p] {
                        found = Some(format!("hidden cell ({r},{p}) sent to {role}"));
                    }
                }
            }
        });
        return found;
    }
    None
}

fn scan_cells(v: &serde_json::Value, f: &mut dyn FnMut(&Vec<serde_json::Value>)) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                match (k.as_str(), x) {
                    ("cells", serde_json::Value::Array(rows)) => f(rows),
                    _ => scan_cells(x, f),
                }
            }
        }
        serde_json::Value::Array(xs) => xs.iter().for_each(|x| scan_cells(x, f)),
        _ => {}
    }
}
