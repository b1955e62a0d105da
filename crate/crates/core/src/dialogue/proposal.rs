//! Structured proposals and their canonical text forms.
//!
//! - Optimization: `Proposal:` followed by one `<paper>: <reviewer>` line per
//!   paper. The parser also accepts `<br/>` separators, `&emsp;` padding and
//!   leading dashes.
//! - Planning: `[Mad Seoul, NULL, NULL]`.
//! - Mediation: `user 0: id 11, user 1: id 10` (either half may be missing
//!   when the proposal is addressed to one user).

use serde::{Deserialize, Serialize};

use crate::worldgen::World;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "slots", rename_all = "lowercase")]
pub enum Proposal {
    /// `slots[paper] = reviewer`.
    Matching(Vec<usize>),
    /// Site index per itinerary slot.
    Itinerary(Vec<Option<usize>>),
    /// Flight id per user.
    Flights(Vec<Option<usize>>),
}

impl Proposal {
    /// True when accepting this proposal can end the game.
    pub fn is_full(&self) -> bool {
        match self {
            Proposal::Matching(_) => true,
            Proposal::Itinerary(slots) | Proposal::Flights(slots) => slots.iter().all(Option::is_some),
        }
    }
}

/// A schema violation naming the offending slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn schema(msg: impl Into<String>) -> SchemaError {
    SchemaError(msg.into())
}

/// Checks a proposal against the world it is meant for.
pub fn validate(world: &World, proposal: &Proposal) -> Result<(), SchemaError> {
    match (world, proposal) {
        (World::Optimization(w), Proposal::Matching(slots)) => {
            crate::scoring::matching::check_matching(w, slots).map_err(|e| schema(strip_prefix(e)))
        }
        (World::Planning(w), Proposal::Itinerary(slots)) => {
            crate::scoring::ItineraryEvaluator::new(w)
                .validate(slots)
                .map_err(|e| schema(strip_prefix(e)))
        }
        (World::Mediation(w), Proposal::Flights(slots)) => {
            if slots.len() != 2 {
                return Err(schema(format!("expected a flight slot for each of 2 users, got {}", slots.len())));
            }
            if slots.iter().all(Option::is_none) {
                return Err(schema("proposal names no flight for any user"));
            }
            for (user, slot) in slots.iter().enumerate() {
                if let Some(id) = *slot {
                    if id >= w.users[user].flights.len() {
                        return Err(schema(format!("user {user}: no flight with id {id}")));
                    }
                }
            }
            Ok(())
        }
        _ => Err(schema(format!("proposal does not fit the {} task", world.task()))),
    }
}

fn strip_prefix(e: crate::scoring::ScoringError) -> String {
    let s = e.to_string();
    s.strip_prefix("schema error: ").map(str::to_string).unwrap_or(s)
}

/// Canonical text for a proposal.
pub fn render_proposal(world: &World, proposal: &Proposal) -> String {
    match (world, proposal) {
        (World::Optimization(w), Proposal::Matching(slots)) => {
            let mut lines: Vec<(String, String)> = slots
                .iter()
                .enumerate()
                .map(|(paper, &r)| {
                    let reviewer = w.reviewers.get(r).cloned().unwrap_or_else(|| format!("#{r}"));
                    (w.paper_short(paper).to_string(), reviewer)
                })
                .collect();
            lines.sort_by_key(|(p, _)| p.to_lowercase());
            let mut out = String::from("Proposal:");
            for (p, r) in lines {
                out.push_str(&format!("\n - {p}: {r}"));
            }
            out
        }
        (World::Planning(w), Proposal::Itinerary(slots)) => {
            let names: Vec<String> = slots
                .iter()
                .map(|s| match s {
                    Some(i) => w.sites.get(*i).map_or_else(|| format!("#{i}"), |s| s.name.clone()),
                    None => "NULL".into(),
                })
                .collect();
            format!("[{}]", names.join(", "))
        }
        (World::Mediation(_), Proposal::Flights(slots)) => slots
            .iter()
            .enumerate()
            .filter_map(|(u, s)| s.map(|id| format!("user {u}: id {id}")))
            .collect::<Vec<_>>()
            .join(", "),
        _ => format!("{proposal:?}"),
    }
}

/// Parses proposal text for the world's task. Errors name the slot that
/// could not be understood.
pub fn parse_proposal(world: &World, text: &str) -> Result<Proposal, SchemaError> {
    let text = text.trim();
    let text = text.strip_prefix("[propose]").unwrap_or(text).trim();
    match world {
        World::Optimization(w) => {
            let body = text.strip_prefix("Proposal:").unwrap_or(text);
            let normalized = body.replace("<br/>", "\n").replace("<br>", "\n").replace("&emsp;", " ");
            let mut slots: Vec<Option<usize>> = vec![None; w.k];
            for line in normalized.lines() {
                let line = line.trim().trim_start_matches('-').trim();
                if line.is_empty() {
                    continue;
                }
                let (paper, reviewer) = line
                    .rsplit_once(':')
                    .ok_or_else(|| schema(format!("cannot read assignment line '{line}'")))?;
                let p = w
                    .paper_index(paper)
                    .ok_or_else(|| schema(format!("unknown paper '{}'", paper.trim())))?;
                let r = w
                    .reviewer_index(reviewer)
                    .ok_or_else(|| schema(format!("{}: unknown reviewer '{}'", w.paper_short(p), reviewer.trim())))?;
                if slots[p].is_some() {
                    return Err(schema(format!("{}: assigned more than once", w.paper_short(p))));
                }
                slots[p] = Some(r);
            }
            let mut out = Vec::with_capacity(w.k);
            for (p, s) in slots.into_iter().enumerate() {
                out.push(s.ok_or_else(|| schema(format!("{}: no reviewer assigned", w.paper_short(p))))?);
            }
            Ok(Proposal::Matching(out))
        }
        World::Planning(w) => {
            let inner = text
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| schema("itinerary must look like [Site A, Site B, NULL]"))?;
            let slots = inner
                .split(',')
                .enumerate()
                .map(|(i, name)| {
                    let name = name.trim();
                    if name.eq_ignore_ascii_case("null") || name.is_empty() {
                        Ok(None)
                    } else {
                        w.site_index(name)
                            .map(Some)
                            .ok_or_else(|| schema(format!("slot {}: unknown site '{name}'", i + 1)))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            if slots.len() != w.k {
                return Err(schema(format!("itinerary has {} slots, expected {}", slots.len(), w.k)));
            }
            Ok(Proposal::Itinerary(slots))
        }
        World::Mediation(_) => {
            let mut slots = vec![None, None];
            for part in text.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let err = || schema(format!("cannot read flight assignment '{part}'"));
                let (who, id) = part.split_once(':').ok_or_else(err)?;
                let user: usize = who
                    .trim()
                    .strip_prefix("user")
                    .and_then(|u| u.trim().parse().ok())
                    .ok_or_else(err)?;
                if user > 1 {
                    return Err(schema(format!("user {user}: there are only users 0 and 1")));
                }
                let id: usize = id
                    .trim()
                    .strip_prefix("id")
                    .and_then(|i| i.trim().parse().ok())
                    .ok_or_else(|| schema(format!("user {user}: cannot read flight id '{}'", id.trim())))?;
                if slots[user].is_some() {
                    return Err(schema(format!("user {user}: assigned more than once")));
                }
                slots[user] = Some(id);
            }
            Ok(Proposal::Flights(slots))
        }
    }
}
