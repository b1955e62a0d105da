//! Planning reward: per-site preference matches, travel penalties between
//! consecutive stops, and itinerary-wide checklist items.

use std::collections::BTreeSet;

use super::breakdown::{ChecklistEntry, RewardBreakdown, ScoreItem};
use super::ScoringError;
use crate::worldgen::planning::{format_number, PlanningWorld, PreferenceKind};

/// Precomputes per-site scores so the exhaustive solver and the scorecard
/// share one evaluation path (and therefore identical floating-point sums).
#[derive(Clone, Debug)]
pub struct ItineraryEvaluator<'a> {
    world: &'a PlanningWorld,
    site_scores: Vec<f64>,
    theta_distance: f64,
    want_to_go: Vec<(usize, BTreeSet<usize>)>,
}

impl<'a> ItineraryEvaluator<'a> {
    pub fn new(world: &'a PlanningWorld) -> Self {
        let site_scores = world
            .sites
            .iter()
            .map(|site| {
                world
                    .preferences
                    .iter()
                    .fold(0.0, |acc, p| acc + p.weight * p.site_match(site))
            })
            .collect();
        let want_to_go = world
            .preferences
            .iter()
            .enumerate()
            .filter_map(|(i, p)| match &p.kind {
                PreferenceKind::WantToGo { sites } => Some((
                    i,
                    sites.iter().filter_map(|s| world.site_index(s)).collect(),
                )),
                _ => None,
            })
            .collect();
        ItineraryEvaluator {
            world,
            site_scores,
            theta_distance: world.distance_weight(),
            want_to_go,
        }
    }

    pub fn world(&self) -> &PlanningWorld {
        self.world
    }

    pub fn site_score(&self, site: usize) -> f64 {
        self.site_scores[site]
    }

    pub fn leg_score(&self, from: usize, to: usize) -> f64 {
        -self.theta_distance * self.world.distance(from, to)
    }

    pub fn validate(&self, payload: &[Option<usize>]) -> Result<(), ScoringError> {
        if payload.len() != self.world.k {
            return Err(ScoringError::Schema(format!(
                "itinerary has {} slots, expected {}",
                payload.len(),
                self.world.k
            )));
        }
        let mut seen = BTreeSet::new();
        for (slot, site) in payload.iter().enumerate() {
            if let Some(s) = *site {
                if s >= self.world.sites.len() {
                    return Err(ScoringError::UnknownSite(format!("site id {s} in slot {}", slot + 1)));
                }
                if !seen.insert(s) {
                    return Err(ScoringError::Schema(format!(
                        "slot {}: {} appears more than once",
                        slot + 1,
                        self.world.sites[s].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Visits checklist preferences in order with `(preference index,
    /// satisfied, score)`. Allocation-free so the exhaustive solver can use it.
    fn for_each_check(&self, payload: &[Option<usize>], mut f: impl FnMut(usize, bool, f64)) {
        let chosen = || payload.iter().flatten().copied();
        let mut wtg = self.want_to_go.iter();
        for (i, pref) in self.world.preferences.iter().enumerate() {
            match &pref.kind {
                PreferenceKind::Budget { limit } => {
                    let spent: u32 = chosen().map(|s| self.world.sites[s].price).sum();
                    let ok = spent <= *limit;
                    f(i, ok, if ok { 0.0 } else { -pref.weight });
                }
                PreferenceKind::WantToGo { .. } => {
                    let targets = &wtg.next().expect("indexed in new").1;
                    let ok = chosen().any(|s| targets.contains(&s));
                    f(i, ok, if ok { pref.weight } else { -pref.weight });
                }
                PreferenceKind::AtLeastOne { category } => {
                    let ok = chosen().any(|s| self.world.sites[s].category == *category);
                    f(i, ok, if ok { pref.weight } else { -pref.weight });
                }
                PreferenceKind::Feature { .. } | PreferenceKind::Distance => {}
            }
        }
    }

    /// Checklist entries in preference order.
    pub fn checklist(&self, payload: &[Option<usize>]) -> Vec<ChecklistEntry> {
        let mut out = Vec::new();
        self.for_each_check(payload, |i, satisfied, score| {
            out.push(ChecklistEntry {
                satisfied,
                label: self.world.preferences[i].description.clone(),
                score,
            })
        });
        out
    }

    /// Slot and leg components: site, leg, site, ... (`2k - 1` entries).
    /// `None` marks an empty slot or a leg touching one.
    pub fn components(&self, payload: &[Option<usize>]) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(payload.len() * 2);
        for (i, slot) in payload.iter().enumerate() {
            if i > 0 {
                out.push(match (payload[i - 1], *slot) {
                    (Some(a), Some(b)) => Some(self.leg_score(a, b)),
                    _ => None,
                });
            }
            out.push(slot.map(|s| self.site_score(s)));
        }
        out
    }

    /// Raw reward, accumulated in scorecard order.
    pub fn total(&self, payload: &[Option<usize>]) -> f64 {
        let mut acc = 0.0;
        for (i, slot) in payload.iter().enumerate() {
            if i > 0 {
                acc += match (payload[i - 1], *slot) {
                    (Some(a), Some(b)) => self.leg_score(a, b),
                    _ => 0.0,
                };
            }
            acc += slot.map_or(0.0, |s| self.site_score(s));
        }
        self.for_each_check(payload, |_, _, score| acc += score);
        acc
    }

    pub fn breakdown(&self, payload: &[Option<usize>]) -> RewardBreakdown {
        let components = self.components(payload);
        let items = components
            .iter()
            .enumerate()
            .map(|(n, score)| {
                let Some(score) = *score else {
                    return ScoreItem {
                        label: String::new(),
                        score: None,
                        details: vec![],
                    };
                };
                if n % 2 == 0 {
                    let site = &self.world.sites[payload[n / 2].expect("scored slot")];
                    ScoreItem {
                        label: site.name.clone(),
                        score: Some(score),
                        details: site
                            .features
                            .iter()
                            .map(|(f, v)| format!("{}: {v}", f.name()))
                            .collect(),
                    }
                } else {
                    let a = payload[n / 2].expect("leg start");
                    let b = payload[n / 2 + 1].expect("leg end");
                    ScoreItem {
                        label: travel_label(self.world, a, b),
                        score: Some(score),
                        details: vec![],
                    }
                }
            })
            .collect();
        let breakdown = RewardBreakdown::new(None, items, self.checklist(payload));
        debug_assert_eq!(breakdown.total.to_bits(), self.total(payload).to_bits());
        breakdown
    }
}

/// Miles rounded to one decimal place.
pub fn display_miles(miles: f64) -> f64 {
    (miles * 10.0).round() / 10.0
}

/// `Travel from Mad Seoul to Lincoln Park, 0.8mi`
pub fn travel_label(world: &PlanningWorld, from: usize, to: usize) -> String {
    format!(
        "Travel from {} to {}, {}mi",
        world.sites[from].name,
        world.sites[to].name,
        format_number(display_miles(world.distance(from, to)))
    )
}

pub fn score_itinerary(
    world: &PlanningWorld,
    payload: &[Option<usize>],
) -> Result<(f64, RewardBreakdown), ScoringError> {
    let eval = ItineraryEvaluator::new(world);
    eval.validate(payload)?;
    let breakdown = eval.breakdown(payload);
    Ok((breakdown.total, breakdown))
}
