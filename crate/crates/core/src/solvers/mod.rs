//! Exact decision oracles: optimal matchings, best and worst itineraries and
//! flight pairs. Ties are broken toward the lexicographically smallest
//! decision so that every run picks the same optimum.

mod matching;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matching::{
    best_matching, best_matching_exhaustive, impute_pooled, impute_solo, matching_value,
    next_permutation, pooled_best, solo_plan, solo_plan_value, ImputedTable, Provenance,
};

use crate::scoring::flights::joint_value;
use crate::scoring::ItineraryEvaluator;
use crate::worldgen::{MediationWorld, PlanningWorld};

/// Largest itinerary length the exhaustive search accepts.
pub const MAX_EXHAUSTIVE_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("table is not square: {rows} rows but row {row} has {len} entries")]
    NotSquare { rows: usize, row: usize, len: usize },
    #[error("table contains a non-finite value")]
    NonFinite,
    #[error("exhaustive itinerary search supports k <= {max}, got k = {k}")]
    TooLarge { k: usize, max: usize },
    #[error("itinerary length k = {k} exceeds the {sites} available sites")]
    NotEnoughSites { k: usize, sites: usize },
}

/// A decision together with its objective value. The value is always
/// computed from the decision by the evaluator passed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionValue<D> {
    pub decision: D,
    pub value: f64,
}

impl<D> DecisionValue<D> {
    pub fn evaluated(decision: D, eval: impl FnOnce(&D) -> f64) -> Self {
        let value = eval(&decision);
        DecisionValue { decision, value }
    }

    /// True when `eval` reproduces the stored value within 1e-9.
    pub fn verify(&self, eval: impl FnOnce(&D) -> f64) -> bool {
        (eval(&self.decision) - self.value).abs() <= 1e-9
    }
}

/// Best and worst ordered itineraries of `k` distinct sites, by exhaustive
/// lexicographic enumeration.
pub fn best_worst_itinerary(
    world: &PlanningWorld,
) -> Result<(DecisionValue<Vec<usize>>, DecisionValue<Vec<usize>>), SolverError> {
    let k = world.k;
    let n = world.sites.len();
    if k > MAX_EXHAUSTIVE_K {
        return Err(SolverError::TooLarge {
            k,
            max: MAX_EXHAUSTIVE_K,
        });
    }
    if k > n || k == 0 {
        return Err(SolverError::NotEnoughSites { k, sites: n });
    }
    let eval = ItineraryEvaluator::new(world);
    let mut slots: Vec<Option<usize>> = vec![None; k];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut worst: Option<(Vec<usize>, f64)> = None;

    fn visit(
        depth: usize,
        n: usize,
        slots: &mut Vec<Option<usize>>,
        eval: &ItineraryEvaluator,
        best: &mut Option<(Vec<usize>, f64)>,
        worst: &mut Option<(Vec<usize>, f64)>,
    ) {
        if depth == slots.len() {
            let value = eval.total(slots);
            if best.as_ref().is_none_or(|(_, b)| value > *b) {
                *best = Some((slots.iter().flatten().copied().collect(), value));
            }
            if worst.as_ref().is_none_or(|(_, w)| value < *w) {
                *worst = Some((slots.iter().flatten().copied().collect(), value));
            }
            return;
        }
        for site in 0..n {
            if slots[..depth].contains(&Some(site)) {
                continue;
            }
            slots[depth] = Some(site);
            visit(depth + 1, n, slots, eval, best, worst);
        }
        slots[depth] = None;
    }
    visit(0, n, &mut slots, &eval, &mut best, &mut worst);

    let full = |d: &Vec<usize>| eval.total(&d.iter().map(|&s| Some(s)).collect::<Vec<_>>());
    let (b, _) = best.expect("at least one itinerary");
    let (w, _) = worst.expect("at least one itinerary");
    Ok((DecisionValue::evaluated(b, full), DecisionValue::evaluated(w, full)))
}

/// Best and worst `(user 0 flight, user 1 flight)` pairs over all F x F
/// assignments.
pub fn best_worst_flightpair(
    world: &MediationWorld,
) -> (DecisionValue<[usize; 2]>, DecisionValue<[usize; 2]>) {
    let n0 = world.users[0].flights.len();
    let n1 = world.users[1].flights.len();
    let mut best = ([0, 0], f64::NEG_INFINITY);
    let mut worst = ([0, 0], f64::INFINITY);
    for f0 in 0..n0 {
        for f1 in 0..n1 {
            let value = joint_value(world, f0, f1);
            if value > best.1 {
                best = ([f0, f1], value);
            }
            if value < worst.1 {
                worst = ([f0, f1], value);
            }
        }
    }
    let eval = |d: &[usize; 2]| joint_value(world, d[0], d[1]);
    (
        DecisionValue::evaluated(best.0, eval),
        DecisionValue::evaluated(worst.0, eval),
    )
}
