//! Task rewards, proposal scorecards and range normalization.
//!
//! Optimization is scored on the pooled-imputed table and divided by the
//! pooled optimum. Planning and Mediation are range-normalized between the
//! worst and best full decisions found by the exhaustive solvers.

mod breakdown;
pub mod flights;
pub mod itinerary;
pub mod matching;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use breakdown::{
    component_sum, parse_feedback, render_feedback, round_half_away, ChecklistEntry,
    FeedbackParseError, RewardBreakdown, ScoreItem, CLOSENESS_LABEL, MEETINGS_LABEL, PRICE_LABEL,
};
pub use flights::{joint_value, score_flights, user_breakdown};
pub use itinerary::{score_itinerary, ItineraryEvaluator};
pub use matching::score_matching;

use crate::dialogue::Proposal;
use crate::solvers::{self, SolverError};
use crate::worldgen::World;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown site: {0}")]
    UnknownSite(String),
    #[error("user {user} has no flight with id {flight}")]
    UnknownFlight { user: usize, flight: usize },
    #[error("incomplete decision: {0}")]
    Incomplete(String),
    #[error("proposal does not belong to this task")]
    WrongTask,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub raw: f64,
    pub best: f64,
    pub worst: f64,
    pub normalized: f64,
}

impl NormalizedScore {
    /// `(raw - worst) / (best - worst)`.
    pub fn range(raw: f64, best: f64, worst: f64) -> Self {
        NormalizedScore {
            raw,
            best,
            worst,
            normalized: (raw - worst) / (best - worst),
        }
    }
}

/// Scores a full decision against its world.
pub fn evaluate(world: &World, proposal: &Proposal) -> Result<NormalizedScore, ScoringError> {
    match (world, proposal) {
        (World::Optimization(w), Proposal::Matching(m)) => score_matching(w, m),
        (World::Planning(w), Proposal::Itinerary(slots)) => {
            if slots.iter().any(Option::is_none) {
                return Err(ScoringError::Incomplete("itinerary has empty slots".into()));
            }
            let (raw, _) = score_itinerary(w, slots)?;
            let (best, worst) = solvers::best_worst_itinerary(w)?;
            Ok(NormalizedScore::range(raw, best.value, worst.value))
        }
        (World::Mediation(w), Proposal::Flights(slots)) => {
            let (raw, _) = score_flights(w, slots)?;
            let (best, worst) = solvers::best_worst_flightpair(w);
            Ok(NormalizedScore::range(raw, best.value, worst.value))
        }
        _ => Err(ScoringError::WrongTask),
    }
}
