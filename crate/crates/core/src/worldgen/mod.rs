//! Seeded procedural generation of worlds and per-role views.
//!
//! A [`World`] holds the complete hidden state of one episode. Agents only
//! ever receive an [`AgentView`], which is derived from the world by the
//! visibility rule of their role.

pub mod mediation;
pub mod optimization;
pub mod planning;
mod render;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mediation::{CalendarEvent, Flight, MediationUser, MediationWorld};
pub use optimization::OptimizationWorld;
pub use planning::{Category, Feature, FeatureValue, PlanningWorld, Preference, Site};
pub use render::render_observation;

use crate::solvers;
use crate::task::{GenParams, Role, Task};

/// Regeneration attempts for Planning and Mediation worlds whose best and
/// worst decisions tie.
const DEGENERATE_RETRIES: u32 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("seed {seed}: no world met the pooled-knowledge criterion in {draws} draws")]
    RejectionBudget { seed: u64, draws: u32 },
    #[error("seed {seed}: every candidate world had best == worst")]
    Degenerate { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum World {
    Optimization(OptimizationWorld),
    Planning(PlanningWorld),
    Mediation(MediationWorld),
}

impl World {
    pub fn task(&self) -> Task {
        match self {
            World::Optimization(_) => Task::Optimization,
            World::Planning(_) => Task::Planning,
            World::Mediation(_) => Task::Mediation,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("world serializes");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn view(&self, role: Role) -> Option<AgentView> {
        AgentView::of(self, role)
    }
}

/// Generates the world for `params` from `seed`. Pure: the same inputs always
/// give the same world.
pub fn generate(params: &GenParams, seed: u64) -> Result<World, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *params {
        GenParams::Optimization { k, p_observed } => {
            optimization::generate(&mut rng, seed, k, p_observed).map(World::Optimization)
        }
        GenParams::Planning { k, s } => {
            for _ in 0..DEGENERATE_RETRIES {
                let world = planning::generate(&mut rng, k, s)?;
                let (best, worst) = solvers::best_worst_itinerary(&world)
                    .map_err(|e| GenError::InvalidParams(e.to_string()))?;
                if best.value > worst.value {
                    return Ok(World::Planning(world));
                }
            }
            Err(GenError::Degenerate { seed })
        }
        GenParams::Mediation {
            p_event,
            f_shared,
            flights,
        } => {
            for _ in 0..DEGENERATE_RETRIES {
                let world = mediation::generate(&mut rng, p_event, f_shared, flights)?;
                let (best, worst) = solvers::best_worst_flightpair(&world);
                if best.value > worst.value {
                    return Ok(World::Mediation(world));
                }
            }
            Err(GenError::Degenerate { seed })
        }
    }
}

/// A self-describing world document: everything needed to score decisions
/// without regenerating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    pub format: String,
    pub task: Task,
    pub seed: u64,
    pub params: GenParams,
    pub world: World,
}

impl WorldFile {
    pub const FORMAT: &'static str = "dialenv-world/1";

    pub fn generate(params: GenParams, seed: u64) -> Result<WorldFile, GenError> {
        let world = generate(&params, seed)?;
        Ok(WorldFile {
            format: Self::FORMAT.to_string(),
            task: params.task(),
            seed,
            params,
            world,
        })
    }
}

/// A site as the Planning assistant sees it. Identical to [`Site`]; kept as a
/// separate name so the view schema is explicit.
pub type SiteView = Site;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightListView {
    pub flights: Vec<Flight>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventView {
    pub id: usize,
    pub start: u32,
    pub end: u32,
    /// Present only in a user's view of their own calendar.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub importance: Option<u32>,
    pub times: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssistantUserView {
    pub flights: Vec<Flight>,
    pub calendar: Vec<EventView>,
}

/// One role's partial observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "kebab-case")]
pub enum AgentView {
    Optimization {
        player: usize,
        reviewers: Vec<String>,
        papers: Vec<String>,
        /// Scaled, rounded values indexed `[reviewer][paper]`; `None` when
        /// the cell is hidden from this player.
        cells: Vec<Vec<Option<u64>>>,
    },
    PlanningUser {
        k: usize,
        preferences: Vec<String>,
    },
    PlanningAssistant {
        k: usize,
        sites: Vec<SiteView>,
    },
    MediationUser {
        user: usize,
        flights: Vec<Flight>,
        private_calendar: Vec<EventView>,
        shared_calendar: Vec<EventView>,
    },
    MediationAssistant {
        users: Vec<AssistantUserView>,
    },
}

fn event_views(events: &[CalendarEvent], with_importance: bool) -> Vec<EventView> {
    events
        .iter()
        .enumerate()
        .map(|(id, e)| EventView {
            id,
            start: e.start,
            end: e.end,
            importance: with_importance.then_some(e.importance),
            times: e.times(),
        })
        .collect()
}

impl AgentView {
    /// `None` when `role` does not take part in the world's task.
    pub fn of(world: &World, role: Role) -> Option<AgentView> {
        if !world.task().roster().contains(&role) {
            return None;
        }
        Some(match world {
            World::Optimization(w) => {
                let player = role.user_index()?;
                AgentView::Optimization {
                    player,
                    reviewers: w.reviewers.clone(),
                    papers: w.papers.clone(),
                    cells: (0..w.k)
                        .map(|r| (0..w.k).map(|p| w.displayed(player, r, p)).collect())
                        .collect(),
                }
            }
            World::Planning(w) => match role {
                Role::User => AgentView::PlanningUser {
                    k: w.k,
                    preferences: w.preferences.iter().map(|p| p.description.clone()).collect(),
                },
                _ => AgentView::PlanningAssistant {
                    k: w.k,
                    sites: w.sites.clone(),
                },
            },
            World::Mediation(w) => match role.user_index() {
                Some(i) => AgentView::MediationUser {
                    user: i,
                    flights: w.users[i].flights.clone(),
                    private_calendar: event_views(&w.users[i].private_events, true),
                    shared_calendar: event_views(&w.users[i].shared_events, true),
                },
                None => AgentView::MediationAssistant {
                    users: w
                        .users
                        .iter()
                        .map(|u| AssistantUserView {
                            flights: u.flights.clone(),
                            calendar: event_views(&u.shared_events, false),
                        })
                        .collect(),
                },
            },
        })
    }
}
