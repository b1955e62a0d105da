//! Decision-oriented dialogue environments.
//!
//! Three cooperative tasks share one dialogue protocol:
//!
//! - **Optimization**: two players with partial, differently scaled views of a
//!   reviewer/paper affinity table agree on a one-to-one assignment.
//! - **Planning**: an assistant with a site database builds a k-stop itinerary
//!   for a user who only knows natural-language descriptions of their
//!   preferences.
//! - **Mediation**: an assistant books one flight for each of two users,
//!   trading off missed meetings, price and arrival closeness.
//!
//! Worlds are procedurally generated from a seed ([`worldgen`]), rewards are
//! computed exactly and range-normalized against solver optima ([`solvers`],
//! [`scoring`]), and dialogues run through a strict state machine
//! ([`dialogue`]) driven by scripted or external agents ([`agents`]) inside the
//! batch evaluation [`harness`].

pub mod agents;
pub mod dialogue;
pub mod harness;
pub mod query;
pub mod scoring;
pub mod solvers;
pub mod task;
pub mod worldgen;

pub use dialogue::{
    legal_actions, submit_action, turn_policy, word_count, ActionKind, DialogueAction,
    DialogueError, EpisodeLog, Outcome, Proposal, SessionConfig, SessionState, Transition,
};
pub use task::{GenParams, Role, Task};
pub use worldgen::{generate, AgentView, World, WorldFile};
