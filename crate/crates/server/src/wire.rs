//! Request, response and frame payloads. Field names follow the episode-log
//! vocabulary (`sender`, `recipient`, `kind`, `proposal`, `outcome`, ...).

use dialenv_core::agents::VisibleEvent;
use dialenv_core::dialogue::TurnMode;
use dialenv_core::harness::AgentSpec;
use dialenv_core::{ActionKind, AgentView, DialogueAction, GenParams, Outcome, Role, Task};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Who occupies a role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Seat {
    /// A person using the browser UI. Gets a ticket.
    Human,
    /// A model that connects over HTTP or the stream itself. Gets a ticket.
    Remote,
    /// A built-in agent run by the server (`random` or `oracle`).
    Scripted { agent: AgentSpec },
    /// An agent behind the line-delimited bridge (`tcp:HOST:PORT` or
    /// `cmd:PROGRAM ARGS`), driven by the server.
    External { address: String },
}

impl Seat {
    pub fn has_ticket(&self) -> bool {
        matches!(self, Seat::Human | Seat::Remote)
    }

    pub fn label(&self) -> String {
        match self {
            Seat::Human => "human".into(),
            Seat::Remote => "remote".into(),
            Seat::Scripted { agent } => format!("scripted:{agent}"),
            Seat::External { .. } => "external".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleWiring {
    pub role: Role,
    pub seat: Seat,
}

/// What happens to an action posted while another role holds the turn in a
/// strictly alternating session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutOfTurn {
    /// Refuse with a retriable error.
    #[default]
    Reject,
    /// Hold the action (one per role, latest wins) and submit it when the
    /// role's turn comes.
    Queue,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub task: Task,
    /// Omitted: the server picks a seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: Option<GenParams>,
    pub roles: Vec<RoleWiring>,
    #[serde(default)]
    pub action_cap: Option<usize>,
    /// Defaults to `free` when a human is seated and `strict` otherwise.
    #[serde(default)]
    pub turn_mode: Option<TurnMode>,
    #[serde(default)]
    pub out_of_turn: OutOfTurn,
    /// Include the final score in termination frames.
    #[serde(default = "yes")]
    pub disclose_final_score: bool,
}

impl CreateSession {
    pub fn new(task: Task, roles: impl IntoIterator<Item = (Role, Seat)>) -> Self {
        CreateSession {
            task,
            seed: None,
            params: None,
            roles: roles.into_iter().map(|(role, seat)| RoleWiring { role, seat }).collect(),
            action_cap: None,
            turn_mode: None,
            out_of_turn: OutOfTurn::Reject,
            disclose_final_score: true,
        }
    }
}

/// Credential for one role in one session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTicket {
    pub session_id: String,
    pub role: Role,
    pub token: String,
    pub task: Task,
    /// Unix time in milliseconds.
    pub created_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub task: Task,
    pub seed: u64,
    pub created_at: u64,
    pub tickets: Vec<SessionTicket>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub task: Task,
    pub seed: u64,
    pub created_at: u64,
    pub turn_mode: TurnMode,
    pub outcome: Outcome,
    pub actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub seats: BTreeMap<Role, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub token: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joined {
    pub session_id: String,
    pub role: Role,
    pub task: Task,
    pub seed: u64,
}

/// An action as sent by a client: either structured or as a `[kind] text`
/// line. Exactly one must be present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<DialogueAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostAction {
    pub token: String,
    #[serde(flatten)]
    pub input: ActionInput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Posted {
    Accepted { index: usize },
    Queued,
}

/// Everything one role may see right now.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleView {
    pub session_id: String,
    pub role: Role,
    pub task: Task,
    pub observation: String,
    pub view: AgentView,
    pub transcript: Vec<VisibleEvent>,
    pub legal: Vec<ActionKind>,
    pub turn: Role,
    pub turn_mode: TurnMode,
    pub outcome: Outcome,
    /// Sequence number of the newest frame for this role.
    pub last_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventFrame {
    /// Starts at 1 and has no gaps within one role's stream.
    pub seq: u64,
    /// Unix time in milliseconds.
    pub server_time: u64,
    #[serde(flatten)]
    pub body: FrameBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FrameBody {
    /// A transcript entry visible to this role.
    Event { event: VisibleEvent },
    /// A scorecard addressed to this role.
    Feedback {
        index: usize,
        proposer: Role,
        text: String,
        total: f64,
    },
    /// Whose move it is and what this role may send.
    Turn { actor: Role, legal: Vec<ActionKind> },
    Termination {
        outcome: Outcome,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalized_score: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw_score: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure: Option<String>,
    },
    Error { message: String, retriable: bool },
}
