//! Agents and the request/reply loop that drives them.
//!
//! Every turn the harness builds an [`ActionRequest`] for the acting role. It
//! holds only what that role may see: its [`AgentView`], the rendered
//! observation text and the transcript entries visible to it. The agent
//! answers with an [`AgentReply`]. [`request_action`] checks the reply
//! against the dialogue rules and re-asks with the error text attached until
//! the retry budget runs out.
//!
//! The Planning assistant may also reply with a `Search(...)` query. The
//! result is attached to the next request. Queries do not use up retries.

mod bridge;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bridge::{ExternalAgent, WireReply, BRIDGE_TIMEOUT_ENV, DEFAULT_BRIDGE_TIMEOUT_MS};
pub use scripted::{OracleAgent, RandomAgent, ScriptedAgent};

use crate::dialogue::{
    legal_actions, submit_action_from, ActionKind, DialogueAction, DialogueError, Origin, Proposal, SessionState,
    Transition,
};
use crate::query::run_query;
use crate::task::{Role, Task};
use crate::worldgen::{render_observation, AgentView, World};

/// Attempts per turn when no other budget is configured.
pub const DEFAULT_RETRY_BUDGET: usize = 3;
/// Search calls allowed within a single turn.
pub const QUERY_BUDGET: usize = 20;

/// A transcript entry as one role sees it. Scorecards addressed to other
/// roles are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibleEvent {
    pub index: usize,
    pub sender: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<Role>,
    pub kind: ActionKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<Proposal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub query: String,
    pub result: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub session_id: String,
    /// Transcript length when the request was made. Replies must echo it.
    pub turn: usize,
    pub task: Task,
    pub role: Role,
    pub observation: String,
    pub view: AgentView,
    pub transcript: Vec<VisibleEvent>,
    pub legal: Vec<ActionKind>,
    /// Why the previous reply for this turn was refused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Harness instruction such as the forcing notice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    /// Searches already run during this turn.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    /// The acting seat is expected to propose now (prompted self-play).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub must_propose: bool,
}

impl ActionRequest {
    pub fn build(session_id: &str, state: &SessionState, world: &World, role: Role) -> Result<Self, DialogueError> {
        let legal = legal_actions(state, role)?;
        Ok(ActionRequest {
            session_id: session_id.to_string(),
            turn: state.transcript.len(),
            task: state.task,
            role,
            observation: render_observation(world, role),
            view: AgentView::of(world, role).ok_or(DialogueError::UnknownActor(role))?,
            transcript: visible_transcript(state, role),
            legal,
            error: None,
            notice: None,
            tool_calls: Vec::new(),
            must_propose: false,
        })
    }
}

pub fn visible_transcript(state: &SessionState, role: Role) -> Vec<VisibleEvent> {
    state
        .visible_to(role)
        .map(|e| VisibleEvent {
            index: e.index,
            sender: e.action.sender,
            recipient: e.action.recipient,
            kind: e.action.kind,
            text: e.action.text.clone(),
            proposal: e.action.proposal.clone(),
            feedback: e.feedback.iter().find(|f| f.recipient == role).map(|f| f.text.clone()),
        })
        .collect()
}

/// What an agent sends back for one request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentReply {
    Action(DialogueAction),
    /// A `Search(...)` call (Planning assistant only).
    Query(String),
    /// A reply that could not be understood; the text says why.
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no reply within {0} ms")]
    Timeout(u64),
    #[error("agent protocol error: {0}")]
    Protocol(String),
}

impl AgentError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, AgentError::Transport(_) | AgentError::Timeout(_))
    }
}

pub trait Agent: Send {
    fn act(&mut self, request: &ActionRequest) -> Result<AgentReply, AgentError>;

    /// Short label for logs.
    fn describe(&self) -> String;
}

#[derive(Debug, Error)]
pub enum RequestError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{role} sent no legal action in {attempts} attempts; last error: {last_error}")]
    RetriesExhausted {
        role: Role,
        attempts: usize,
        last_error: String,
    },
    #[error("{role} made more than {QUERY_BUDGET} searches in one turn")]
    QueryBudget { role: Role },
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
}

#[derive(Debug)]
pub struct Accepted {
    pub transition: Transition,
    /// Replies that were refused before this one.
    pub refused: usize,
}

/// Asks `agent` for an action until one is legal, attaching the refusal text
/// to each new request. Returns the applied transition.
pub fn request_action(
    agent: &mut dyn Agent,
    mut request: ActionRequest,
    state: &SessionState,
    world: &World,
    budget: usize,
    origin: Origin,
) -> Result<Accepted, RequestError> {
    let budget = budget.max(1);
    let mut refused = 0;
    loop {
        let reply = agent.act(&request)?;
        let message: String = match reply {
            AgentReply::Query(text) => match world {
                World::Planning(w) if request.role == Role::Assistant => {
                    if request.tool_calls.len() >= QUERY_BUDGET {
                        return Err(RequestError::QueryBudget { role: request.role });
                    }
                    let result = run_query(&text, w);
                    request.tool_calls.push(ToolCall { query: text, result });
                    continue;
                }
                _ => "You cannot use the search tool.".to_string(),
            },
            AgentReply::Invalid(why) => why,
            AgentReply::Action(action) if action.sender != request.role => format!(
                "You are {}; the action was sent as {}.",
                request.role, action.sender
            ),
            AgentReply::Action(action) if request.must_propose && action.kind != ActionKind::Propose => {
                "You must send [propose] now.".to_string()
            }
            AgentReply::Action(action) => match submit_action_from(state, world, action, origin) {
                Ok(transition) => return Ok(Accepted { transition, refused }),
                Err(e) if e.is_retriable() => e.to_string(),
                Err(e) => return Err(e.into()),
            },
        };
        refused += 1;
        if refused >= budget {
            return Err(RequestError::RetriesExhausted {
                role: request.role,
                attempts: refused,
                last_error: message,
            });
        }
        request.error = Some(message);
    }
}
