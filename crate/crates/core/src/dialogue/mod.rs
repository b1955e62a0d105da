//! The dialogue protocol shared by all tasks.
//!
//! A session is a value: [`submit_action`] takes the current state and an
//! action and returns a new state plus what each actor should be shown.
//! Nothing is mutated in place, which keeps replay trivial.
//!
//! Rules:
//! - Actors act in roster order. `think` never passes the turn and is only
//!   visible to its author.
//! - A proposal becomes pending; its recipients may only accept or reject.
//! - Any reject clears the pending proposal.
//! - When every recipient has accepted a full proposal the game ends. An
//!   accepted partial proposal is recorded and cleared.
//! - After the action cap (think actions excluded) the session is capped.

pub mod log;
pub mod proposal;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{EpisodeLog, LogEvent, LogFooter, LogHeader, Origin, ReplayError};
pub use proposal::{parse_proposal, render_proposal, validate as validate_proposal, Proposal, SchemaError};

use crate::scoring::{self, NormalizedScore, RewardBreakdown};
use crate::task::{Role, Task};
use crate::worldgen::World;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Message,
    Think,
    Propose,
    Accept,
    Reject,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Message,
        ActionKind::Think,
        ActionKind::Propose,
        ActionKind::Accept,
        ActionKind::Reject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Message => "message",
            ActionKind::Think => "think",
            ActionKind::Propose => "propose",
            ActionKind::Accept => "accept",
            ActionKind::Reject => "reject",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.name())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches('[').trim_end_matches(']');
        ActionKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown action kind '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueAction {
    pub kind: ActionKind,
    pub sender: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<Role>,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<Proposal>,
}

impl DialogueAction {
    fn new(kind: ActionKind, sender: Role, text: impl Into<String>) -> Self {
        DialogueAction {
            kind,
            sender,
            recipient: None,
            text: text.into(),
            proposal: None,
        }
    }

    pub fn message(sender: Role, text: impl Into<String>) -> Self {
        Self::new(ActionKind::Message, sender, text)
    }

    pub fn think(sender: Role, text: impl Into<String>) -> Self {
        Self::new(ActionKind::Think, sender, text)
    }

    pub fn propose(sender: Role, proposal: Proposal) -> Self {
        DialogueAction {
            proposal: Some(proposal),
            ..Self::new(ActionKind::Propose, sender, "")
        }
    }

    /// A proposal given only as text; it is parsed on submission.
    pub fn propose_text(sender: Role, text: impl Into<String>) -> Self {
        Self::new(ActionKind::Propose, sender, text)
    }

    pub fn accept(sender: Role) -> Self {
        Self::new(ActionKind::Accept, sender, "")
    }

    pub fn reject(sender: Role) -> Self {
        Self::new(ActionKind::Reject, sender, "")
    }

    pub fn to(mut self, recipient: Role) -> Self {
        self.recipient = Some(recipient);
        self
    }

    /// Reads `[kind] text` as typed by a model or a person.
    pub fn parse_line(sender: Role, line: &str) -> Result<Self, DialogueError> {
        let line = line.trim();
        let (head, rest) = match line.find(']') {
            Some(end) if line.starts_with('[') => (&line[..=end], line[end + 1..].trim()),
            _ => {
                return Err(DialogueError::Schema(
                    "start the message with its type, e.g. [message]".into(),
                ))
            }
        };
        let kind = head
            .parse::<ActionKind>()
            .map_err(DialogueError::Schema)?;
        Ok(Self::new(kind, sender, rest))
    }
}

/// Number of maximal whitespace-separated tokens.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnMode {
    /// Actors move in roster order.
    #[default]
    Strict,
    /// Anyone may act at any time (human play).
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub action_cap: usize,
    pub turn_mode: TurnMode,
}

impl SessionConfig {
    pub fn for_task(task: Task) -> Self {
        SessionConfig {
            action_cap: task.default_action_cap(),
            turn_mode: TurnMode::Strict,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ongoing,
    Terminated,
    Capped,
}

/// A scorecard delivered to one recipient of a proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub recipient: Role,
    pub breakdown: RewardBreakdown,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub index: usize,
    pub action: DialogueAction,
    pub visible_to: Vec<Role>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feedback: Vec<Feedback>,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingProposal {
    pub proposal: Proposal,
    pub proposer: Role,
    /// One entry per recipient: `None` until they respond.
    pub responses: BTreeMap<Role, Option<bool>>,
    /// Transcript index of the propose action.
    pub entry: usize,
}

impl PendingProposal {
    pub fn awaiting(&self, role: Role) -> bool {
        matches!(self.responses.get(&role), Some(None))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub task: Task,
    pub seed: u64,
    pub config: SessionConfig,
    pub transcript: Vec<TranscriptEntry>,
    pub pending: Option<PendingProposal>,
    /// Index into the task roster of the actor whose turn it is.
    pub cursor: usize,
    pub outcome: Outcome,
    /// Words sent by each actor in message and propose texts.
    pub word_counts: BTreeMap<Role, usize>,
    /// The full proposal everyone accepted, once terminated.
    pub final_decision: Option<Proposal>,
    /// Mediation: the latest flight each user accepted.
    pub accepted_flights: Vec<Option<usize>>,
    /// Non-think actions so far.
    pub actions_taken: usize,
}

impl SessionState {
    pub fn new(task: Task, seed: u64, config: SessionConfig) -> Self {
        SessionState {
            task,
            seed,
            config,
            transcript: Vec::new(),
            pending: None,
            cursor: 0,
            outcome: Outcome::Ongoing,
            word_counts: task.roster().iter().map(|&r| (r, 0)).collect(),
            final_decision: None,
            accepted_flights: if task == Task::Mediation { vec![None, None] } else { vec![] },
            actions_taken: 0,
        }
    }

    pub fn is_over(&self) -> bool {
        self.outcome != Outcome::Ongoing
    }

    pub fn total_words(&self) -> usize {
        self.word_counts.values().sum()
    }

    /// Transcript entries `role` is allowed to see.
    pub fn visible_to(&self, role: Role) -> impl Iterator<Item = &TranscriptEntry> {
        self.transcript
            .iter()
            .filter(move |e| e.visible_to.contains(&role))
    }

    /// Normalized reward of the accepted decision.
    pub fn final_score(&self, world: &World) -> Option<NormalizedScore> {
        self.final_decision
            .as_ref()
            .and_then(|p| scoring::evaluate(world, p).ok())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DialogueError {
    #[error("{0} is not part of this game")]
    UnknownActor(Role),
    #[error("It is not your turn; waiting for {expected}.")]
    NotYourTurn { expected: Role },
    #[error("You cannot send {kind}. Valid actions: {}.", fmt_kinds(.legal))]
    IllegalAction { kind: ActionKind, legal: Vec<ActionKind> },
    #[error("{0}")]
    MissingRecipient(String),
    #[error("{0}")]
    InvalidRecipient(String),
    #[error("Invalid proposal: {0}")]
    Schema(String),
    #[error("The game is over; no more actions are accepted.")]
    SessionOver,
    #[error("There is no pending proposal to respond to.")]
    MissingProposal,
}

impl DialogueError {
    /// Errors an agent can fix by sending a different action.
    pub fn is_retriable(&self) -> bool {
        !matches!(self, DialogueError::SessionOver | DialogueError::UnknownActor(_))
    }
}

fn fmt_kinds(kinds: &[ActionKind]) -> String {
    kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
}

/// Whose move it is.
pub fn turn_policy(state: &SessionState) -> Role {
    let roster = state.task.roster();
    roster[state.cursor % roster.len()]
}

/// Kinds `actor` may send right now, ignoring whose turn it is.
pub fn legal_actions(state: &SessionState, actor: Role) -> Result<Vec<ActionKind>, DialogueError> {
    if !state.task.roster().contains(&actor) {
        return Err(DialogueError::UnknownActor(actor));
    }
    if state.is_over() {
        return Err(DialogueError::SessionOver);
    }
    if state.pending.as_ref().is_some_and(|p| p.awaiting(actor)) {
        return Ok(vec![ActionKind::Accept, ActionKind::Reject]);
    }
    let mut kinds = vec![ActionKind::Message, ActionKind::Think];
    if state.task.can_propose(actor) {
        kinds.push(ActionKind::Propose);
    }
    Ok(kinds)
}

/// Result of a successful [`submit_action`].
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: SessionState,
    /// Index of the new transcript entry.
    pub entry: usize,
    /// Actors who see the action.
    pub visible_to: Vec<Role>,
    /// Scorecards produced by a proposal.
    pub feedback: Vec<Feedback>,
    /// True when this action ended the session (terminated or capped).
    pub ended: bool,
}

impl Transition {
    pub fn entry(&self) -> &TranscriptEntry {
        &self.state.transcript[self.entry]
    }
}

/// Applies an agent action. See [`submit_action_from`].
pub fn submit_action(
    state: &SessionState,
    world: &World,
    action: DialogueAction,
) -> Result<Transition, DialogueError> {
    submit_action_from(state, world, action, Origin::Agent)
}

fn resolve_message_recipient(task: Task, action: &DialogueAction) -> Result<Role, DialogueError> {
    let sender = action.sender;
    match task {
        Task::Mediation if sender == Role::Assistant => match action.recipient {
            Some(r @ (Role::User0 | Role::User1)) => Ok(r),
            Some(other) => Err(DialogueError::InvalidRecipient(format!(
                "You can only send messages to user 0 or user 1, not {other}."
            ))),
            None => Err(DialogueError::MissingRecipient(
                "Choose a recipient for your message: user 0 or user 1.".into(),
            )),
        },
        Task::Mediation => match action.recipient {
            None | Some(Role::Assistant) => Ok(Role::Assistant),
            Some(other) => Err(DialogueError::InvalidRecipient(format!(
                "You can only message the assistant, not {other}."
            ))),
        },
        _ => {
            let other = *task
                .roster()
                .iter()
                .find(|&&r| r != sender)
                .expect("two-actor roster");
            match action.recipient {
                None => Ok(other),
                Some(r) if r == other => Ok(other),
                Some(r) => Err(DialogueError::InvalidRecipient(format!(
                    "You cannot address {r}; your partner is {other}."
                ))),
            }
        }
    }
}

/// Applies `action` to `state`. Validation happens before any change, so an
/// error leaves nothing half-applied. `origin` is recorded in the transcript.
pub fn submit_action_from(
    state: &SessionState,
    world: &World,
    mut action: DialogueAction,
    origin: Origin,
) -> Result<Transition, DialogueError> {
    let task = state.task;
    if world.task() != task {
        return Err(DialogueError::Schema(format!(
            "world is a {} world but the session plays {task}",
            world.task()
        )));
    }
    let sender = action.sender;
    let legal = legal_actions(state, sender)?;
    if state.config.turn_mode == TurnMode::Strict {
        let expected = turn_policy(state);
        if sender != expected {
            return Err(DialogueError::NotYourTurn { expected });
        }
    }
    if !legal.contains(&action.kind) {
        return Err(DialogueError::IllegalAction {
            kind: action.kind,
            legal,
        });
    }

    let mut visible_to: Vec<Role>;
    let mut feedback = Vec::new();
    let mut recipients: Vec<Role> = Vec::new();
    match action.kind {
        ActionKind::Think => {
            if action.recipient.is_some() {
                return Err(DialogueError::InvalidRecipient("Thoughts have no recipient.".into()));
            }
            visible_to = vec![sender];
        }
        ActionKind::Message => {
            if action.text.trim().is_empty() {
                return Err(DialogueError::Schema("a message needs some text".into()));
            }
            let to = resolve_message_recipient(task, &action)?;
            visible_to = vec![sender, to];
        }
        ActionKind::Accept | ActionKind::Reject => {
            if !action.text.trim().is_empty() {
                return Err(DialogueError::Schema(format!("{} carries no text", action.kind)));
            }
            let pending = state.pending.as_ref().ok_or(DialogueError::MissingProposal)?;
            if let Some(r) = action.recipient {
                if r != pending.proposer {
                    return Err(DialogueError::InvalidRecipient(format!(
                        "Responses go to the proposer, {}.",
                        pending.proposer
                    )));
                }
            }
            action.text = String::new();
            visible_to = vec![sender, pending.proposer];
        }
        ActionKind::Propose => {
            let proposal = match action.proposal.take() {
                Some(p) => p,
                None => proposal::parse_proposal(world, &action.text)
                    .map_err(|e| DialogueError::Schema(e.0))?,
            };
            proposal::validate(world, &proposal).map_err(|e| DialogueError::Schema(e.0))?;
            recipients = match (task, &proposal) {
                (Task::Mediation, Proposal::Flights(slots)) => {
                    let addressed: Vec<Role> = slots
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.is_some())
                        .filter_map(|(u, _)| Role::mediation_user(u))
                        .collect();
                    match action.recipient {
                        None => addressed,
                        Some(r @ (Role::User0 | Role::User1)) => {
                            if addressed != [r] {
                                return Err(DialogueError::InvalidRecipient(format!(
                                    "A proposal to {r} may only name a flight for {r}."
                                )));
                            }
                            addressed
                        }
                        Some(other) => {
                            return Err(DialogueError::InvalidRecipient(format!(
                                "Proposals go to user 0, user 1 or both, not {other}."
                            )))
                        }
                    }
                }
                _ => {
                    let others: Vec<Role> =
                        task.roster().iter().copied().filter(|&r| r != sender).collect();
                    if let Some(r) = action.recipient {
                        if !others.contains(&r) {
                            return Err(DialogueError::InvalidRecipient(format!(
                                "You cannot send a proposal to {r}."
                            )));
                        }
                    }
                    others
                }
            };
            if action.text.trim().is_empty() {
                action.text = proposal::render_proposal(world, &proposal);
            }
            feedback = proposal_feedback(state, world, &proposal, &recipients);
            action.proposal = Some(proposal);
            visible_to = std::iter::once(sender).chain(recipients.iter().copied()).collect();
        }
    }
    visible_to.dedup();

    // Validation done; build the next state.
    let mut next = state.clone();
    let index = next.transcript.len();
    if matches!(action.kind, ActionKind::Message | ActionKind::Propose) {
        *next.word_counts.entry(sender).or_insert(0) += word_count(&action.text);
    }
    match action.kind {
        ActionKind::Propose => {
            next.pending = Some(PendingProposal {
                proposal: action.proposal.clone().expect("set above"),
                proposer: sender,
                responses: recipients.iter().map(|&r| (r, None)).collect(),
                entry: index,
            });
        }
        ActionKind::Reject => next.pending = None,
        ActionKind::Accept => {
            let pending = next.pending.as_mut().expect("checked above");
            pending.responses.insert(sender, Some(true));
            if let (Proposal::Flights(slots), Some(u)) = (&pending.proposal, sender.user_index()) {
                if task == Task::Mediation {
                    next.accepted_flights[u] = slots[u];
                }
            }
            if pending.responses.values().all(|r| *r == Some(true)) {
                let done = next.pending.take().expect("present");
                if done.proposal.is_full() {
                    next.outcome = Outcome::Terminated;
                    next.final_decision = Some(done.proposal);
                }
            }
        }
        ActionKind::Message | ActionKind::Think => {}
    }
    if action.kind != ActionKind::Think {
        next.actions_taken += 1;
        let roster = task.roster();
        let pos = roster.iter().position(|&r| r == sender).expect("in roster");
        next.cursor = (pos + 1) % roster.len();
        if next.outcome == Outcome::Ongoing && next.actions_taken >= next.config.action_cap {
            next.outcome = Outcome::Capped;
        }
    }
    next.transcript.push(TranscriptEntry {
        index,
        action,
        visible_to: visible_to.clone(),
        feedback: feedback.clone(),
        origin,
    });
    let ended = next.is_over();
    Ok(Transition {
        state: next,
        entry: index,
        visible_to,
        feedback,
        ended,
    })
}

fn proposal_feedback(
    state: &SessionState,
    world: &World,
    proposal: &Proposal,
    recipients: &[Role],
) -> Vec<Feedback> {
    match (world, proposal) {
        (World::Planning(w), Proposal::Itinerary(slots)) => {
            let breakdown = scoring::ItineraryEvaluator::new(w).breakdown(slots);
            recipients
                .iter()
                .map(|&r| Feedback {
                    recipient: r,
                    text: scoring::render_feedback(&breakdown, Task::Planning),
                    breakdown: breakdown.clone(),
                })
                .collect()
        }
        (World::Mediation(w), Proposal::Flights(slots)) => recipients
            .iter()
            .filter_map(|&r| {
                let u = r.user_index()?;
                let flight = slots[u]?;
                let other = slots[1 - u].or(state.accepted_flights.get(1 - u).copied().flatten());
                let breakdown = scoring::user_breakdown(w, u, flight, other);
                Some(Feedback {
                    recipient: r,
                    text: scoring::render_feedback(&breakdown, Task::Mediation),
                    breakdown,
                })
            })
            .collect(),
        _ => Vec::new(),
    }
}
