//! Line-delimited episode logs: a header record, one record per action and a
//! footer record. Logs are deterministic (no timestamps unless asked for) so
//! identical runs produce byte-identical files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    submit_action_from, ActionKind, DialogueAction, DialogueError, Outcome, Proposal, SessionConfig,
    SessionState, TurnMode,
};
use crate::task::{GenParams, Role, Task};
use crate::worldgen::{generate, GenError, World};

/// Who produced an action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Agent,
    /// Copied from a prefix log.
    Replay,
    /// Inserted by the harness (forced accept or reject).
    Auto,
    Human,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub task: Task,
    pub seed: u64,
    pub params: GenParams,
    pub roster: Vec<Role>,
    pub world_digest: String,
    pub action_cap: usize,
    pub turn_mode: TurnMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSnapshot {
    pub recipient: Role,
    pub text: String,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub index: usize,
    pub sender: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<Role>,
    pub kind: ActionKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<Proposal>,
    pub visible_to: Vec<Role>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feedback: Vec<FeedbackSnapshot>,
    pub origin: Origin,
}

impl LogEvent {
    pub fn action(&self) -> DialogueAction {
        DialogueAction {
            kind: self.kind,
            sender: self.sender,
            recipient: self.recipient,
            text: self.text.clone(),
            proposal: self.proposal.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFooter {
    pub outcome: Outcome,
    /// `null` unless the episode terminated with an accepted decision.
    pub raw_reward: Option<f64>,
    pub normalized_reward: Option<f64>,
    pub word_counts: BTreeMap<Role, usize>,
    pub actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header(LogHeader),
    Event(LogEvent),
    Footer(LogFooter),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub events: Vec<LogEvent>,
    pub footer: LogFooter,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("cannot regenerate world: {0}")]
    World(#[from] GenError),
    #[error("world digest mismatch: log has {expected}, regenerated {actual}")]
    Digest { expected: String, actual: String },
    #[error("event {index} was rejected on replay: {error}")]
    Rejected { index: usize, error: DialogueError },
    #[error("event {index}: replay produced different {what}")]
    Divergence { index: usize, what: String },
}

impl EpisodeLog {
    pub const FORMAT: &'static str = "dialenv-episode/1";

    /// Builds a log from a finished (or abandoned) session.
    pub fn from_session(
        state: &SessionState,
        params: &GenParams,
        world: &World,
        failure: Option<String>,
    ) -> EpisodeLog {
        let header = LogHeader {
            format: Self::FORMAT.to_string(),
            task: state.task,
            seed: state.seed,
            params: *params,
            roster: state.task.roster().to_vec(),
            world_digest: world.digest(),
            action_cap: state.config.action_cap,
            turn_mode: state.config.turn_mode,
        };
        let events = state
            .transcript
            .iter()
            .map(|e| LogEvent {
                index: e.index,
                sender: e.action.sender,
                recipient: e.action.recipient,
                kind: e.action.kind,
                text: e.action.text.clone(),
                proposal: e.action.proposal.clone(),
                visible_to: e.visible_to.clone(),
                feedback: e
                    .feedback
                    .iter()
                    .map(|f| FeedbackSnapshot {
                        recipient: f.recipient,
                        text: f.text.clone(),
                        total: f.breakdown.total,
                    })
                    .collect(),
                origin: e.origin,
            })
            .collect();
        let score = state.final_score(world);
        let footer = LogFooter {
            outcome: state.outcome,
            raw_reward: score.map(|s| s.raw),
            normalized_reward: score.map(|s| s.normalized),
            word_counts: state.word_counts.clone(),
            actions: state.actions_taken,
            failure,
            wall_clock_ms: None,
        };
        EpisodeLog {
            header,
            events,
            footer,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            action_cap: self.header.action_cap,
            turn_mode: self.header.turn_mode,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: Record| {
            out.push_str(&serde_json::to_string(&r).expect("log records serialize"));
            out.push('\n');
        };
        push(Record::Header(self.header.clone()));
        for e in &self.events {
            push(Record::Event(e.clone()));
        }
        push(Record::Footer(self.footer.clone()));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EpisodeLog, ReplayError> {
        let mut header = None;
        let mut events = Vec::new();
        let mut footer = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fmt_err = |message: String| ReplayError::Format { line: i + 1, message };
            if footer.is_some() {
                return Err(fmt_err("record after footer".into()));
            }
            let record: Record = serde_json::from_str(line).map_err(|e| fmt_err(e.to_string()))?;
            match record {
                Record::Header(h) if header.is_none() && i == 0 => header = Some(h),
                Record::Header(_) => return Err(fmt_err("header must be the first line".into())),
                Record::Event(_) if header.is_none() => {
                    return Err(fmt_err("event before header".into()))
                }
                Record::Event(e) => events.push(e),
                Record::Footer(f) => footer = Some(f),
            }
        }
        let header = header.ok_or(ReplayError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let footer = footer.ok_or(ReplayError::Format {
            line: text.lines().count(),
            message: "missing footer".into(),
        })?;
        Ok(EpisodeLog {
            header,
            events,
            footer,
        })
    }

    /// Regenerates the world named by the header and checks its digest.
    pub fn world(&self) -> Result<World, ReplayError> {
        let world = generate(&self.header.params, self.header.seed)?;
        let actual = world.digest();
        if actual != self.header.world_digest {
            return Err(ReplayError::Digest {
                expected: self.header.world_digest.clone(),
                actual,
            });
        }
        Ok(world)
    }

    /// Number of events that are not thoughts.
    pub fn message_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind != ActionKind::Think).count()
    }

    pub fn total_words(&self) -> usize {
        self.footer.word_counts.values().sum()
    }

    /// Replays the first `n` events from a fresh session, checking each one
    /// reproduces its recorded feedback.
    pub fn replay_prefix(&self, world: &World, n: usize) -> Result<SessionState, ReplayError> {
        let mut state = SessionState::new(self.header.task, self.header.seed, self.session_config());
        for event in self.events.iter().take(n) {
            let t = submit_action_from(&state, world, event.action(), event.origin).map_err(|error| {
                ReplayError::Rejected {
                    index: event.index,
                    error,
                }
            })?;
            let got: Vec<(Role, &str, u64)> = t
                .feedback
                .iter()
                .map(|f| (f.recipient, f.text.as_str(), f.breakdown.total.to_bits()))
                .collect();
            let want: Vec<(Role, &str, u64)> = event
                .feedback
                .iter()
                .map(|f| (f.recipient, f.text.as_str(), f.total.to_bits()))
                .collect();
            if got != want {
                return Err(ReplayError::Divergence {
                    index: event.index,
                    what: "feedback".into(),
                });
            }
            state = t.state;
        }
        Ok(state)
    }

    /// Merges each run of adjacent messages with the same sender and
    /// recipient into one message (texts joined by newlines), then rebuilds
    /// the log by replaying the merged actions. Free-form human chat is
    /// exported this way so that one logical turn is one event.
    ///
    /// Word counts and rewards are unchanged. The action count drops, so a
    /// session that hit its cap may export as ongoing.
    pub fn concatenate_turns(&self) -> Result<EpisodeLog, ReplayError> {
        let mut merged: Vec<(DialogueAction, Origin)> = Vec::new();
        for e in &self.events {
            if let Some((prev, _)) = merged.last_mut() {
                if e.kind == ActionKind::Message
                    && prev.kind == ActionKind::Message
                    && prev.sender == e.sender
                    && prev.recipient == e.recipient
                {
                    prev.text.push('\n');
                    prev.text.push_str(&e.text);
                    continue;
                }
            }
            merged.push((e.action(), e.origin));
        }
        let world = self.world()?;
        let mut state = SessionState::new(self.header.task, self.header.seed, self.session_config());
        for (i, (action, origin)) in merged.into_iter().enumerate() {
            state = submit_action_from(&state, &world, action, origin)
                .map_err(|error| ReplayError::Rejected { index: i, error })?
                .state;
        }
        let mut out = EpisodeLog::from_session(&state, &self.header.params, &world, self.footer.failure.clone());
        out.footer.wall_clock_ms = self.footer.wall_clock_ms;
        Ok(out)
    }

    /// Full replay: every event, then the footer reward must match exactly.
    pub fn replay(&self) -> Result<SessionState, ReplayError> {
        let world = self.world()?;
        let state = self.replay_prefix(&world, self.events.len())?;
        let rebuilt = EpisodeLog::from_session(&state, &self.header.params, &world, self.footer.failure.clone());
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        if bits(rebuilt.footer.normalized_reward) != bits(self.footer.normalized_reward)
            || bits(rebuilt.footer.raw_reward) != bits(self.footer.raw_reward)
        {
            return Err(ReplayError::Divergence {
                index: self.events.len(),
                what: "final reward".into(),
            });
        }
        if rebuilt.footer.outcome != self.footer.outcome && self.footer.failure.is_none() {
            return Err(ReplayError::Divergence {
                index: self.events.len(),
                what: "outcome".into(),
            });
        }
        Ok(state)
    }
}
