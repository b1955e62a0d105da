//! Batch evaluation: self-play, prompted self-play and run summaries.
//!
//! Episodes run in parallel on the rayon pool. Each episode is serial and
//! its log depends only on the configuration, so a run with scripted agents
//! is reproducible byte for byte.

mod psp;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use psp::{continue_prefix, prefix_event_count, run_psp, FORCING_NOTICE, FORCING_WINDOW_WORDS};
pub use stats::{mean_sem, stats, EpisodeRow, EpisodeStatus, MeanSem, RunSummary};

use crate::agents::{
    request_action, ActionRequest, Agent, ExternalAgent, OracleAgent, RandomAgent, DEFAULT_RETRY_BUDGET,
};
use crate::dialogue::{
    submit_action_from, turn_policy, ActionKind, DialogueAction, EpisodeLog, Origin, ReplayError, SessionConfig,
    SessionState,
};
use crate::task::{GenParams, Role, Task};
use crate::worldgen::{generate, World};

/// Consecutive thoughts allowed from one actor before the episode fails.
pub const MAX_CONSECUTIVE_THINKS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AgentSpec {
    Random,
    Oracle,
    /// `tcp:HOST:PORT` or `cmd:PROGRAM ARGS`.
    External(String),
}

impl FromStr for AgentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "random" => Ok(AgentSpec::Random),
            "oracle" => Ok(AgentSpec::Oracle),
            a if a.starts_with("tcp:") || a.starts_with("cmd:") => Ok(AgentSpec::External(a.to_string())),
            other => Err(format!("unknown agent '{other}' (random, oracle, tcp:HOST:PORT or cmd:PROGRAM)")),
        }
    }
}

impl TryFrom<String> for AgentSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AgentSpec> for String {
    fn from(a: AgentSpec) -> String {
        a.to_string()
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Random => f.write_str("random"),
            AgentSpec::Oracle => f.write_str("oracle"),
            AgentSpec::External(a) => f.write_str(a),
        }
    }
}

impl AgentSpec {
    pub fn build(&self, seed: u64, world: &Arc<World>) -> Result<Box<dyn Agent>, crate::agents::AgentError> {
        Ok(match self {
            AgentSpec::Random => Box::new(RandomAgent::new(seed)),
            AgentSpec::Oracle => Box::new(OracleAgent::new(world.clone())),
            AgentSpec::External(address) => Box::new(ExternalAgent::connect(address)?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "selfplay")]
    SelfPlay,
    #[serde(rename = "psp-50")]
    Psp50,
    #[serde(rename = "psp-75")]
    Psp75,
    #[serde(rename = "psp-proposal")]
    PspProposal,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "selfplay" => Ok(Mode::SelfPlay),
            "psp-50" | "50" => Ok(Mode::Psp50),
            "psp-75" | "75" => Ok(Mode::Psp75),
            "psp-proposal" | "proposal" => Ok(Mode::PspProposal),
            other => Err(format!("unknown mode '{other}' (selfplay, psp-50, psp-75, psp-proposal)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub params: GenParams,
    pub seeds: Vec<u64>,
    /// Per-role agents; roles not listed use `default_agent`.
    pub agents: BTreeMap<Role, AgentSpec>,
    pub default_agent: AgentSpec,
    pub mode: Mode,
    pub retry_budget: usize,
    /// Overrides the task's default action cap.
    pub action_cap: Option<usize>,
    pub record_wall_clock: bool,
}

impl RunConfig {
    pub fn new(task: Task) -> Self {
        RunConfig {
            task,
            params: task.default_params(),
            seeds: vec![0],
            agents: BTreeMap::new(),
            default_agent: AgentSpec::Random,
            mode: Mode::SelfPlay,
            retry_budget: DEFAULT_RETRY_BUDGET,
            action_cap: None,
            record_wall_clock: false,
        }
    }

    pub fn agent_for(&self, role: Role) -> &AgentSpec {
        self.agents.get(&role).unwrap_or(&self.default_agent)
    }

    pub fn session_config(&self) -> SessionConfig {
        let mut c = SessionConfig::for_task(self.task);
        if let Some(cap) = self.action_cap {
            c.action_cap = cap;
        }
        c
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("prefix log is for {found} but the run is {expected}")]
    PrefixTask { expected: Task, found: Task },
    #[error("prefix log does not replay cleanly: {0}")]
    Prefix(#[from] ReplayError),
    #[error("prefix log for seed {seed} contains no proposal")]
    NoProposal { seed: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub logs: Vec<EpisodeLog>,
}

impl RunOutput {
    /// Writes `episode-<seed>.jsonl` files (with an index suffix when seeds
    /// repeat) and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut used: BTreeMap<u64, usize> = BTreeMap::new();
        for log in &self.logs {
            let n = used.entry(log.header.seed).or_insert(0);
            let name = if *n == 0 {
                format!("episode-{}.jsonl", log.header.seed)
            } else {
                format!("episode-{}-{n}.jsonl", log.header.seed)
            };
            *n += 1;
            std::fs::write(dir.join(name), log.to_jsonl())?;
        }
        let summary = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        std::fs::write(dir.join("summary.json"), summary + "\n")?;
        Ok(())
    }
}

/// Harness-side controls for one episode.
#[derive(Clone, Debug, Default)]
pub(crate) struct Steering {
    /// Forcing starts once the dialogue has at least this many words.
    pub force_at_words: Option<usize>,
    /// This role must propose on its next turn (proposal-only mode).
    pub must_propose: Option<Role>,
    /// Transcript index where agent-driven play began.
    pub live_from: usize,
    /// Stop once this many agent actions have been accepted and no
    /// automatic response is due.
    pub max_agent_actions: Option<usize>,
}

/// Drives a session to its end. Returns the final state and the failure
/// reason, if any.
pub(crate) fn drive(
    mut state: SessionState,
    world: &World,
    agents: &mut BTreeMap<Role, Box<dyn Agent>>,
    retry_budget: usize,
    mut steering: Steering,
) -> (SessionState, Option<String>) {
    let session_id = format!("{}-{}", state.task, state.seed);
    let mut forcing = false;
    let mut auto_rejected = false;
    let mut thinks = 0;
    let mut agent_actions = 0;
    while !state.is_over() {
        let role = steering.must_propose.unwrap_or_else(|| turn_policy(&state));
        if steering.force_at_words.is_some_and(|w| state.total_words() >= w) {
            forcing = true;
        }

        // Under forcing, the harness answers live proposals for the recipients.
        if forcing {
            let auto = state
                .pending
                .as_ref()
                .filter(|p| p.entry >= steering.live_from && p.awaiting(role))
                .and_then(|p| {
                    if p.proposal.is_full() {
                        Some(DialogueAction::accept(role))
                    } else if !auto_rejected {
                        auto_rejected = true;
                        Some(DialogueAction::reject(role))
                    } else {
                        None
                    }
                });
            if let Some(action) = auto {
                match submit_action_from(&state, world, action, Origin::Auto) {
                    Ok(t) => {
                        state = t.state;
                        continue;
                    }
                    Err(e) => return (state, Some(format!("automatic response failed: {e}"))),
                }
            }
        }

        if steering.max_agent_actions.is_some_and(|m| agent_actions >= m) {
            break;
        }
        let mut request = match ActionRequest::build(&session_id, &state, world, role) {
            Ok(r) => r,
            Err(e) => return (state, Some(e.to_string())),
        };
        if forcing {
            request.notice = Some(FORCING_NOTICE.to_string());
        }
        request.must_propose = steering.must_propose == Some(role);
        let Some(agent) = agents.get_mut(&role) else {
            return (state, Some(format!("no agent for {role}")));
        };
        match request_action(agent.as_mut(), request, &state, world, retry_budget, Origin::Agent) {
            Ok(accepted) => {
                let kind = accepted.transition.entry().action.kind;
                state = accepted.transition.state;
                agent_actions += 1;
                if kind == ActionKind::Think {
                    thinks += 1;
                    if thinks > MAX_CONSECUTIVE_THINKS {
                        return (state, Some(format!("{role} sent more than {MAX_CONSECUTIVE_THINKS} thoughts in a row")));
                    }
                } else {
                    thinks = 0;
                }
                if kind == ActionKind::Propose && steering.must_propose == Some(role) {
                    steering.must_propose = None;
                }
            }
            Err(e) => return (state, Some(e.to_string())),
        }
    }
    (state, None)
}

pub(crate) fn build_agents(
    config: &RunConfig,
    seed: u64,
    world: &Arc<World>,
) -> Result<BTreeMap<Role, Box<dyn Agent>>, String> {
    config
        .task
        .roster()
        .iter()
        .map(|&role| {
            config
                .agent_for(role)
                .build(seed, world)
                .map(|a| (role, a))
                .map_err(|e| format!("{role}: {e}"))
        })
        .collect()
}

fn finish(
    state: &SessionState,
    params: &GenParams,
    world: &World,
    failure: Option<String>,
    started: Instant,
    record_wall_clock: bool,
) -> EpisodeLog {
    let mut log = EpisodeLog::from_session(state, params, world, failure);
    if record_wall_clock {
        log.footer.wall_clock_ms = Some(started.elapsed().as_millis() as u64);
    }
    log
}

/// Runs one self-play episode. `Err` carries a failure that happened before
/// a world existed.
pub fn run_episode(config: &RunConfig, seed: u64) -> Result<EpisodeLog, String> {
    let started = Instant::now();
    let world = Arc::new(generate(&config.params, seed).map_err(|e| e.to_string())?);
    let state = SessionState::new(config.task, seed, config.session_config());
    let (state, failure) = match build_agents(config, seed, &world) {
        Ok(mut agents) => drive(state, &world, &mut agents, config.retry_budget, Steering::default()),
        Err(e) => (state, Some(e)),
    };
    Ok(finish(&state, &config.params, &world, failure, started, config.record_wall_clock))
}

/// Runs one self-play episode with caller-supplied agents, one per role.
pub fn play_episode(
    config: &RunConfig,
    seed: u64,
    agents: &mut BTreeMap<Role, Box<dyn Agent>>,
) -> Result<EpisodeLog, String> {
    let started = Instant::now();
    let world = generate(&config.params, seed).map_err(|e| e.to_string())?;
    let state = SessionState::new(config.task, seed, config.session_config());
    let (state, failure) = drive(state, &world, agents, config.retry_budget, Steering::default());
    Ok(finish(&state, &config.params, &world, failure, started, config.record_wall_clock))
}

fn check_config(config: &RunConfig) -> Result<(), HarnessError> {
    if config.params.task() != config.task {
        return Err(HarnessError::Config(format!(
            "generation parameters are for {} but the task is {}",
            config.params.task(),
            config.task
        )));
    }
    if config.retry_budget == 0 {
        return Err(HarnessError::Config("retry budget must be at least 1".into()));
    }
    Ok(())
}

pub fn run_selfplay(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    check_config(config)?;
    if config.mode != Mode::SelfPlay {
        return Err(HarnessError::Config("prompted self-play runs need prefix logs; use run_psp".into()));
    }
    let results: Vec<(u64, Result<EpisodeLog, String>)> =
        config.seeds.par_iter().map(|&seed| (seed, run_episode(config, seed))).collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut logs = Vec::with_capacity(results.len());
    for (seed, result) in results {
        match result {
            Ok(log) => {
                rows.push(EpisodeRow::from_log(&log));
                logs.push(log);
            }
            Err(e) => rows.push(EpisodeRow::failed(seed, e)),
        }
    }
    Ok(RunOutput {
        summary: RunSummary::from_rows(Some(config.task), rows),
        logs,
    })
}
