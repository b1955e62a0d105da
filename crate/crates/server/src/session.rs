//! One live session. The world, dialogue state, seats and per-role frame
//! logs are owned by a single actor task; request handlers reach it through
//! a mailbox, so actions are applied in the order they arrive and every
//! subscriber sees frames in that order.

use std::collections::{BTreeMap, HashMap};
use std::panic::AssertUnwindSafe;
use std::sync::{Arc, Mutex, PoisonError};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::http::StatusCode;
use dialenv_core::agents::{
    request_action, visible_transcript, Accepted, ActionRequest, Agent, AgentError, RequestError, VisibleEvent,
};
use dialenv_core::dialogue::{submit_action_from, Origin, TurnMode};
use dialenv_core::harness::{AgentSpec, MAX_CONSECUTIVE_THINKS};
use dialenv_core::{
    generate, legal_actions, turn_policy, ActionKind, AgentView, DialogueAction, EpisodeLog, GenParams, Role,
    SessionConfig, SessionState, Transition, World,
};
use rand::Rng;
use tokio::sync::{broadcast, mpsc, oneshot};
use uuid::Uuid;

use crate::error::ApiError;
use crate::wire::{
    ActionInput, CreateSession, CreatedSession, EventFrame, FrameBody, Joined, OutOfTurn, Posted, RoleView, Seat,
    SessionSummary, SessionTicket,
};

/// Frames a slow stream subscriber may fall behind before it has to catch up
/// from the stored log.
const LIVE_BUFFER: usize = 1024;
/// Seeds tried for an auto-seeded session before giving up.
const AUTO_SEED_ATTEMPTS: usize = 64;

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Frames already stored for a role, plus a live feed of later ones.
pub struct Subscription {
    pub role: Role,
    pub backlog: Vec<EventFrame>,
    pub live: broadcast::Receiver<EventFrame>,
}

type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

pub(crate) enum Command {
    Submit {
        token: String,
        input: ActionInput,
        from_stream: bool,
        reply: Reply<Posted>,
    },
    /// Records an error frame for a stream message that could not be read.
    Report { token: String, error: ApiError },
    Join { token: String, reply: Reply<Joined> },
    View { token: String, reply: Reply<RoleView> },
    Subscribe { token: String, after: u64, reply: Reply<Subscription> },
    Log { raw: bool, reply: Reply<String> },
    Summary { reply: Reply<SessionSummary> },
}

#[derive(Clone)]
pub(crate) struct SessionHandle {
    tx: mpsc::Sender<Command>,
}

impl SessionHandle {
    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ApiError> {
        let (reply, rx) = oneshot::channel();
        let gone = || ApiError::new(StatusCode::GONE, "the session is no longer running");
        self.tx.send(make(reply)).await.map_err(|_| gone())?;
        rx.await.map_err(|_| gone())?
    }

    pub async fn submit(&self, token: String, input: ActionInput, from_stream: bool) -> Result<Posted, ApiError> {
        self.call(|reply| Command::Submit {
            token,
            input,
            from_stream,
            reply,
        })
        .await
    }

    pub async fn report(&self, token: String, error: ApiError) {
        let _ = self.tx.send(Command::Report { token, error }).await;
    }

    pub async fn join(&self, token: String) -> Result<Joined, ApiError> {
        self.call(|reply| Command::Join { token, reply }).await
    }

    pub async fn view(&self, token: String) -> Result<RoleView, ApiError> {
        self.call(|reply| Command::View { token, reply }).await
    }

    pub async fn subscribe(&self, token: String, after: u64) -> Result<Subscription, ApiError> {
        self.call(|reply| Command::Subscribe { token, after, reply }).await
    }

    pub async fn log(&self, raw: bool) -> Result<String, ApiError> {
        self.call(|reply| Command::Log { raw, reply }).await
    }

    pub async fn summary(&self) -> Result<SessionSummary, ApiError> {
        self.call(|reply| Command::Summary { reply }).await
    }
}

struct RoleChannel {
    frames: Vec<EventFrame>,
    live: broadcast::Sender<EventFrame>,
}

struct AgentDone {
    role: Role,
    /// Transcript length the request was built from.
    turn: usize,
    result: Result<Accepted, RequestError>,
}

type SharedAgent = Arc<Mutex<Box<dyn Agent>>>;

struct Session {
    id: String,
    created_at: u64,
    params: GenParams,
    world: Arc<World>,
    state: SessionState,
    seats: BTreeMap<Role, Seat>,
    tokens: HashMap<String, Role>,
    agents: BTreeMap<Role, SharedAgent>,
    thinks: BTreeMap<Role, usize>,
    channels: BTreeMap<Role, RoleChannel>,
    queued: BTreeMap<Role, DialogueAction>,
    out_of_turn: OutOfTurn,
    disclose: bool,
    retry_budget: usize,
    failure: Option<String>,
    agent_busy: bool,
}

fn validate(req: &CreateSession) -> Result<(GenParams, SessionConfig), ApiError> {
    let roster = req.task.roster();
    let mut seen = Vec::new();
    for w in &req.roles {
        if !roster.contains(&w.role) {
            return Err(ApiError::bad_request(format!("{} has no {} role", req.task, w.role)));
        }
        if seen.contains(&w.role) {
            return Err(ApiError::bad_request(format!("{} is wired more than once", w.role)));
        }
        seen.push(w.role);
        match &w.seat {
            Seat::Scripted {
                agent: AgentSpec::External(_),
            } => {
                return Err(ApiError::bad_request(format!(
                    "{}: bridge addresses go in an external seat",
                    w.role
                )))
            }
            Seat::External { address } if !matches!(address.parse::<AgentSpec>(), Ok(AgentSpec::External(_))) => {
                return Err(ApiError::bad_request(format!(
                    "{}: external address must start with tcp: or cmd:",
                    w.role
                )))
            }
            _ => {}
        }
    }
    if let Some(missing) = roster.iter().find(|r| !seen.contains(r)) {
        return Err(ApiError::bad_request(format!("no seat given for {missing}")));
    }
    let params = req.params.unwrap_or_else(|| req.task.default_params());
    if params.task() != req.task {
        return Err(ApiError::bad_request(format!(
            "parameters are for {}, not {}",
            params.task(),
            req.task
        )));
    }
    let mut config = SessionConfig::for_task(req.task);
    if let Some(cap) = req.action_cap {
        if cap == 0 {
            return Err(ApiError::bad_request("action_cap must be positive"));
        }
        config.action_cap = cap;
    }
    let human = req.roles.iter().any(|w| w.seat == Seat::Human);
    config.turn_mode = req
        .turn_mode
        .unwrap_or(if human { TurnMode::Free } else { TurnMode::Strict });
    Ok((params, config))
}

/// Generates the world, connects server-driven agents and starts the actor.
pub(crate) async fn create(req: CreateSession, retry_budget: usize) -> Result<(SessionHandle, CreatedSession), ApiError> {
    let (params, config) = validate(&req)?;
    let wiring = req.roles.clone();
    let fixed_seed = req.seed;
    let (seed, world, agents) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let (seed, world) = match fixed_seed {
            Some(seed) => {
                let world = generate(&params, seed).map_err(|e| {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("seed {seed}: {e}"))
                })?;
                (seed, world)
            }
            None => {
                let mut rng = rand::rng();
                let mut found = None;
                for _ in 0..AUTO_SEED_ATTEMPTS {
                    let seed = rng.random_range(0..u32::MAX as u64);
                    if let Ok(world) = generate(&params, seed) {
                        found = Some((seed, world));
                        break;
                    }
                }
                found.ok_or_else(|| {
                    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "could not generate a world")
                })?
            }
        };
        let world = Arc::new(world);
        let mut agents: BTreeMap<Role, SharedAgent> = BTreeMap::new();
        for w in &wiring {
            let spec = match &w.seat {
                Seat::Scripted { agent } => agent.clone(),
                Seat::External { address } => AgentSpec::External(address.clone()),
                Seat::Human | Seat::Remote => continue,
            };
            let agent = spec.build(seed, &world).map_err(|e| {
                ApiError::new(StatusCode::BAD_GATEWAY, format!("cannot start agent for {}: {e}", w.role))
            })?;
            agents.insert(w.role, Arc::new(Mutex::new(agent)));
        }
        Ok((seed, world, agents))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;

    let id = Uuid::new_v4().simple().to_string();
    let created_at = now_ms();
    let mut tokens = HashMap::new();
    let mut tickets = Vec::new();
    for w in req.roles.iter().filter(|w| w.seat.has_ticket()) {
        let token = Uuid::new_v4().simple().to_string();
        tokens.insert(token.clone(), w.role);
        tickets.push(SessionTicket {
            session_id: id.clone(),
            role: w.role,
            token,
            task: req.task,
            created_at,
        });
    }
    let mut session = Session {
        id: id.clone(),
        created_at,
        params,
        world,
        state: SessionState::new(req.task, seed, config),
        seats: req.roles.into_iter().map(|w| (w.role, w.seat)).collect(),
        tokens,
        agents,
        thinks: BTreeMap::new(),
        channels: req
            .task
            .roster()
            .iter()
            .map(|&r| {
                let (live, _) = broadcast::channel(LIVE_BUFFER);
                (r, RoleChannel { frames: Vec::new(), live })
            })
            .collect(),
        queued: BTreeMap::new(),
        out_of_turn: req.out_of_turn,
        disclose: req.disclose_final_score,
        retry_budget,
        failure: None,
        agent_busy: false,
    };
    for &role in req.task.roster() {
        let frame = session.turn_frame(role);
        session.push(role, frame);
    }
    let (tx, rx) = mpsc::channel(64);
    tokio::spawn(run(session, rx));
    tracing::info!(session = %id, task = %req.task, seed, "session created");
    Ok((
        SessionHandle { tx },
        CreatedSession {
            session_id: id,
            task: req.task,
            seed,
            created_at,
            tickets,
        },
    ))
}

async fn run(mut s: Session, mut rx: mpsc::Receiver<Command>) {
    let (done_tx, mut done_rx) = mpsc::unbounded_channel();
    s.kick(&done_tx);
    loop {
        tokio::select! {
            cmd = rx.recv() => match cmd {
                Some(cmd) => s.handle(cmd),
                None => break,
            },
            Some(done) = done_rx.recv() => s.agent_done(done),
        }
        s.kick(&done_tx);
    }
}

impl Session {
    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Submit {
                token,
                input,
                from_stream,
                reply,
            } => {
                let result = self.role_of(&token).and_then(|role| {
                    let r = self.submit(role, input);
                    if let (Err(e), true) = (&r, from_stream) {
                        self.push(role, e.frame());
                    }
                    r
                });
                let _ = reply.send(result);
            }
            Command::Report { token, error } => {
                if let Ok(role) = self.role_of(&token) {
                    self.push(role, error.frame());
                }
            }
            Command::Join { token, reply } => {
                let _ = reply.send(self.role_of(&token).map(|role| Joined {
                    session_id: self.id.clone(),
                    role,
                    task: self.state.task,
                    seed: self.state.seed,
                }));
            }
            Command::View { token, reply } => {
                let _ = reply.send(self.role_of(&token).and_then(|role| self.view(role)));
            }
            Command::Subscribe { token, after, reply } => {
                let _ = reply.send(self.role_of(&token).map(|role| {
                    let ch = &self.channels[&role];
                    Subscription {
                        role,
                        backlog: ch.frames.iter().filter(|f| f.seq > after).cloned().collect(),
                        live: ch.live.subscribe(),
                    }
                }));
            }
            Command::Log { raw, reply } => {
                let _ = reply.send(self.log(raw));
            }
            Command::Summary { reply } => {
                let _ = reply.send(Ok(self.summary()));
            }
        }
    }

    fn role_of(&self, token: &str) -> Result<Role, ApiError> {
        self.tokens.get(token).copied().ok_or_else(ApiError::unauthorized)
    }

    fn origin(&self, role: Role) -> Origin {
        match self.seats.get(&role) {
            Some(Seat::Human) => Origin::Human,
            _ => Origin::Agent,
        }
    }

    fn submit(&mut self, role: Role, input: ActionInput) -> Result<Posted, ApiError> {
        if let Some(f) = &self.failure {
            return Err(ApiError::conflict(format!("the session failed: {f}")));
        }
        let action = match input {
            ActionInput {
                action: Some(a),
                line: None,
            } => {
                if a.sender != role {
                    return Err(ApiError::new(
                        StatusCode::FORBIDDEN,
                        format!("your role is {role}, but the action is sent as {}", a.sender),
                    ));
                }
                a
            }
            ActionInput {
                action: None,
                line: Some(line),
            } => DialogueAction::parse_line(role, &line)?,
            _ => return Err(ApiError::bad_request("send exactly one of `action` or `line`")),
        };
        if self.state.config.turn_mode == TurnMode::Strict
            && self.out_of_turn == OutOfTurn::Queue
            && !self.state.is_over()
            && turn_policy(&self.state) != role
        {
            self.queued.insert(role, action);
            return Ok(Posted::Queued);
        }
        let t = submit_action_from(&self.state, &self.world, action, self.origin(role))?;
        let index = t.entry;
        self.apply(t);
        Ok(Posted::Accepted { index })
    }

    /// Commits a transition, fans out its frames, then submits any queued
    /// action whose turn has come.
    fn apply(&mut self, t: Transition) {
        self.fan_out(t);
        while !self.state.is_over() {
            let role = turn_policy(&self.state);
            let Some(action) = self.queued.remove(&role) else { break };
            match submit_action_from(&self.state, &self.world, action, self.origin(role)) {
                Ok(t) => self.fan_out(t),
                Err(e) => self.push(role, ApiError::from(e).frame()),
            }
        }
    }

    fn fan_out(&mut self, t: Transition) {
        let before = turn_policy(&self.state);
        let entry = t.entry().clone();
        self.state = t.state;
        let after = turn_policy(&self.state);
        for &role in self.state.task.roster() {
            let saw = entry.visible_to.contains(&role);
            if saw {
                let event = VisibleEvent {
                    index: entry.index,
                    sender: entry.action.sender,
                    recipient: entry.action.recipient,
                    kind: entry.action.kind,
                    text: entry.action.text.clone(),
                    proposal: entry.action.proposal.clone(),
                    feedback: None,
                };
                self.push(role, FrameBody::Event { event });
                if let Some(f) = entry.feedback.iter().find(|f| f.recipient == role) {
                    self.push(
                        role,
                        FrameBody::Feedback {
                            index: entry.index,
                            proposer: entry.action.sender,
                            text: f.text.clone(),
                            total: f.breakdown.total,
                        },
                    );
                }
            }
            if self.state.is_over() {
                let frame = self.termination(None);
                self.push(role, frame);
            } else if saw || before != after {
                let frame = self.turn_frame(role);
                self.push(role, frame);
            }
        }
    }

    fn turn_frame(&self, role: Role) -> FrameBody {
        FrameBody::Turn {
            actor: turn_policy(&self.state),
            legal: legal_actions(&self.state, role).unwrap_or_default(),
        }
    }

    fn termination(&self, failure: Option<String>) -> FrameBody {
        let score = self.disclose.then(|| self.state.final_score(&self.world)).flatten();
        FrameBody::Termination {
            outcome: self.state.outcome,
            normalized_score: score.map(|s| s.normalized),
            raw_score: score.map(|s| s.raw),
            failure,
        }
    }

    fn fail(&mut self, why: String) {
        tracing::warn!(session = %self.id, "session failed: {why}");
        let frame = self.termination(Some(why.clone()));
        self.failure = Some(why);
        for &role in self.state.task.roster() {
            self.push(role, frame.clone());
        }
    }

    fn push(&mut self, role: Role, body: FrameBody) {
        let ch = self.channels.get_mut(&role).expect("every roster role has a channel");
        let frame = EventFrame {
            seq: ch.frames.len() as u64 + 1,
            server_time: now_ms(),
            body,
        };
        ch.frames.push(frame.clone());
        // No receivers is fine: the frame stays in the log for later subscribers.
        let _ = ch.live.send(frame);
    }

    /// Asks the agent in the turn seat for an action on a blocking thread.
    fn kick(&mut self, done: &mpsc::UnboundedSender<AgentDone>) {
        if self.agent_busy || self.failure.is_some() || self.state.is_over() {
            return;
        }
        let role = turn_policy(&self.state);
        let Some(agent) = self.agents.get(&role).cloned() else { return };
        let request = match ActionRequest::build(&self.id, &self.state, &self.world, role) {
            Ok(r) => r,
            Err(e) => return self.fail(e.to_string()),
        };
        self.agent_busy = true;
        let state = self.state.clone();
        let world = self.world.clone();
        let budget = self.retry_budget;
        let done = done.clone();
        tokio::task::spawn_blocking(move || {
            let turn = state.transcript.len();
            let result = std::panic::catch_unwind(AssertUnwindSafe(|| {
                let mut agent = agent.lock().unwrap_or_else(PoisonError::into_inner);
                request_action(&mut **agent, request, &state, &world, budget, Origin::Agent)
            }))
            .unwrap_or_else(|_| Err(AgentError::Protocol("agent panicked".into()).into()));
            let _ = done.send(AgentDone { role, turn, result });
        });
    }

    fn agent_done(&mut self, done: AgentDone) {
        self.agent_busy = false;
        if self.failure.is_some() || self.state.is_over() {
            return;
        }
        if done.turn != self.state.transcript.len() {
            // Someone acted while the agent was thinking; it is asked again.
            tracing::debug!(session = %self.id, role = %done.role, "discarding stale agent action");
            return;
        }
        match done.result {
            Ok(accepted) => {
                let thought = accepted.transition.entry().action.kind == ActionKind::Think;
                let run = self.thinks.entry(done.role).or_default();
                *run = if thought { *run + 1 } else { 0 };
                if *run > MAX_CONSECUTIVE_THINKS {
                    return self.fail(format!(
                        "{} sent more than {MAX_CONSECUTIVE_THINKS} thoughts in a row",
                        done.role
                    ));
                }
                self.apply(accepted.transition);
            }
            Err(e) => self.fail(format!("{}: {e}", done.role)),
        }
    }

    fn view(&self, role: Role) -> Result<RoleView, ApiError> {
        Ok(RoleView {
            session_id: self.id.clone(),
            role,
            task: self.state.task,
            observation: dialenv_core::worldgen::render_observation(&self.world, role),
            view: AgentView::of(&self.world, role)
                .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "role has no view"))?,
            transcript: visible_transcript(&self.state, role),
            legal: legal_actions(&self.state, role).unwrap_or_default(),
            turn: turn_policy(&self.state),
            turn_mode: self.state.config.turn_mode,
            outcome: self.state.outcome,
            last_seq: self.channels[&role].frames.len() as u64,
        })
    }

    fn log(&self, raw: bool) -> Result<String, ApiError> {
        if !self.state.is_over() && self.failure.is_none() {
            return Err(ApiError::conflict("the log is available once the session has ended"));
        }
        let log = EpisodeLog::from_session(&self.state, &self.params, &self.world, self.failure.clone());
        let log = if self.state.config.turn_mode == TurnMode::Free && !raw {
            log.concatenate_turns()
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        } else {
            log
        };
        Ok(log.to_jsonl())
    }

    fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.id.clone(),
            task: self.state.task,
            seed: self.state.seed,
            created_at: self.created_at,
            turn_mode: self.state.config.turn_mode,
            outcome: self.state.outcome,
            actions: self.state.actions_taken,
            failure: self.failure.clone(),
            seats: self.seats.iter().map(|(&r, s)| (r, s.label())).collect(),
        }
    }
}
