//! Built-in agents: a random proposer, a solver-backed oracle and a scripted
//! reply queue for tests.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActionRequest, Agent, AgentError, AgentReply};
use crate::dialogue::{ActionKind, DialogueAction, Proposal};
use crate::scoring::evaluate;
use crate::solvers::{best_worst_flightpair, best_worst_itinerary, pooled_best};
use crate::task::Role;
use crate::worldgen::{AgentView, World};

/// Small talk for turns where an agent has nothing to decide.
fn filler(role: Role) -> DialogueAction {
    DialogueAction::message(role, "Sounds good to me.")
}

fn role_salt(role: Role) -> u64 {
    match role {
        Role::Player0 => 1,
        Role::Player1 => 2,
        Role::User => 3,
        Role::Assistant => 4,
        Role::User0 => 5,
        Role::User1 => 6,
    }
}

/// Proposes a uniformly random full decision as soon as it may, and accepts
/// whatever it is offered.
///
/// The random stream for each turn is derived from `(seed, role, turn)`, so
/// the agent's behaviour is a pure function of its seed and the transcript.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    pub seed: u64,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent { seed }
    }

    fn rng(&self, role: Role, turn: usize) -> ChaCha8Rng {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(role_salt(role) << 48)
            .wrapping_add(turn as u64);
        ChaCha8Rng::seed_from_u64(mixed)
    }
}

/// A uniformly random full decision for the proposing view.
pub(crate) fn random_decision(view: &AgentView, rng: &mut ChaCha8Rng) -> Option<Proposal> {
    match view {
        AgentView::Optimization { reviewers, .. } => {
            let mut perm: Vec<usize> = (0..reviewers.len()).collect();
            perm.shuffle(rng);
            Some(Proposal::Matching(perm))
        }
        AgentView::PlanningAssistant { k, sites } => {
            let mut ids: Vec<usize> = (0..sites.len()).collect();
            ids.shuffle(rng);
            Some(Proposal::Itinerary(ids[..*k].iter().map(|&i| Some(i)).collect()))
        }
        AgentView::MediationAssistant { users } => Some(Proposal::Flights(
            users
                .iter()
                .map(|u| Some(rng.random_range(0..u.flights.len())))
                .collect(),
        )),
        _ => None,
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, request: &ActionRequest) -> Result<AgentReply, AgentError> {
        let role = request.role;
        if request.legal.contains(&ActionKind::Accept) {
            return Ok(AgentReply::Action(DialogueAction::accept(role)));
        }
        if request.legal.contains(&ActionKind::Propose) {
            let mut rng = self.rng(role, request.turn);
            if let Some(p) = random_decision(&request.view, &mut rng) {
                return Ok(AgentReply::Action(DialogueAction::propose(role, p)));
            }
        }
        Ok(AgentReply::Action(filler_for(request)))
    }

    fn describe(&self) -> String {
        format!("random(seed={})", self.seed)
    }
}

/// Filler addressed correctly for the task (the Mediation assistant must
/// name a user).
fn filler_for(request: &ActionRequest) -> DialogueAction {
    let action = filler(request.role);
    if matches!(request.view, AgentView::MediationAssistant { .. }) {
        action.to(Role::User0)
    } else {
        action
    }
}

/// Sees the whole world. Proposes the solver optimum and accepts only
/// proposals that are optimal. Diagnostic use only.
#[derive(Clone, Debug)]
pub struct OracleAgent {
    world: Arc<World>,
    best: Proposal,
}

/// The normalizing optimum of a world as a proposal.
pub fn optimal_proposal(world: &World) -> Proposal {
    match world {
        World::Optimization(w) => Proposal::Matching(pooled_best(w).decision),
        World::Planning(w) => {
            let (best, _) = best_worst_itinerary(w).expect("generated worlds are solvable");
            Proposal::Itinerary(best.decision.into_iter().map(Some).collect())
        }
        World::Mediation(w) => {
            let (best, _) = best_worst_flightpair(w);
            Proposal::Flights(best.decision.iter().map(|&f| Some(f)).collect())
        }
    }
}

impl OracleAgent {
    pub fn new(world: Arc<World>) -> Self {
        let best = optimal_proposal(&world);
        OracleAgent { world, best }
    }

    pub fn best(&self) -> &Proposal {
        &self.best
    }

    fn approves(&self, proposal: &Proposal) -> bool {
        if proposal.is_full() {
            return evaluate(&self.world, proposal).is_ok_and(|s| s.normalized >= 1.0 - 1e-9);
        }
        match (proposal, &self.best) {
            (Proposal::Flights(got), Proposal::Flights(best)) => got
                .iter()
                .zip(best)
                .all(|(g, b)| g.is_none() || g == b),
            _ => false,
        }
    }
}

impl Agent for OracleAgent {
    fn act(&mut self, request: &ActionRequest) -> Result<AgentReply, AgentError> {
        let role = request.role;
        if request.legal.contains(&ActionKind::Accept) {
            let pending = request
                .transcript
                .iter()
                .rev()
                .find(|e| e.kind == ActionKind::Propose)
                .and_then(|e| e.proposal.as_ref());
            let ok = pending.is_some_and(|p| self.approves(p));
            let action = if ok {
                DialogueAction::accept(role)
            } else {
                DialogueAction::reject(role)
            };
            return Ok(AgentReply::Action(action));
        }
        if request.legal.contains(&ActionKind::Propose) {
            return Ok(AgentReply::Action(DialogueAction::propose(role, self.best.clone())));
        }
        Ok(AgentReply::Action(filler_for(request)))
    }

    fn describe(&self) -> String {
        "oracle".into()
    }
}

/// Plays back a fixed list of replies and records every request it sees.
#[derive(Clone, Debug, Default)]
pub struct ScriptedAgent {
    replies: VecDeque<AgentReply>,
    pub seen: Vec<ActionRequest>,
}

impl ScriptedAgent {
    pub fn new(replies: impl IntoIterator<Item = AgentReply>) -> Self {
        ScriptedAgent {
            replies: replies.into_iter().collect(),
            seen: Vec::new(),
        }
    }

    /// Replies given as `[kind] text` lines for one role.
    pub fn from_lines(role: Role, lines: &[&str]) -> Self {
        Self::new(lines.iter().map(|l| {
            AgentReply::Action(DialogueAction::parse_line(role, l).expect("scripted line parses"))
        }))
    }

    pub fn remaining(&self) -> usize {
        self.replies.len()
    }
}

impl Agent for ScriptedAgent {
    fn act(&mut self, request: &ActionRequest) -> Result<AgentReply, AgentError> {
        self.seen.push(request.clone());
        self.replies
            .pop_front()
            .ok_or_else(|| AgentError::Protocol("script exhausted".into()))
    }

    fn describe(&self) -> String {
        "scripted".into()
    }
}
