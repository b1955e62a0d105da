//! Agents, the revision loop and the line-delimited bridge.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use dialenv_core::agents::{
    request_action, ActionRequest, Agent, AgentError, AgentReply, ExternalAgent, OracleAgent, RandomAgent,
    RequestError, ScriptedAgent, WireReply,
};
use dialenv_core::dialogue::{DialogueAction, Origin, Proposal, SessionConfig, SessionState};
use dialenv_core::harness::{run_selfplay, AgentSpec, RunConfig};
use dialenv_core::scoring::evaluate;
use dialenv_core::solvers::{best_worst_itinerary, pooled_best};
use dialenv_core::{submit_action, Role, Task, World};
use proptest::prelude::*;

mod common;
use common::*;

fn session(task: Task, seed: u64) -> (SessionState, World) {
    let (seed, world) = world_near(task, seed);
    (SessionState::new(task, seed, SessionConfig::for_task(task)), world)
}

fn request(state: &SessionState, world: &World, role: Role) -> ActionRequest {
    ActionRequest::build("test-0", state, world, role).unwrap()
}

#[test]
fn repeated_reviewer_is_revised_after_one_error() {
    let (state, world) = session(Task::Optimization, 0);
    let World::Optimization(w) = &world else { unreachable!() };
    let mut bad: Vec<usize> = (0..8).collect();
    bad[3] = 0;
    let good: Vec<usize> = (0..8).rev().collect();
    let mut agent = ScriptedAgent::new([
        AgentReply::Action(DialogueAction::propose(Role::Player0, Proposal::Matching(bad))),
        AgentReply::Action(DialogueAction::propose(Role::Player0, Proposal::Matching(good.clone()))),
    ]);
    let out = request_action(&mut agent, request(&state, &world, Role::Player0), &state, &world, 3, Origin::Agent).unwrap();
    assert_eq!(out.refused, 1);
    assert_eq!(agent.seen.len(), 2);
    assert!(agent.seen[0].error.is_none());
    let err = agent.seen[1].error.as_deref().unwrap();
    assert!(err.starts_with("Invalid proposal:"), "{err}");
    assert!(err.contains(&w.reviewers[0]) || err.contains(w.paper_short(3)), "{err}");
    assert_eq!(out.transition.entry().action.proposal, Some(Proposal::Matching(good)));
}

#[test]
fn planning_user_cannot_propose() {
    let (state, world) = session(Task::Planning, 0);
    let mut agent = ScriptedAgent::from_lines(Role::User, &["[propose] [NULL, NULL, NULL]", "[message] Hi there!"]);
    let out = request_action(&mut agent, request(&state, &world, Role::User), &state, &world, 3, Origin::Agent).unwrap();
    let err = agent.seen[1].error.as_deref().unwrap();
    assert!(err.starts_with("You cannot send [propose]"), "{err}");
    assert_eq!(out.transition.entry().action.text, "Hi there!");
}

#[test]
fn well_formed_reply_is_one_round_trip() {
    let (state, world) = session(Task::Mediation, 0);
    let mut agent = ScriptedAgent::from_lines(Role::User0, &["[message] I have a meeting Friday."]);
    let out = request_action(&mut agent, request(&state, &world, Role::User0), &state, &world, 3, Origin::Agent).unwrap();
    assert_eq!(out.refused, 0);
    assert_eq!(agent.seen.len(), 1);
    assert_eq!(agent.remaining(), 0);
}

#[test]
fn wrong_sender_and_budget_exhaustion() {
    let (state, world) = session(Task::Optimization, 0);
    let mut agent = ScriptedAgent::new(vec![AgentReply::Action(DialogueAction::message(Role::Player1, "hi")); 5]);
    let e = request_action(&mut agent, request(&state, &world, Role::Player0), &state, &world, 3, Origin::Agent).unwrap_err();
    let RequestError::RetriesExhausted { attempts, last_error, .. } = e else { panic!("{e:?}") };
    assert_eq!(attempts, 3);
    assert_eq!(agent.seen.len(), 3);
    assert!(last_error.contains("player 1") || last_error.contains("Player1") || last_error.contains("sent as"), "{last_error}");
}

#[test]
fn searches_feed_the_next_request() {
    let (state, world) = session(Task::Planning, 0);
    let state = submit_action(&state, &world, DialogueAction::message(Role::User, "Find me food.")).unwrap().state;
    let mut agent = ScriptedAgent::new([
        AgentReply::Query("Search(fields=[name], filters=[category == restaurant], sort_by=[price])".into()),
        AgentReply::Action(DialogueAction::message(Role::Assistant, "Got some options.")),
    ]);
    let out = request_action(&mut agent, request(&state, &world, Role::Assistant), &state, &world, 1, Origin::Agent).unwrap();
    assert_eq!(out.refused, 0);
    assert_eq!(agent.seen[1].tool_calls.len(), 1);
    assert!(!agent.seen[1].tool_calls[0].result.is_empty());

    // Users have no search tool.
    let (state, world) = session(Task::Planning, 0);
    let mut agent = ScriptedAgent::new([AgentReply::Query("Search(fields=[name])".into())]);
    let e = request_action(&mut agent, request(&state, &world, Role::User), &state, &world, 1, Origin::Agent).unwrap_err();
    assert!(e.to_string().contains("cannot use the search tool"), "{e}");
}

/// Replies drawn from a mix of junk, wrong senders and legal actions.
fn arb_reply(role: Role) -> impl Strategy<Value = AgentReply> {
    prop_oneof![
        "[a-z ]{0,12}".prop_map(AgentReply::Invalid),
        Just(AgentReply::Action(DialogueAction::accept(role))),
        Just(AgentReply::Action(DialogueAction::message(Role::Player1, "not me"))),
        Just(AgentReply::Action(DialogueAction::message(role, ""))),
        Just(AgentReply::Action(DialogueAction::message(role, "fine"))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retry_loop_stays_within_budget(replies in proptest::collection::vec(arb_reply(Role::Player0), 0..12), budget in 1usize..6) {
        let (state, world) = session(Task::Optimization, 0);
        let mut agent = ScriptedAgent::new(replies.clone());
        let result = request_action(&mut agent, request(&state, &world, Role::Player0), &state, &world, budget, Origin::Agent);
        prop_assert!(agent.seen.len() <= budget);
        let first_good = replies.iter().position(|r| *r == AgentReply::Action(DialogueAction::message(Role::Player0, "fine")));
        match first_good {
            Some(i) if i < budget => {
                let out = result.unwrap();
                prop_assert_eq!(out.refused, i);
            }
            _ => prop_assert!(result.is_err()),
        }
    }
}

#[test]
fn random_agents_are_deterministic_and_legal() {
    for task in Task::ALL {
        let (state, world) = session(task, 1);
        let proposer = *task.roster().iter().find(|&&r| task.can_propose(r)).unwrap();
        let state = if task.roster()[0] != proposer {
            let first = task.roster()[0];
            submit_action(&state, &world, DialogueAction::message(first, "hi")).unwrap().state
        } else {
            state
        };
        let state = if task == Task::Mediation {
            submit_action(&state, &world, DialogueAction::message(Role::User1, "hi")).unwrap().state
        } else {
            state
        };
        let req = request(&state, &world, proposer);
        let a = RandomAgent::new(9).act(&req).unwrap();
        let b = RandomAgent::new(9).act(&req).unwrap();
        assert_eq!(a, b);
        let AgentReply::Action(action) = a else { panic!() };
        let p = action.proposal.clone().unwrap();
        assert!(p.is_full());
        if let Proposal::Itinerary(slots) = &p {
            let mut s: Vec<_> = slots.iter().flatten().collect();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), slots.len());
        }
        submit_action(&state, &world, action).unwrap();
    }
}

#[test]
fn random_optimization_proposals_cover_permutations_uniformly() {
    let (state, world) = session(Task::Optimization, 0);
    let req = request(&state, &world, Role::Player0);
    let mut first = [0usize; 8];
    let n = 4000;
    for seed in 0..n {
        let AgentReply::Action(a) = RandomAgent::new(seed).act(&req).unwrap() else { panic!() };
        let Some(Proposal::Matching(p)) = a.proposal else { panic!() };
        first[p[0]] += 1;
    }
    // Chi-square on the first slot, 7 degrees of freedom, 0.001 critical value 24.32.
    let e = n as f64 / 8.0;
    let chi: f64 = first.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    assert!(chi < 24.32, "chi-square {chi} for {first:?}");
}

#[test]
fn oracle_proposes_solver_optima() {
    let (_, world) = world_near(Task::Optimization, 3);
    let World::Optimization(w) = &world else { unreachable!() };
    assert_eq!(OracleAgent::new(Arc::new(world.clone())).best(), &Proposal::Matching(pooled_best(w).decision));

    let (_, world) = world_near(Task::Planning, 3);
    let World::Planning(w) = &world else { unreachable!() };
    let (best, _) = best_worst_itinerary(w).unwrap();
    assert_eq!(
        OracleAgent::new(Arc::new(world.clone())).best(),
        &Proposal::Itinerary(best.decision.into_iter().map(Some).collect())
    );

    for seed in 0..10 {
        let (_, world) = world_near(Task::Mediation, seed);
        let World::Mediation(w) = &world else { unreachable!() };
        let pairs = all_flight_pairs(w);
        let max = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let oracle = OracleAgent::new(Arc::new(world.clone()));
        let Proposal::Flights(slots) = oracle.best() else { panic!() };
        let chosen = [slots[0].unwrap(), slots[1].unwrap()];
        assert!((flights_oracle(w, chosen) - max).abs() < 1e-9);
        assert_eq!(evaluate(&world, oracle.best()).unwrap().normalized, 1.0);
    }
}

#[test]
fn oracle_rejects_suboptimal_proposals() {
    let (state, world) = session(Task::Optimization, 0);
    let mut oracle = OracleAgent::new(Arc::new(world.clone()));
    let Proposal::Matching(best) = oracle.best().clone() else { panic!() };
    let mut worse = best.clone();
    worse.swap(0, 1);
    for (p, expect_accept) in [(worse, false), (best, true)] {
        let s = submit_action(&state, &world, DialogueAction::propose(Role::Player0, Proposal::Matching(p))).unwrap().state;
        let AgentReply::Action(a) = oracle.act(&request(&s, &world, Role::Player1)).unwrap() else { panic!() };
        let accept = a.kind == dialenv_core::ActionKind::Accept;
        // A swap may tie with the optimum; only a strictly worse swap must be refused.
        let tie = evaluate(&world, s.pending.as_ref().map(|x| &x.proposal).unwrap()).unwrap().normalized >= 1.0 - 1e-9;
        assert_eq!(accept, expect_accept || tie);
    }
}

#[test]
fn requests_never_leak_hidden_fields() {
    for task in Task::ALL {
        for seed in 0..6 {
            let (seed, world) = world_near(task, seed);
            let (states, _) = fuzz_session(task, &world, seed, 120, dialenv_core::dialogue::TurnMode::Strict);
            for s in states.iter().filter(|s| !s.is_over()) {
                for &role in task.roster() {
                    let req = request(s, &world, role);
                    let json = serde_json::to_value(&req).unwrap();
                    assert_eq!(leak_in(&world, role, &json), None, "{task} seed {seed}");
                    // Exactly the role-visible events, with only the role's own scorecards.
                    let visible: Vec<usize> = s.visible_to(role).map(|e| e.index).collect();
                    assert_eq!(req.transcript.iter().map(|e| e.index).collect::<Vec<_>>(), visible);
                    for e in &req.transcript {
                        let own = s.transcript[e.index].feedback.iter().find(|f| f.recipient == role).map(|f| &f.text);
                        assert_eq!(e.feedback.as_ref(), own);
                    }
                }
            }
        }
    }
}

/// A one-connection TCP agent. `respond` maps each request to the reply
/// lines to write (possibly several, possibly none).
fn tcp_agent(respond: impl Fn(&ActionRequest) -> Vec<String> + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            let req: ActionRequest = serde_json::from_str(&line).unwrap();
            for out in respond(&req) {
                writeln!(writer, "{out}").unwrap();
            }
            writer.flush().unwrap();
        }
    });
    format!("tcp:{addr}")
}

fn wire(req: &ActionRequest, turn: usize, line: &str) -> String {
    serde_json::to_string(&WireReply {
        session_id: req.session_id.clone(),
        turn,
        action: None,
        line: Some(line.into()),
        query: None,
    })
    .unwrap()
}

#[test]
fn bridge_round_trip_over_tcp() {
    let addr = tcp_agent(|req| vec![wire(req, req.turn, "[message] Hello from afar")]);
    let mut agent = ExternalAgent::connect(&addr).unwrap();
    let (state, world) = session(Task::Planning, 0);
    let out = request_action(&mut agent, request(&state, &world, Role::User), &state, &world, 3, Origin::Agent).unwrap();
    assert_eq!(out.transition.entry().action.text, "Hello from afar");
    assert!(agent.describe().starts_with("external(tcp:"));
}

#[test]
fn bridge_discards_stale_replies() {
    let addr = tcp_agent(|req| {
        let mut stale = wire(req, req.turn + 7, "[message] stale");
        stale.push('\n');
        stale.push_str(&serde_json::to_string(&WireReply {
            session_id: "other-session".into(),
            turn: req.turn,
            action: None,
            line: Some("[message] wrong session".into()),
            query: None,
        }).unwrap());
        vec![stale, wire(req, req.turn, "[message] fresh")]
    });
    let mut agent = ExternalAgent::connect(&addr).unwrap();
    let (state, world) = session(Task::Optimization, 0);
    let AgentReply::Action(a) = agent.act(&request(&state, &world, Role::Player0)).unwrap() else { panic!() };
    assert_eq!(a.text, "fresh");
}

#[test]
fn bridge_reports_malformed_replies_for_revision() {
    let addr = tcp_agent(|req| {
        if req.error.is_none() {
            vec!["not json".into()]
        } else {
            vec![wire(req, req.turn, "[message] sorry")]
        }
    });
    let mut agent = ExternalAgent::connect(&addr).unwrap();
    let (state, world) = session(Task::Optimization, 0);
    let out = request_action(&mut agent, request(&state, &world, Role::Player0), &state, &world, 3, Origin::Agent).unwrap();
    assert_eq!(out.refused, 1);
}

#[test]
fn bridge_times_out() {
    let addr = tcp_agent(|_| Vec::new());
    let mut agent = ExternalAgent::connect(&addr).unwrap().with_timeout(Duration::from_millis(150));
    let (state, world) = session(Task::Optimization, 0);
    let e = agent.act(&request(&state, &world, Role::Player0)).unwrap_err();
    assert!(matches!(e, AgentError::Timeout(150)));
    assert!(e.is_retriable());
}

#[test]
fn unreachable_and_unknown_addresses() {
    let e = ExternalAgent::connect("tcp:127.0.0.1:1").err().unwrap();
    assert!(matches!(e, AgentError::Transport(_)));
    let e = ExternalAgent::connect("carrier-pigeon:coop").err().unwrap();
    assert!(e.to_string().contains("unsupported agent address"));
}

#[test]
fn external_agents_play_through_the_harness() {
    let addr = tcp_agent(|req| {
        let line = if req.legal.contains(&dialenv_core::ActionKind::Accept) {
            "[accept]".to_string()
        } else {
            "[message] ok".to_string()
        };
        vec![wire(req, req.turn, &line)]
    });
    let mut config = RunConfig::new(Task::Planning);
    config.seeds = vec![4];
    config.agents.insert(Role::User, addr.parse::<AgentSpec>().unwrap());
    config.agents.insert(Role::Assistant, AgentSpec::Oracle);
    let out = run_selfplay(&config).unwrap();
    assert_eq!(out.summary.terminated, 1, "{:?}", out.summary);
    assert_eq!(out.logs[0].footer.normalized_reward, Some(1.0));
}
