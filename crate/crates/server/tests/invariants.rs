mod common;

use std::collections::BTreeSet;

use common::{leak_in, start, ticket, world_near, TestServer};
use dialenv_core::agents::{ActionRequest, Agent, AgentReply, RandomAgent};
use dialenv_core::dialogue::TurnMode;
use dialenv_core::{ActionKind, DialogueAction, EpisodeLog, Role, Task};
use dialenv_server::{ActionInput, CreateSession, CreatedSession, EventFrame, FrameBody, RoleView, Seat};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn request_from(view: &RoleView) -> ActionRequest {
    ActionRequest {
        session_id: view.session_id.clone(),
        turn: view.transcript.len(),
        task: view.task,
        role: view.role,
        observation: view.observation.clone(),
        view: view.view.clone(),
        transcript: view.transcript.clone(),
        legal: view.legal.clone(),
        error: None,
        notice: None,
        tool_calls: Vec::new(),
        must_propose: false,
    }
}

const WORDS: [&str; 8] = ["flight", "museum", "reviewer", "cheap", "Friday", "ok", "paper", "park"];

fn chatter(rng: &mut StdRng) -> String {
    let n = rng.random_range(1..6);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Plays a strict session with every seat remote. Each step the acting role
/// either follows a random agent or sends something arbitrary, and sometimes
/// another role tries to act out of turn.
async fn fuzz_session(server: &TestServer, task: Task, seed: u64, rng: &mut StdRng) -> CreatedSession {
    let mut req = CreateSession::new(task, task.roster().iter().map(|&r| (r, Seat::Remote)));
    req.seed = Some(seed);
    req.action_cap = Some(12);
    req.turn_mode = Some(TurnMode::Strict);
    let created = server.create(&req).await;
    let id = &created.session_id;
    let mut agent = RandomAgent::new(seed);
    let any = &ticket(&created, task.roster()[0]).token;
    for _ in 0..300 {
        let probe = server.view(id, any).await;
        if probe.outcome != dialenv_core::Outcome::Ongoing {
            break;
        }
        let role = probe.turn;
        let token = &ticket(&created, role).token;
        let view = server.view(id, token).await;
        let input = match rng.random_range(0..10) {
            0..=4 => match agent.act(&request_from(&view)).unwrap() {
                AgentReply::Action(a) => ActionInput { action: Some(a), line: None },
                other => panic!("random agent replied {other:?}"),
            },
            5 | 6 => {
                let mut a = DialogueAction::message(role, chatter(rng));
                if role == Role::Assistant && task == Task::Mediation {
                    a = a.to(if rng.random_bool(0.5) { Role::User0 } else { Role::User1 });
                }
                ActionInput { action: Some(a), line: None }
            }
            7 => ActionInput { action: None, line: Some(format!("[think] {}", chatter(rng))) },
            8 => ActionInput { action: None, line: Some("[reject]".into()) },
            _ => {
                let others: Vec<Role> = task.roster().iter().copied().filter(|&r| r != role).collect();
                let other = others[rng.random_range(0..others.len())];
                let (status, body) = server.line(id, &ticket(&created, other).token, "[message] me next").await;
                assert_eq!(status, 409, "{body}");
                assert_eq!(body["retriable"], true);
                continue;
            }
        };
        let (status, body) = server.post(id, token, input).await;
        assert!(status == 200 || status == 422, "{status} {body}");
    }
    created
}

fn feedback_indices(frames: &[EventFrame]) -> BTreeSet<usize> {
    frames
        .iter()
        .filter_map(|f| match &f.body {
            FrameBody::Feedback { index, .. } => Some(*index),
            _ => None,
        })
        .collect()
}

#[tokio::test]
async fn fuzzed_sessions_deliver_only_entitled_frames() {
    let server = start().await;
    let mut rng = StdRng::seed_from_u64(0x5e55);
    for task in Task::ALL {
        for base in [0, 40, 80] {
            let (seed, world) = world_near(task, base);
            let created = fuzz_session(&server, task, seed, &mut rng).await;
            let id = &created.session_id;
            let (status, text) = server.get(&format!("/sessions/{id}/log")).await;
            assert_eq!(status, 200, "{task} seed {seed} did not finish: {text}");
            let log = EpisodeLog::from_jsonl(&text).unwrap();
            log.replay().unwrap();
            for &role in task.roster() {
                let token = &ticket(&created, role).token;
                let frames = server.all_frames(id, token).await;
                // Gapless from 1.
                assert!(frames.iter().enumerate().all(|(i, f)| f.seq == i as u64 + 1));
                for f in &frames {
                    let payload = serde_json::to_value(f).unwrap();
                    assert_eq!(leak_in(&world, role, &payload), None, "{task} seed {seed}: {payload}");
                }
                // Events are exactly the log entries visible to this role, in
                // the order they were applied.
                let got: Vec<(usize, Role, ActionKind, &str)> = frames
                    .iter()
                    .filter_map(|f| match &f.body {
                        FrameBody::Event { event } => Some((event.index, event.sender, event.kind, event.text.as_str())),
                        _ => None,
                    })
                    .collect();
                let want: Vec<(usize, Role, ActionKind, &str)> = log
                    .events
                    .iter()
                    .filter(|e| e.visible_to.contains(&role))
                    .map(|e| (e.index, e.sender, e.kind, e.text.as_str()))
                    .collect();
                assert_eq!(got, want, "{task} seed {seed} {role}");
                let entitled: BTreeSet<usize> = log
                    .events
                    .iter()
                    .filter(|e| e.feedback.iter().any(|f| f.recipient == role))
                    .map(|e| e.index)
                    .collect();
                assert_eq!(feedback_indices(&frames), entitled, "{task} seed {seed} {role}");
                assert!(matches!(frames.last().unwrap().body, FrameBody::Termination { .. }));
            }
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_posts_are_seen_in_one_order() {
    let server = std::sync::Arc::new(start().await);
    let mut req = CreateSession::new(Task::Optimization, [(Role::Player0, Seat::Human), (Role::Player1, Seat::Human)]);
    req.action_cap = Some(1000);
    let created = server.create(&req).await;
    let id = created.session_id.clone();
    let mut tasks = Vec::new();
    for role in [Role::Player0, Role::Player1] {
        let server = server.clone();
        let id = id.clone();
        let token = ticket(&created, role).token.clone();
        tasks.push(tokio::spawn(async move {
            for i in 0..25 {
                server.act(&id, &token, DialogueAction::message(role, format!("{role} {i}"))).await;
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    let reference = server.view(&id, &ticket(&created, Role::Player0).token).await.transcript;
    assert_eq!(reference.len(), 50);
    for role in [Role::Player0, Role::Player1] {
        let frames = server.all_frames(&id, &ticket(&created, role).token).await;
        let seen: Vec<(usize, &str)> = frames
            .iter()
            .filter_map(|f| match &f.body {
                FrameBody::Event { event } => Some((event.index, event.text.as_str())),
                _ => None,
            })
            .collect();
        let want: Vec<(usize, &str)> = reference.iter().map(|e| (e.index, e.text.as_str())).collect();
        assert_eq!(seen, want);
        for sender in [Role::Player0, Role::Player1] {
            let own: Vec<&str> = seen.iter().map(|s| s.1).filter(|t| t.starts_with(sender.name())).collect();
            let expected: Vec<String> = (0..25).map(|i| format!("{sender} {i}")).collect();
            assert_eq!(own, expected);
        }
    }
}

#[tokio::test]
async fn reconnecting_resumes_after_the_last_sequence() {
    let server = start().await;
    let mut rng = StdRng::seed_from_u64(9);
    let (seed, _) = world_near(Task::Mediation, 21);
    let created = fuzz_session(&server, Task::Mediation, seed, &mut rng).await;
    let id = &created.session_id;
    for &role in Task::Mediation.roster() {
        let token = &ticket(&created, role).token;
        let all = server.all_frames(id, token).await;
        let n = all.len();
        assert!(n > 3);
        for after in 1..n {
            let tail = server.frames_until(id, token, after as u64, |f| f.len() == n - after).await;
            assert_eq!(tail, all[after..].to_vec(), "{role} after {after}");
        }
    }
}

#[tokio::test]
async fn live_subscribers_receive_new_frames_in_order() {
    use futures::StreamExt;
    let server = start().await;
    let req = CreateSession::new(Task::Optimization, [(Role::Player0, Seat::Human), (Role::Player1, Seat::Human)]);
    let created = server.create(&req).await;
    let id = &created.session_id;
    let p0 = &ticket(&created, Role::Player0).token;
    let p1 = &ticket(&created, Role::Player1).token;
    let mut ws = server.connect(id, p1, 0).await;
    let mut seqs = Vec::new();
    let mut texts = Vec::new();
    for i in 0..5 {
        server.act(id, p0, DialogueAction::message(Role::Player0, format!("m{i}"))).await;
    }
    while texts.len() < 5 {
        let msg = tokio::time::timeout(common::WAIT, ws.next()).await.unwrap().unwrap().unwrap();
        let frame: EventFrame = serde_json::from_str(msg.to_text().unwrap()).unwrap();
        seqs.push(frame.seq);
        if let FrameBody::Event { event } = frame.body {
            texts.push(event.text);
        }
    }
    assert_eq!(texts, ["m0", "m1", "m2", "m3", "m4"]);
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
    assert_eq!(seqs[0], 1);
}
