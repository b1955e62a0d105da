#![allow(dead_code)]

use std::time::Duration;

use dialenv_core::{generate, Role, Task, World};
use dialenv_server::{
    serve, ActionInput, CreateSession, CreatedSession, EventFrame, Posted, RoleView, ServerOptions, SessionTicket,
};
use futures::StreamExt;
use serde_json::Value;
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

pub const WAIT: Duration = Duration::from_secs(20);

pub struct TestServer {
    pub base: String,
    pub ws: String,
    pub http: reqwest::Client,
}

pub async fn start() -> TestServer {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, ServerOptions::default()));
    TestServer {
        base: format!("http://{addr}"),
        ws: format!("ws://{addr}"),
        http: reqwest::Client::new(),
    }
}

/// First seed at or after `seed` that generates a world.
pub fn world_near(task: Task, seed: u64) -> (u64, World) {
    let params = task.default_params();
    (seed..)
        .find_map(|s| generate(&params, s).ok().map(|w| (s, w)))
        .expect("some seed generates")
}

pub fn ticket(created: &CreatedSession, role: Role) -> &SessionTicket {
    created
        .tickets
        .iter()
        .find(|t| t.role == role)
        .unwrap_or_else(|| panic!("no ticket for {role}"))
}

impl TestServer {
    pub async fn create_raw(&self, body: &Value) -> (u16, Value) {
        let r = self.http.post(format!("{}/sessions", self.base)).json(body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    pub async fn create(&self, req: &CreateSession) -> CreatedSession {
        let (status, body) = self.create_raw(&serde_json::to_value(req).unwrap()).await;
        assert_eq!(status, 201, "{body}");
        serde_json::from_value(body).unwrap()
    }

    pub async fn post(&self, id: &str, token: &str, input: ActionInput) -> (u16, Value) {
        let mut body = serde_json::to_value(&input).unwrap();
        body["token"] = token.into();
        let r = self
            .http
            .post(format!("{}/sessions/{id}/actions", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    /// Posts an action that must be accepted.
    pub async fn act(&self, id: &str, token: &str, action: dialenv_core::DialogueAction) -> Posted {
        let (status, body) = self.post(id, token, ActionInput { action: Some(action), line: None }).await;
        assert_eq!(status, 200, "{body}");
        serde_json::from_value(body).unwrap()
    }

    pub async fn line(&self, id: &str, token: &str, line: &str) -> (u16, Value) {
        self.post(id, token, ActionInput { action: None, line: Some(line.into()) }).await
    }

    pub async fn view(&self, id: &str, token: &str) -> RoleView {
        let r = self
            .http
            .get(format!("{}/sessions/{id}/view", self.base))
            .query(&[("token", token)])
            .send()
            .await
            .unwrap();
        assert_eq!(r.status().as_u16(), 200);
        r.json().await.unwrap()
    }

    pub async fn get(&self, path: &str) -> (u16, String) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.text().await.unwrap())
    }

    pub async fn connect(
        &self,
        id: &str,
        token: &str,
        after: u64,
    ) -> tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>> {
        let url = format!("{}/sessions/{id}/stream?token={token}&after={after}", self.ws);
        tokio_tungstenite::connect_async(url).await.unwrap().0
    }

    /// Reads frames from a fresh stream until `done` holds.
    pub async fn frames_until(
        &self,
        id: &str,
        token: &str,
        after: u64,
        done: impl Fn(&[EventFrame]) -> bool,
    ) -> Vec<EventFrame> {
        let mut ws = self.connect(id, token, after).await;
        let mut out = Vec::new();
        tokio::time::timeout(WAIT, async {
            while !done(&out) {
                match ws.next().await {
                    Some(Ok(Message::Text(t))) => out.push(serde_json::from_str(t.as_str()).unwrap()),
                    Some(Ok(_)) => {}
                    other => panic!("stream ended: {other:?}"),
                }
            }
        })
        .await
        .unwrap_or_else(|_| panic!("timed out; got {out:#?}"));
        out
    }

    /// All frames stored for a role right now.
    pub async fn all_frames(&self, id: &str, token: &str) -> Vec<EventFrame> {
        let last = self.view(id, token).await.last_seq;
        self.frames_until(id, token, 0, |f| f.len() as u64 >= last).await
    }
}

/// Every object key anywhere in a JSON value.
pub fn json_keys(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                out.push(k.clone());
                json_keys(x, out);
            }
        }
        Value::Array(xs) => xs.iter().for_each(|x| json_keys(x, out)),
        _ => {}
    }
}

fn scan_cells(v: &Value, f: &mut dyn FnMut(&Vec<Value>)) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                match (k.as_str(), x) {
                    ("cells", Value::Array(rows)) => f(rows),
                    _ => scan_cells(x, f),
                }
            }
        }
        Value::Array(xs) => xs.iter().for_each(|x| scan_cells(x, f)),
        _ => {}
    }
}

/// Describes the first hidden field in a payload meant for `role`: weight
/// and price parameters, raw tables and masks, importances for the
/// Mediation assistant, and unobserved Optimization cells.
pub fn leak_in(world: &World, role: Role, payload: &Value) -> Option<String> {
    let mut keys = Vec::new();
    json_keys(payload, &mut keys);
    let mut forbidden = vec![
        "theta_price", "theta_arrival", "weight", "weights", "price_mu", "table", "masks", "private_events",
    ];
    if role == Role::Assistant {
        forbidden.extend(["importance", "private_calendar", "preferences"]);
    }
    if let Some(k) = keys.iter().find(|k| forbidden.contains(&k.as_str())) {
        return Some(format!("key '{k}' sent to {role}"));
    }
    if let (World::Optimization(w), Some(player)) = (world, role.user_index()) {
        let mut found = None;
        scan_cells(payload, &mut |cells: &Vec<Value>| {
            for (r, row) in cells.iter().enumerate() {
                for (p, c) in row.as_array().into_iter().flatten().enumerate() {
                    if !c.is_null() && !w.masks[player][r][p] {
                        found = Some(format!("hidden cell ({r},{p}) sent to {role}"));
                    }
                }
            }
        });
        return found;
    }
    None
}
