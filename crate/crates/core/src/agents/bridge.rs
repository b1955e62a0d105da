//! Line-delimited JSON bridge to an out-of-process agent.
//!
//! Each request is one JSON [`ActionRequest`] line. The agent answers with
//! one JSON line carrying `session_id`, `turn` and exactly one of:
//!
//! - `action`: a structured action (`kind`, `sender`, `recipient`, `text`, `proposal`)
//! - `line`: the action as typed text, e.g. `"[message] Hi there"`
//! - `query`: a `Search(...)` call
//!
//! Replies for another session or an earlier turn are discarded. Addresses
//! are `tcp:HOST:PORT` or `cmd:PROGRAM ARGS...` (no shell).

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ActionRequest, Agent, AgentError, AgentReply};
use crate::dialogue::DialogueAction;

pub const BRIDGE_TIMEOUT_ENV: &str = "DIALENV_BRIDGE_TIMEOUT_MS";
pub const DEFAULT_BRIDGE_TIMEOUT_MS: u64 = 30_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireReply {
    pub session_id: String,
    pub turn: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<DialogueAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
}

pub struct ExternalAgent {
    address: String,
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
}

fn timeout_from_env() -> Duration {
    let ms = std::env::var(BRIDGE_TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_BRIDGE_TIMEOUT_MS);
    Duration::from_millis(ms)
}

fn spawn_reader(source: impl std::io::Read + Send + 'static) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(source).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl ExternalAgent {
    pub fn connect(address: &str) -> Result<Self, AgentError> {
        let transport = |e: std::io::Error| AgentError::Transport(format!("{address}: {e}"));
        if let Some(target) = address.strip_prefix("tcp:") {
            let stream = TcpStream::connect(target).map_err(transport)?;
            let reader = stream.try_clone().map_err(transport)?;
            Ok(ExternalAgent {
                address: address.to_string(),
                writer: Box::new(stream),
                lines: spawn_reader(reader),
                child: None,
                timeout: timeout_from_env(),
            })
        } else if let Some(cmd) = address.strip_prefix("cmd:") {
            let mut parts = cmd.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| AgentError::Transport("cmd: address names no program".into()))?;
            let mut child = Command::new(program)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(transport)?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Ok(ExternalAgent {
                address: address.to_string(),
                writer: Box::new(stdin),
                lines: spawn_reader(stdout),
                child: Some(child),
                timeout: timeout_from_env(),
            })
        } else {
            Err(AgentError::Transport(format!(
                "unsupported agent address '{address}' (use tcp:HOST:PORT or cmd:PROGRAM)"
            )))
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn send(&mut self, request: &ActionRequest) -> Result<(), AgentError> {
        let mut line = serde_json::to_string(request).map_err(|e| AgentError::Protocol(e.to_string()))?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| AgentError::Transport(format!("{}: {e}", self.address)))
    }
}

/// Turns a wire reply into an agent reply, flagging malformed content so the
/// retry loop can explain it to the agent.
fn interpret(reply: WireReply, request: &ActionRequest) -> AgentReply {
    match (reply.action, reply.line, reply.query) {
        (Some(action), None, None) => AgentReply::Action(action),
        (None, Some(line), None) => match DialogueAction::parse_line(request.role, &line) {
            Ok(action) => AgentReply::Action(action),
            Err(e) => AgentReply::Invalid(e.to_string()),
        },
        (None, None, Some(query)) => AgentReply::Query(query),
        _ => AgentReply::Invalid("Send exactly one of action, line or query.".into()),
    }
}

impl Agent for ExternalAgent {
    fn act(&mut self, request: &ActionRequest) -> Result<AgentReply, AgentError> {
        self.send(request)?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(remaining) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(AgentError::Transport(format!("{}: {e}", self.address))),
                Err(RecvTimeoutError::Timeout) => return Err(AgentError::Timeout(self.timeout.as_millis() as u64)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(AgentError::Transport(format!("{}: connection closed", self.address)))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let reply: WireReply = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => return Ok(AgentReply::Invalid(format!("Could not read your reply: {e}"))),
            };
            if reply.session_id != request.session_id || reply.turn != request.turn {
                // Late answer to an earlier request.
                continue;
            }
            return Ok(interpret(reply, request));
        }
    }

    fn describe(&self) -> String {
        format!("external({})", self.address)
    }
}

impl Drop for ExternalAgent {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
