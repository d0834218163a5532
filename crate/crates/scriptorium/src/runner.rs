//! Engine side of the script-runner protocol.
//!
//! A runner is a child process speaking line-delimited JSON over its
//! standard streams. The engine opens with
//! `{"hello": {"entrypoint": ..., "k": ...}}` and expects `{"ready": true}`
//! (or `{"error": ...}`). Each request `{"id", "text"}` gets exactly one
//! response `{"id", "label"}`, optionally with an `"error"` string when the
//! script raised. Closing stdin ends the session.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Runtime id → command prefix. The script path and entrypoint are appended
/// as the last two arguments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunnerRegistry {
    runners: BTreeMap<String, Vec<String>>,
}

impl RunnerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, runtime_id: impl Into<String>, command: Vec<String>) {
        self.runners.insert(runtime_id.into(), command);
    }

    pub fn get(&self, runtime_id: &str) -> Result<&[String]> {
        self.runners
            .get(runtime_id)
            .map(Vec::as_slice)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::UnknownRunner(runtime_id.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.runners.is_empty()
    }
}

/// Why a single call produced no vote.
#[derive(Debug, Clone, PartialEq)]
pub enum CallError {
    Timeout,
    /// The script raised; the runner reported it and keeps serving.
    Script(String),
    /// The runner exited or closed its output.
    Died,
    /// The reply was not a well-formed response to this request.
    Protocol(String),
}

#[derive(Serialize)]
struct Hello<'a> {
    hello: HelloBody<'a>,
}

#[derive(Serialize)]
struct HelloBody<'a> {
    entrypoint: &'a str,
    k: usize,
}

#[derive(Serialize)]
struct Request<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: Option<String>,
    label: Option<serde_json::Value>,
    error: Option<String>,
}

pub struct RunnerSession {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    timeout: Duration,
}

impl RunnerSession {
    /// Spawns the runner and completes the handshake.
    pub fn start(command: &[String], script: &Path, entrypoint: &str, k: usize, timeout: Duration) -> Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| Error::Handshake("empty runner command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .arg(script)
            .arg(entrypoint)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Handshake(format!("cannot launch {program}: {e}")))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session = Self { stdin: child.stdin.take(), child, lines, timeout };
        let hello = serde_json::to_string(&Hello { hello: HelloBody { entrypoint, k } }).expect("hello serializes");
        if session.send(&hello).is_err() {
            session.kill();
            return Err(Error::Handshake("runner closed its input".into()));
        }
        let reply = match session.lines.recv_timeout(timeout) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                session.kill();
                return Err(Error::Handshake("no reply within timeout".into()));
            }
            Err(RecvTimeoutError::Disconnected) => {
                session.kill();
                return Err(Error::Handshake("runner exited during handshake".into()));
            }
        };
        let value: serde_json::Value = serde_json::from_str(&reply)
            .map_err(|e| Error::Handshake(format!("bad handshake reply {reply:?}: {e}")))?;
        if value.get("ready") == Some(&serde_json::Value::Bool(true)) {
            return Ok(session);
        }
        session.kill();
        let reason = value.get("error").and_then(|e| e.as_str()).unwrap_or("unexpected reply");
        Err(Error::Handshake(reason.to_string()))
    }

    fn send(&mut self, line: &str) -> std::io::Result<()> {
        let stdin = self.stdin.as_mut().ok_or(std::io::ErrorKind::BrokenPipe)?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()
    }

    /// Sends one document and waits for its label (the raw integer, not yet
    /// range-checked).
    pub fn call(&mut self, id: &str, text: &str) -> std::result::Result<i64, CallError> {
        let request = serde_json::to_string(&Request { id, text }).expect("request serializes");
        self.send(&request).map_err(|_| CallError::Died)?;
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => return Err(CallError::Timeout),
            Err(RecvTimeoutError::Disconnected) => return Err(CallError::Died),
        };
        let response: Response =
            serde_json::from_str(&line).map_err(|e| CallError::Protocol(format!("{line:?}: {e}")))?;
        if response.id.as_deref() != Some(id) {
            return Err(CallError::Protocol(format!("expected id {id:?}, got {:?}", response.id)));
        }
        if let Some(message) = response.error {
            return Err(CallError::Script(message));
        }
        response
            .label
            .as_ref()
            .and_then(serde_json::Value::as_i64)
            .ok_or_else(|| CallError::Protocol(format!("label is not an integer in {line:?}")))
    }

    pub fn kill(&mut self) {
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Closes stdin and waits briefly for a clean exit. Returns the exit code
    /// when the runner stopped on its own.
    pub fn close(mut self) -> Option<i32> {
        self.stdin.take();
        match self.child.wait_timeout(Duration::from_secs(2)) {
            Ok(Some(status)) => status.code(),
            _ => {
                self.kill();
                None
            }
        }
    }
}

impl Drop for RunnerSession {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            self.kill();
        }
    }
}

/// Starts and immediately closes a session; used to vet generated scripts.
pub fn dry_run(command: &[String], script: &Path, entrypoint: &str, k: usize, timeout: Duration) -> Result<()> {
    RunnerSession::start(command, script, entrypoint, k, timeout)?.close();
    Ok(())
}
