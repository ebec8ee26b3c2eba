//! Subprocess provider protocol.
//!
//! External models (language identifiers, translators, transliterators,
//! punctuators) run as child processes speaking newline-delimited JSON: one
//! request object per line on stdin, one response object per line on stdout,
//! in the same order. A response carrying an `"error"` string fails that
//! request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("failed to start provider `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("provider io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("provider protocol violation: {0}")]
    Protocol(String),
    #[error("provider reported failure: {0}")]
    Failed(String),
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A long-lived child process answering JSONL requests one at a time.
///
/// Calls are serialized through a mutex, so the provider is single-flight
/// and safe to share across worker threads.
pub struct JsonlProcess {
    command: String,
    session: Mutex<Session>,
}

impl JsonlProcess {
    /// Spawns `argv[0]` with the remaining arguments.
    pub fn spawn(argv: &[String]) -> Result<Self, ProviderError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| ProviderError::Protocol("empty provider command".into()))?;
        let command = argv.join(" ");
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ProviderError::Spawn { command: command.clone(), source })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(JsonlProcess { command, session: Mutex::new(Session { child, stdin, stdout }) })
    }

    /// Parses a shell-like command string on whitespace.
    pub fn spawn_str(command: &str) -> Result<Self, ProviderError> {
        let argv: Vec<String> = command.split_whitespace().map(str::to_string).collect();
        Self::spawn(&argv)
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn call(&self, request: &Value) -> Result<Value, ProviderError> {
        let mut session = self.session.lock().unwrap_or_else(|e| e.into_inner());
        let mut line = serde_json::to_string(request).expect("requests serialize");
        line.push('\n');
        session.stdin.write_all(line.as_bytes())?;
        session.stdin.flush()?;

        let mut response = String::new();
        let n = session.stdout.read_line(&mut response)?;
        if n == 0 {
            return Err(ProviderError::Protocol(format!(
                "`{}` closed its output before answering",
                self.command
            )));
        }
        let value: Value = serde_json::from_str(response.trim_end())
            .map_err(|e| ProviderError::Protocol(format!("invalid JSON response: {e}")))?;
        if let Some(Value::String(msg)) = value.get("error") {
            return Err(ProviderError::Failed(msg.clone()));
        }
        Ok(value)
    }

    pub fn call_batch(&self, requests: &[Value]) -> Result<Vec<Value>, ProviderError> {
        requests.iter().map(|r| self.call(r)).collect()
    }
}

impl Drop for JsonlProcess {
    fn drop(&mut self) {
        if let Ok(session) = self.session.get_mut() {
            let _ = session.child.kill();
            let _ = session.child.wait();
        }
    }
}

/// Extracts a required string field from a provider response.
pub fn string_field(value: &Value, field: &str) -> Result<String, ProviderError> {
    value
        .get(field)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Protocol(format!("response lacks string field `{field}`")))
}
