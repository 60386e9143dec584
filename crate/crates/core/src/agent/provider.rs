//! Completion providers: a deterministic scripted provider replaying
//! authored transcripts, and a remote chat-completions client over HTTP(S).

use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::json;
use thiserror::Error;

use super::prompt::AssembledPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderErrorKind {
    Timeout,
    Auth,
    RateLimit,
    Malformed,
    Transport,
    Status,
    ScriptExhausted,
}

impl std::fmt::Display for ProviderErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProviderErrorKind::Timeout => "timeout",
            ProviderErrorKind::Auth => "auth",
            ProviderErrorKind::RateLimit => "rate-limit",
            ProviderErrorKind::Malformed => "malformed",
            ProviderErrorKind::Transport => "transport",
            ProviderErrorKind::Status => "status",
            ProviderErrorKind::ScriptExhausted => "script-exhausted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("provider error ({kind}): {message}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderError {
    fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        ProviderError {
            kind,
            message: message.into(),
        }
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, prompt: &AssembledPrompt) -> Result<String, ProviderError>;
    fn name(&self) -> &str;
}

/// Replays an ordered list of completion texts; entries in a script file are
/// separated by a line containing only `---`.
pub struct ScriptedProvider {
    entries: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn from_entries(entries: Vec<String>) -> Self {
        ScriptedProvider {
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let content = std::fs::read_to_string(path)?;
        Ok(Self::parse(&content))
    }

    pub fn parse(content: &str) -> Self {
        let mut entries = Vec::new();
        let mut cur = String::new();
        for line in content.lines() {
            if line.trim() == "---" {
                entries.push(cur.trim().to_string());
                cur = String::new();
            } else {
                cur.push_str(line);
                cur.push('\n');
            }
        }
        if !cur.trim().is_empty() {
            entries.push(cur.trim().to_string());
        }
        Self::from_entries(entries)
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().expect("cursor")
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, _prompt: &AssembledPrompt) -> Result<String, ProviderError> {
        let mut cur = self.cursor.lock().expect("cursor");
        if *cur >= self.entries.len() {
            return Err(ProviderError::new(
                ProviderErrorKind::ScriptExhausted,
                format!("script exhausted after {} completions", self.entries.len()),
            ));
        }
        let out = self.entries[*cur].clone();
        *cur += 1;
        Ok(out)
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Remote chat-completions configuration. The auth token is read from the
/// named environment variable at call time and never logged.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub auth_env: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: String::new(),
            auth_env: String::new(),
            temperature: 0.0,
            timeout_secs: 60,
            max_retries: 2,
        }
    }
}

pub struct RemoteProvider {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    /// Optional JSONL log of request/response pairs, secrets redacted.
    log_path: Option<std::path::PathBuf>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::new(ProviderErrorKind::Transport, e.to_string()))?;
        Ok(RemoteProvider {
            config,
            client,
            log_path: None,
        })
    }

    pub fn with_log(mut self, path: std::path::PathBuf) -> Self {
        self.log_path = Some(path);
        self
    }

    fn log(&self, status: &str, excerpt: &str) {
        if let Some(p) = &self.log_path {
            let rec = json!({
                "endpoint": self.config.endpoint,
                "model": self.config.model,
                "status": status,
                "response_excerpt": excerpt.chars().take(200).collect::<String>(),
            });
            if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(p) {
                use std::io::Write;
                let _ = writeln!(f, "{rec}");
            }
        }
    }

    fn attempt(&self, prompt: &AssembledPrompt) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if !self.config.auth_env.is_empty() {
            if let Ok(token) = std::env::var(&self.config.auth_env) {
                req = req.bearer_auth(token);
            }
        }
        let resp = req.send().map_err(|e| {
            let kind = if e.is_timeout() {
                ProviderErrorKind::Timeout
            } else {
                ProviderErrorKind::Transport
            };
            ProviderError::new(kind, e.to_string())
        })?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            self.log("auth-error", "");
            return Err(ProviderError::new(
                ProviderErrorKind::Auth,
                format!("status {status}"),
            ));
        }
        if status.as_u16() == 429 {
            self.log("rate-limited", "");
            return Err(ProviderError::new(
                ProviderErrorKind::RateLimit,
                "status 429".to_string(),
            ));
        }
        if !status.is_success() {
            self.log("status-error", "");
            return Err(ProviderError::new(
                ProviderErrorKind::Status,
                format!("status {status}"),
            ));
        }
        let text = resp
            .text()
            .map_err(|e| ProviderError::new(ProviderErrorKind::Transport, e.to_string()))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            self.log("malformed", &text);
            ProviderError::new(ProviderErrorKind::Malformed, e.to_string())
        })?;
        let content = value
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .ok_or_else(|| {
                self.log("malformed", &text);
                ProviderError::new(
                    ProviderErrorKind::Malformed,
                    "response lacks choices[0].message.content",
                )
            })?;
        self.log("ok", content);
        Ok(content.to_string())
    }
}

impl Provider for RemoteProvider {
    /// Transient failures (timeout, transport, 5xx, rate limit, malformed
    /// payloads) retry with exponential backoff; auth failures do not.
    fn complete(&self, prompt: &AssembledPrompt) -> Result<String, ProviderError> {
        let mut last = None;
        for attempt in 0..=self.config.max_retries {
            match self.attempt(prompt) {
                Ok(out) => return Ok(out),
                Err(e) if e.kind == ProviderErrorKind::Auth => return Err(e),
                Err(e) => {
                    last = Some(e);
                    if attempt < self.config.max_retries {
                        std::thread::sleep(Duration::from_millis(50 << attempt));
                    }
                }
            }
        }
        Err(last.unwrap_or_else(|| {
            ProviderError::new(ProviderErrorKind::Transport, "no attempt made")
        }))
    }

    fn name(&self) -> &str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn prompt() -> AssembledPrompt {
        AssembledPrompt {
            system: "sys".into(),
            user: "user".into(),
        }
    }

    #[test]
    fn scripted_entries_in_order_then_exhausted() {
        let p = ScriptedProvider::parse("first\n---\nsecond\n");
        assert_eq!(p.complete(&prompt()).unwrap(), "first");
        assert_eq!(p.complete(&prompt()).unwrap(), "second");
        let err = p.complete(&prompt()).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::ScriptExhausted);
    }

    /// One-shot HTTP stub on a random local port.
    fn stub_server(status_line: &'static str, body: &'static str, hits: usize) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for _ in 0..hits {
                if let Ok((mut sock, _)) = listener.accept() {
                    let mut buf = [0u8; 8192];
                    let _ = sock.read(&mut buf);
                    let resp = format!(
                        "HTTP/1.1 {status_line}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    let _ = sock.write_all(resp.as_bytes());
                }
            }
        });
        format!("http://{addr}/v1/chat/completions")
    }

    fn remote(endpoint: String, retries: u32) -> RemoteProvider {
        RemoteProvider::new(RemoteConfig {
            endpoint,
            model: "test-model".into(),
            auth_env: String::new(),
            temperature: 0.0,
            timeout_secs: 5,
            max_retries: retries,
        })
        .unwrap()
    }

    #[test]
    fn loopback_echo_completion() {
        let endpoint = stub_server(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"Final Answer: ok"}}]}"#,
            1,
        );
        let p = remote(endpoint, 0);
        assert_eq!(p.complete(&prompt()).unwrap(), "Final Answer: ok");
    }

    #[test]
    fn unauthorized_maps_to_auth_error() {
        let endpoint = stub_server("401 Unauthorized", r#"{"error":"no"}"#, 1);
        let p = remote(endpoint, 3);
        let err = p.complete(&prompt()).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Auth);
    }

    #[test]
    fn malformed_json_fails_after_retries() {
        let endpoint = stub_server("200 OK", "not json at all", 3);
        let p = remote(endpoint, 2);
        let err = p.complete(&prompt()).unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Malformed);
    }
}
