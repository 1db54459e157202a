//! Chat-completion client that rewrites a report context into prose.
//!
//! Wire shape: request `{model, messages: [{role, content}], temperature: 0}`,
//! response `{choices: [{message: {content}}]}`. Timeouts, connection
//! failures, 429 and 5xx are retried; anything else falls back to the
//! template report at once.

use super::{render_template_report, ReportContext};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

/// Original instruction for the rewrite. `{context}` is replaced by the
/// report context as JSON.
pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are assisting a copyright examiner who must decide whether a set of \
AI-generated artworks shows an independent, protectable style.\n\
Reason step by step before concluding:\n\
1. Consistency: do the works share one visual style? Compare the measured value with its bound.\n\
2. Uniqueness: how far is the set from the closest existing style? Name the nearest clusters.\n\
3. Accuracy: do the image and text clusterings agree? Interpret the AMI value.\n\
4. State the outcome exactly as given and give one actionable recommendation.\n\
Use only numbers present in the context. Do not invent works, artists or values.\n\n\
Context (JSON):\n{context}\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TransportMode {
    Live,
    /// Returns the fixture file's text; no network.
    Stub { fixture: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MllmClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Base delay between retries, doubled after each attempt.
    pub backoff_ms: u64,
    pub transport: TransportMode,
}

impl Default for MllmClientConfig {
    fn default() -> Self {
        MllmClientConfig {
            endpoint: String::new(),
            model: String::new(),
            token_env: "STYLEGUARD_MLLM_TOKEN".into(),
            timeout_secs: 30,
            max_retries: 2,
            backoff_ms: 250,
            transport: TransportMode::Live,
        }
    }
}

impl MllmClientConfig {
    pub fn validate(&self) -> Result<(), MllmError> {
        match &self.transport {
            TransportMode::Stub { .. } => Ok(()),
            TransportMode::Live => {
                if self.endpoint.is_empty() || self.model.is_empty() {
                    return Err(MllmError::Config("live transport needs endpoint and model".into()));
                }
                if self.token_env.is_empty() {
                    return Err(MllmError::Config("live transport needs token_env".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MllmError {
    #[error("client configuration: {0}")]
    Config(String),
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("server returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl MllmError {
    fn retryable(&self) -> bool {
        match self {
            MllmError::Timeout | MllmError::Connect(_) => true,
            MllmError::Status(code) => *code == 429 || *code >= 500,
            MllmError::Config(_) | MllmError::Protocol(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Extracts the first choice's text from a response body.
pub fn parse_chat_response(body: &str) -> Result<String, MllmError> {
    let parsed: ChatResponse = serde_json::from_str(body).map_err(|e| MllmError::Protocol(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| MllmError::Protocol("no choices[0].message.content".into()))?;
    if content.trim().is_empty() {
        return Err(MllmError::Protocol("empty content".into()));
    }
    Ok(content)
}

pub trait Transport {
    /// One attempt; returns the assistant text.
    fn send(&self, request: &ChatRequest) -> Result<String, MllmError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &MllmClientConfig) -> Result<Self, MllmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| MllmError::Config(e.to_string()))?;
        Ok(HttpTransport {
            client,
            endpoint: config.endpoint.clone(),
            token: std::env::var(&config.token_env).ok().filter(|t| !t.is_empty()),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, MllmError> {
        let mut builder = self.client.post(&self.endpoint).json(request);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                MllmError::Timeout
            } else {
                MllmError::Connect(e.to_string())
            }
        };
        let response = builder.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(MllmError::Status(status.as_u16()));
        }
        let body = response.text().map_err(classify)?;
        parse_chat_response(&body)
    }
}

pub struct StubTransport {
    fixture: PathBuf,
}

impl StubTransport {
    pub fn new(fixture: PathBuf) -> Self {
        StubTransport { fixture }
    }
}

impl Transport for StubTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, MllmError> {
        std::fs::read_to_string(&self.fixture).map_err(|e| MllmError::Connect(format!("{}: {e}", self.fixture.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub text: String,
    pub fallback: bool,
    pub attempts: u32,
    /// Why the template was used, when it was.
    pub error: Option<MllmError>,
}

pub fn build_request(ctx: &ReportContext, model: &str, prompt_template: &str) -> ChatRequest {
    let context = serde_json::to_string_pretty(ctx).expect("report context serializes");
    ChatRequest {
        model: model.to_string(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: "You write concise, evidence-based style protection reports.".into(),
            },
            ChatMessage { role: "user".into(), content: prompt_template.replace("{context}", &context) },
        ],
        temperature: 0.0,
    }
}

fn fallback(ctx: &ReportContext, attempts: u32, error: MllmError) -> ReportOutput {
    ReportOutput {
        text: format!("fallback=true\n{}", render_template_report(ctx)),
        fallback: true,
        attempts,
        error: Some(error),
    }
}

/// Asks the configured model for a report, falling back to the template
/// report (first line `fallback=true`) when no usable answer arrives.
pub fn mllm_report(
    ctx: &ReportContext,
    config: &MllmClientConfig,
    transport: &dyn Transport,
    prompt_template: &str,
) -> ReportOutput {
    if let Err(e) = config.validate() {
        return fallback(ctx, 0, e);
    }
    let request = build_request(ctx, &config.model, prompt_template);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match transport.send(&request) {
            Ok(text) => return ReportOutput { text, fallback: false, attempts, error: None },
            Err(e) if e.retryable() && attempts <= config.max_retries => {
                let delay = config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            Err(e) => return fallback(ctx, attempts, e),
        }
    }
}

/// Transport selected by the config's mode.
pub fn transport_for(config: &MllmClientConfig) -> Result<Box<dyn Transport>, MllmError> {
    Ok(match &config.transport {
        TransportMode::Live => Box::new(HttpTransport::new(config)?),
        TransportMode::Stub { fixture } => Box::new(StubTransport::new(fixture.clone())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    fn ctx() -> ReportContext {
        crate::report::fixtures::ctx(crate::judgment::Outcome::Protected)
    }

    struct Scripted(RefCell<Vec<Result<String, MllmError>>>);

    impl Transport for Scripted {
        fn send(&self, _: &ChatRequest) -> Result<String, MllmError> {
            self.0.borrow_mut().remove(0)
        }
    }

    fn live() -> MllmClientConfig {
        MllmClientConfig { endpoint: "http://x".into(), model: "m".into(), backoff_ms: 0, ..Default::default() }
    }

    #[test]
    fn request_shape() {
        let req = build_request(&ctx(), "m1", DEFAULT_PROMPT_TEMPLATE);
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["model"], "m1");
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["messages"][1]["role"], "user");
        assert!(v["messages"][1]["content"].as_str().unwrap().contains("\"verdict_id\""));
    }

    #[test]
    fn parses_first_choice() {
        assert_eq!(parse_chat_response(r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#).unwrap(), "hi");
        assert!(matches!(parse_chat_response(r#"{"choices":[]}"#), Err(MllmError::Protocol(_))));
        assert!(matches!(parse_chat_response("not json"), Err(MllmError::Protocol(_))));
    }

    #[test]
    fn retries_transient_errors() {
        let t = Scripted(RefCell::new(vec![Err(MllmError::Status(503)), Err(MllmError::Timeout), Ok("done".into())]));
        let out = mllm_report(&ctx(), &live(), &t, DEFAULT_PROMPT_TEMPLATE);
        assert_eq!(out.text, "done");
        assert_eq!(out.attempts, 3);
    }

    #[test]
    fn protocol_errors_fall_back_without_retry() {
        let t = Scripted(RefCell::new(vec![Err(MllmError::Protocol("x".into())), Ok("late".into())]));
        let out = mllm_report(&ctx(), &live(), &t, DEFAULT_PROMPT_TEMPLATE);
        assert!(out.fallback);
        assert_eq!(out.attempts, 1);
        assert!(out.text.starts_with("fallback=true\n# Style protection report"));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Scripted(RefCell::new(vec![Err(MllmError::Status(401))]));
        let out = mllm_report(&ctx(), &live(), &t, DEFAULT_PROMPT_TEMPLATE);
        assert_eq!((out.fallback, out.attempts), (true, 1));
    }

    #[test]
    fn retries_are_bounded() {
        let errors = (0..3).map(|_| Err(MllmError::Status(500))).collect();
        let out = mllm_report(&ctx(), &live(), &Scripted(RefCell::new(errors)), DEFAULT_PROMPT_TEMPLATE);
        assert_eq!((out.fallback, out.attempts), (true, 3));
    }

    #[test]
    fn stub_returns_fixture_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("canned.txt");
        std::fs::write(&path, "Canned report.\n").unwrap();
        let cfg = MllmClientConfig { transport: TransportMode::Stub { fixture: path.clone() }, ..Default::default() };
        let out = mllm_report(&ctx(), &cfg, transport_for(&cfg).unwrap().as_ref(), DEFAULT_PROMPT_TEMPLATE);
        assert_eq!(out.text, "Canned report.\n");
        assert!(!out.fallback);
    }

    #[test]
    fn live_mode_requires_endpoint() {
        assert!(MllmClientConfig::default().validate().is_err());
        assert!(live().validate().is_ok());
    }
}
