//! LLM / RAG gateway: prompt rendering, backend calls with retries, response
//! parsing and per-session chat history.

mod backend;
mod context;
mod parse;
mod templates;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{context_entity_names, detect_template, Backend, BackendError, HttpBackend, MockBackend};
pub use context::{assemble_kg_context, assemble_vector_context, match_entities, KgContext};
pub use parse::{
    extract_json, parse_response, ChainAnalysis, HopExplanation, ParseError, Parsed, PathAnalysis, Payload,
    RecommendedEntity, RetrievedEntity,
};
pub use templates::{default_format_bindings, Bindings, PromptTemplate, RenderError, TemplateName};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// online model, may use outside knowledge
    #[default]
    Llm,
    /// grounded in local knowledge-graph and document context only
    Rag,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("gateway timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend failure after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },
    #[error("unparseable response: {0}")]
    Parse(#[from] ParseError),
}

impl GatewayError {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Render(_) => "render",
            GatewayError::Contract(_) => "contract",
            GatewayError::Timeout { .. } => "timeout",
            GatewayError::Backend { .. } => "backend",
            GatewayError::Parse(_) => "parse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayRequest {
    pub template: TemplateName,
    pub bindings: Bindings,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, with = "opt_millis")]
    pub timeout: Option<Duration>,
}

mod opt_millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&(d.as_millis() as u64)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<u64>::deserialize(d)?.map(Duration::from_millis))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayResponse {
    pub raw: String,
    pub parsed: Parsed,
    pub backend: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    retries: u32,
    backoff: Duration,
    timeout: Duration,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(250),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn mock(seed: u64) -> Self {
        Self::new(Arc::new(MockBackend::new(seed)))
    }

    /// Builds a gateway from `KGCHAIN_LLM_URL`, `KGCHAIN_LLM_API_KEY`,
    /// `KGCHAIN_LLM_MODEL` and `KGCHAIN_MOCK_LLM`. Without a URL, or with the
    /// mock flag set, the offline mock is used.
    pub fn from_env(force_mock: bool) -> Result<Self, BackendError> {
        let mock_flag = std::env::var("KGCHAIN_MOCK_LLM")
            .map(|v| !v.is_empty() && v != "0")
            .unwrap_or(false);
        match std::env::var("KGCHAIN_LLM_URL") {
            Ok(url) if !force_mock && !mock_flag => {
                let key = std::env::var("KGCHAIN_LLM_API_KEY").ok();
                let model = std::env::var("KGCHAIN_LLM_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
                Ok(Self::new(Arc::new(HttpBackend::new(&url, key, &model)?)))
            }
            _ => Ok(Self::mock(0)),
        }
    }

    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    fn check_contract(req: &GatewayRequest, template: &PromptTemplate) -> Result<(), GatewayError> {
        if req.mode != Mode::Rag {
            return Ok(());
        }
        for slot in ["kg_context", "vector_context"] {
            if template.has_placeholder(slot) && !req.bindings.contains_key(slot) {
                return Err(GatewayError::Contract(format!(
                    "rag mode requires locally assembled {slot}"
                )));
            }
        }
        Ok(())
    }

    /// Renders, sends and parses one request. Transient backend failures are
    /// retried with exponential backoff.
    pub fn complete(&self, req: &GatewayRequest) -> Result<GatewayResponse, GatewayError> {
        let template = req.template.template();
        Self::check_contract(req, &template)?;
        let prompt = template.render(&req.bindings)?;
        let timeout = req.timeout.unwrap_or(self.timeout);
        let started = Instant::now();
        let mut attempts = 0;
        let raw = loop {
            attempts += 1;
            match self.backend.complete(&prompt, timeout) {
                Ok(raw) => break raw,
                Err(e) if e.is_retryable() && attempts <= self.retries => {
                    log::warn!("{}: attempt {attempts} failed: {e}", self.backend.id());
                    thread::sleep(self.backoff * 2u32.pow(attempts - 1));
                }
                Err(BackendError::Timeout) => return Err(GatewayError::Timeout { attempts }),
                Err(e) => {
                    return Err(GatewayError::Backend {
                        attempts,
                        message: e.to_string(),
                    })
                }
            }
        };
        let parsed = parse_response(req.template, &raw)?;
        for w in &parsed.warnings {
            log::warn!("{}: {w}", req.template);
        }
        Ok(GatewayResponse {
            raw,
            parsed,
            backend: self.backend.id().to_owned(),
            latency_ms: started.elapsed().as_millis() as u64,
            attempts,
        })
    }

    /// Sends a chat turn and records it in `session`. On failure only an error
    /// marker is appended.
    pub fn chat(&self, session: &mut ChatSession, turn: ChatTurn) -> Result<HistoryEntry, GatewayError> {
        let mut bindings = default_format_bindings(turn.template);
        bindings.extend(turn.bindings.clone());
        bindings.insert("history".into(), session.history_with(&turn.query));
        let req = GatewayRequest {
            template: turn.template,
            bindings,
            mode: turn.mode,
            timeout: turn.timeout,
        };
        let outcome = match self.complete(&req) {
            Ok(resp) => Exchange::Reply {
                raw: resp.raw,
                suggestions: resp.parsed.suggestions.clone(),
                parsed: resp.parsed,
                backend: resp.backend,
            },
            Err(e) => Exchange::Error {
                kind: e.kind().to_owned(),
                message: e.to_string(),
                error: Box::new(e),
            },
        };
        let entry = session.push(turn, outcome);
        match &entry.outcome {
            Exchange::Error { error, .. } => Err((**error).clone()),
            Exchange::Reply { .. } => Ok(entry),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub query: String,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "general")]
    pub template: TemplateName,
    /// Extra bindings (contexts, selected path); `history` is filled in from the session.
    #[serde(default)]
    pub bindings: Bindings,
    #[serde(default, with = "opt_millis")]
    pub timeout: Option<Duration>,
}

fn general() -> TemplateName {
    TemplateName::GeneralResponse
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Exchange {
    Reply {
        raw: String,
        parsed: Parsed,
        suggestions: Vec<String>,
        backend: String,
    },
    Error {
        kind: String,
        message: String,
        #[serde(skip, default = "placeholder_error")]
        error: Box<GatewayError>,
    },
}

fn placeholder_error() -> Box<GatewayError> {
    Box::new(GatewayError::Contract("restored from log".into()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub seq: usize,
    pub mode: Mode,
    pub template: TemplateName,
    pub query: String,
    pub outcome: Exchange,
}

/// Append-only chat history for one session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatSession {
    pub id: String,
    entries: Vec<HistoryEntry>,
}

impl ChatSession {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Re-appends an entry read back from a persisted log.
    pub fn restore(&mut self, entry: HistoryEntry) {
        debug_assert_eq!(entry.seq, self.entries.len());
        self.entries.push(entry);
    }

    fn push(&mut self, turn: ChatTurn, outcome: Exchange) -> HistoryEntry {
        let entry = HistoryEntry {
            seq: self.entries.len(),
            mode: turn.mode,
            template: turn.template,
            query: turn.query,
            outcome,
        };
        self.entries.push(entry.clone());
        entry
    }

    /// Prior successful exchanges followed by the pending user query.
    pub fn history_with(&self, query: &str) -> String {
        let mut out = String::new();
        for e in &self.entries {
            if let Exchange::Reply { raw, .. } = &e.outcome {
                out.push_str(&format!("user: {}\nassistant: {}\n", e.query, raw));
            }
        }
        out.push_str(&format!("user: {query}"));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(query: &str, mode: Mode, template: TemplateName) -> ChatTurn {
        ChatTurn {
            query: query.into(),
            mode,
            template,
            bindings: Bindings::new(),
            timeout: None,
        }
    }

    #[test]
    fn chat_appends_exchange() {
        let gw = Gateway::mock(1);
        let mut s = ChatSession::new("s");
        let entry = gw
            .chat(&mut s, turn("hello", Mode::Llm, TemplateName::GeneralResponse))
            .unwrap();
        assert_eq!(entry.seq, 0);
        assert_eq!(s.len(), 1);
        assert!(s.history_with("next").contains("user: hello\nassistant: Mock answer"));
    }

    #[test]
    fn timeout_leaves_error_marker() {
        let mock = Arc::new(MockBackend::new(0));
        for _ in 0..3 {
            mock.script(TemplateName::GeneralResponse, Err(BackendError::Timeout));
        }
        let gw = Gateway::new(mock).with_retries(2, Duration::from_millis(1));
        let mut s = ChatSession::new("s");
        let err = gw
            .chat(&mut s, turn("hi", Mode::Llm, TemplateName::GeneralResponse))
            .unwrap_err();
        assert_eq!(err, GatewayError::Timeout { attempts: 3 });
        assert_eq!(s.len(), 1);
        assert!(matches!(s.entries()[0].outcome, Exchange::Error { .. }));
        // failed turns are not replayed into the prompt history
        assert_eq!(s.history_with("x"), "user: x");
    }

    #[test]
    fn retry_recovers_from_transient_failure() {
        let mock = Arc::new(MockBackend::new(0));
        mock.script(
            TemplateName::GeneralResponse,
            Err(BackendError::Unavailable("503".into())),
        );
        let gw = Gateway::new(mock).with_retries(2, Duration::from_millis(1));
        let resp = gw
            .complete(&GatewayRequest {
                template: TemplateName::GeneralResponse,
                bindings: [("history".to_string(), "user: q".to_string())].into(),
                mode: Mode::Llm,
                timeout: None,
            })
            .unwrap();
        assert_eq!(resp.attempts, 2);
    }

    #[test]
    fn rag_without_context_violates_contract() {
        let gw = Gateway::mock(0);
        let mut s = ChatSession::new("s");
        let err = gw
            .chat(&mut s, turn("q", Mode::Rag, TemplateName::RecommendEntities))
            .unwrap_err();
        assert!(matches!(err, GatewayError::Contract(_)));
        assert_eq!(s.len(), 1);
    }
}
