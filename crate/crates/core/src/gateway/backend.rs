//! Completion backends: a deterministic offline mock and an HTTP
//! chat-completion client.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::json;
use thiserror::Error;

use super::templates::TemplateName;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    /// Transient failure worth retrying (connection refused, 5xx).
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend rejected request: {0}")]
    Rejected(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, BackendError::Rejected(_))
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, BackendError>;
}

/// Identifies which built-in template produced `prompt` from its role line.
pub fn detect_template(prompt: &str) -> TemplateName {
    TemplateName::ALL
        .into_iter()
        .find(|t| {
            let role = t.body().lines().nth(1).unwrap_or_default();
            prompt.lines().nth(1) == Some(role)
        })
        .unwrap_or(TemplateName::GeneralResponse)
}

fn section<'p>(prompt: &'p str, marker: &str) -> &'p str {
    let Some(start) = prompt.find(marker) else {
        return "";
    };
    let rest = &prompt[start + marker.len()..];
    let end = ["\n2. From Document Chunks", "\n---", "\n\n"]
        .iter()
        .filter_map(|m| rest.find(m))
        .min()
        .unwrap_or(rest.len());
    &rest[..end]
}

/// Entity names cited in the knowledge-graph context of a rendered prompt.
pub fn context_entity_names(prompt: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for line in section(prompt, "From Knowledge Graph(KG):\n").lines() {
        let Some((head, rest)) = line.split_once(" —") else {
            continue;
        };
        let Some((_, tail)) = rest.split_once("→ ") else {
            continue;
        };
        for name in [head.trim(), tail.trim()] {
            if !name.is_empty() && !names.iter().any(|n| n == name) {
                names.push(name.to_owned());
            }
        }
    }
    names
}

/// Offline backend. Replies are a pure function of the prompt and seed unless
/// a scripted reply has been queued for the detected template.
pub struct MockBackend {
    seed: u64,
    scripted: Mutex<HashMap<TemplateName, VecDeque<Result<String, BackendError>>>>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scripted: Mutex::new(HashMap::new()),
        }
    }

    /// Queues a reply returned the next time `template` is requested.
    pub fn script(&self, template: TemplateName, reply: Result<String, BackendError>) {
        self.scripted
            .lock()
            .expect("mock script lock")
            .entry(template)
            .or_default()
            .push_back(reply);
    }

    fn rotated(&self, mut names: Vec<String>) -> Vec<String> {
        if !names.is_empty() {
            let k = (self.seed % names.len() as u64) as usize;
            names.rotate_left(k);
        }
        names
    }

    fn generate(&self, template: TemplateName, prompt: &str) -> String {
        let names = self.rotated(context_entity_names(prompt));
        match template {
            TemplateName::RecommendEntities => {
                let entities: Vec<_> = names
                    .iter()
                    .take(7)
                    .map(|n| {
                        json!({
                            "entity_name": n,
                            "category": "Entity",
                            "reason": format!("{n} appears in the local knowledge graph context."),
                        })
                    })
                    .collect();
                let suggestions: Vec<String> = names
                    .iter()
                    .take(2)
                    .map(|n| format!("Explore the neighbors of {n}"))
                    .collect();
                json!({ "entities": entities, "suggestions": suggestions }).to_string()
            }
            TemplateName::RetrieveByHypothesis => {
                let entities: Vec<_> = names
                    .iter()
                    .take(20)
                    .map(|n| {
                        json!({
                            "entity_name": n,
                            "category": "Entity",
                            "description": format!("{n} is connected to the hypothesis in the knowledge graph."),
                        })
                    })
                    .collect();
                json!({ "entities": entities }).to_string()
            }
            TemplateName::AnalysePath => {
                let input = section(prompt, "---Input---\n").trim();
                let parts: Vec<&str> = input
                    .split(['—', '→'])
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect();
                let hops: Vec<_> = parts
                    .windows(3)
                    .step_by(2)
                    .map(|w| {
                        json!({
                            "subject": w[0],
                            "relationship": w[1],
                            "object": w[2],
                            "explanation": format!("{} {} {}.", w[0], w[1], w[2]),
                        })
                    })
                    .collect();
                json!({
                    "hops": hops,
                    "hypothesis_chain": parts.iter().map(|p| format!("[{p}]")).collect::<Vec<_>>().join(" -> "),
                })
                .to_string()
            }
            TemplateName::AnalyzeImproveChain => format!(
                "1. **Chain Assessment**\n- The chain is internally consistent (mock seed {}).\n\
                 2. **Biological Interpretation**\n- Each hop is read as a plausible mechanistic step.\n\
                 3. **Suggested Improvements**\n- Consider replacing vague relations such as \"related to\" with KG labels.",
                self.seed
            ),
            TemplateName::GeneralResponse => {
                let suggestions: Vec<String> = names.iter().take(2).map(|n| format!("What else links to {n}?")).collect();
                format!(
                    "Mock answer (seed {}).\n```json\n{}\n```",
                    self.seed,
                    json!({ "suggestions": suggestions })
                )
            }
        }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str, _timeout: Duration) -> Result<String, BackendError> {
        let template = detect_template(prompt);
        let scripted = self
            .scripted
            .lock()
            .expect("mock script lock")
            .get_mut(&template)
            .and_then(VecDeque::pop_front);
        match scripted {
            Some(reply) => reply,
            None => Ok(self.generate(template, prompt)),
        }
    }
}

/// Minimal chat-completion client: the rendered prompt is sent as a single
/// user message to `{base_url}/chat/completions`.
pub struct HttpBackend {
    id: String,
    base_url: String,
    api_key: Option<String>,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Rejected(e.to_string()))?;
        Ok(Self {
            id: format!("http:{model}"),
            base_url: base_url.trim_end_matches('/').to_owned(),
            api_key,
            model: model.to_owned(),
            client,
        })
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .timeout(timeout)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Unavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if status.is_server_error() {
            return Err(BackendError::Unavailable(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Rejected(format!("{status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Rejected(format!("invalid response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Rejected("response has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_each_template() {
        for t in TemplateName::ALL {
            assert_eq!(detect_template(t.body()), t);
        }
        assert_eq!(detect_template("hello"), TemplateName::GeneralResponse);
    }

    #[test]
    fn context_names_in_order() {
        let prompt = "x\nFrom Knowledge Graph(KG):\nBRCA1 —sl_gsg→ USP1\nUSP1 —interacts→ DNA repair\n\n---Output";
        assert_eq!(context_entity_names(prompt), ["BRCA1", "USP1", "DNA repair"]);
    }

    #[test]
    fn mock_is_deterministic_and_scriptable() {
        let mock = MockBackend::new(3);
        let prompt = TemplateName::AnalyzeImproveChain.body();
        let a = mock.complete(prompt, Duration::from_secs(1)).unwrap();
        assert_eq!(a, mock.complete(prompt, Duration::from_secs(1)).unwrap());
        mock.script(TemplateName::AnalyzeImproveChain, Err(BackendError::Timeout));
        assert_eq!(
            mock.complete(prompt, Duration::from_secs(1)),
            Err(BackendError::Timeout)
        );
        assert_eq!(mock.complete(prompt, Duration::from_secs(1)).unwrap(), a);
    }
}
