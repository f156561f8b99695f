//! Prompt templates for the five assistant protocols.
//!
//! Bodies live in `templates/*.txt` and are substituted in a single pass:
//! binding values are inserted literally, so braces inside a value are never
//! treated as placeholders.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    RecommendEntities,
    AnalysePath,
    RetrieveByHypothesis,
    AnalyzeImproveChain,
    GeneralResponse,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::RecommendEntities,
        TemplateName::AnalysePath,
        TemplateName::RetrieveByHypothesis,
        TemplateName::AnalyzeImproveChain,
        TemplateName::GeneralResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::RecommendEntities => "recommend_entities",
            TemplateName::AnalysePath => "analyse_path",
            TemplateName::RetrieveByHypothesis => "retrieve_by_hypothesis",
            TemplateName::AnalyzeImproveChain => "analyze_improve_chain",
            TemplateName::GeneralResponse => "general_response",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateName::RecommendEntities => include_str!("../../templates/recommend_entities.txt"),
            TemplateName::AnalysePath => include_str!("../../templates/analyse_path.txt"),
            TemplateName::RetrieveByHypothesis => include_str!("../../templates/retrieve_by_hypothesis.txt"),
            TemplateName::AnalyzeImproveChain => include_str!("../../templates/analyze_improve_chain.txt"),
            TemplateName::GeneralResponse => include_str!("../../templates/general_response.txt"),
        }
    }

    /// The output-format slot of this template, if it has one.
    pub fn format_slot(self) -> Option<&'static str> {
        match self {
            TemplateName::RecommendEntities => Some("recommend_entity_json_format"),
            TemplateName::AnalysePath => Some("path_output_format"),
            TemplateName::RetrieveByHypothesis => Some("retrieval_entity_json_format"),
            TemplateName::AnalyzeImproveChain => Some("analyze_and_improve_output_format"),
            TemplateName::GeneralResponse => None,
        }
    }

    pub fn template(self) -> PromptTemplate {
        PromptTemplate::new(self.as_str(), self.body()).expect("built-in templates are well formed")
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| RenderError::UnknownTemplate(s.to_owned()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("placeholder {{{0}}} is not bound")]
    Unbound(String),
    #[error("binding {0:?} does not match any placeholder")]
    UnusedBinding(String),
    #[error("placeholder {{{0}}} appears more than once")]
    RepeatedPlaceholder(String),
    #[error("template {0:?} has no placeholders")]
    NoPlaceholders(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(std::ops::Range<usize>),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    pieces: Vec<Piece>,
}

fn is_slot_char(b: u8) -> bool {
    b.is_ascii_lowercase() || b == b'_'
}

fn split_pieces(body: &str) -> Vec<Piece> {
    let bytes = body.as_bytes();
    let mut pieces = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && is_slot_char(bytes[j]) {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' {
                if text_start < i {
                    pieces.push(Piece::Text(text_start..i));
                }
                pieces.push(Piece::Slot(body[i + 1..j].to_owned()));
                i = j + 1;
                text_start = i;
                continue;
            }
        }
        i += 1;
    }
    if text_start < bytes.len() {
        pieces.push(Piece::Text(text_start..bytes.len()));
    }
    pieces
}

impl PromptTemplate {
    /// Parses `body`. Every placeholder must occur exactly once and at least
    /// one must exist; an already rendered prompt is therefore rejected.
    pub fn new(name: &str, body: &str) -> Result<Self, RenderError> {
        let pieces = split_pieces(body);
        let mut seen = Vec::new();
        for p in &pieces {
            if let Piece::Slot(s) = p {
                if seen.contains(s) {
                    return Err(RenderError::RepeatedPlaceholder(s.clone()));
                }
                seen.push(s.clone());
            }
        }
        if seen.is_empty() {
            return Err(RenderError::NoPlaceholders(name.to_owned()));
        }
        Ok(Self {
            name: name.to_owned(),
            body: body.to_owned(),
            pieces,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(s.as_str()),
            Piece::Text(_) => None,
        })
    }

    pub fn has_placeholder(&self, name: &str) -> bool {
        self.placeholders().any(|p| p == name)
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, RenderError> {
        for key in bindings.keys() {
            if !self.has_placeholder(key) {
                return Err(RenderError::UnusedBinding(key.clone()));
            }
        }
        let mut out = String::with_capacity(self.body.len());
        for p in &self.pieces {
            match p {
                Piece::Text(range) => out.push_str(&self.body[range.clone()]),
                Piece::Slot(s) => {
                    let value = bindings.get(s).ok_or_else(|| RenderError::Unbound(s.clone()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

pub const RECOMMEND_ENTITY_JSON_FORMAT: &str = r#"{
  "entities": [
    {"entity_name": "<name as it appears in the source>", "category": "<entity type>", "reason": "<why it is relevant>"}
  ],
  "suggestions": ["<optional follow-up question>"]
}"#;

pub const HYPO_CHAIN_FORMAT: &str =
    "[entity 1] -> relation 1 -> [entity 2] -> relation 2 -> [entity 3] -> relation 3 -> [entity 4]";

pub const PATH_OUTPUT_FORMAT: &str = r#"{
  "hops": [
    {"subject": "<entity>", "relationship": "<relation>", "object": "<entity>", "explanation": "<biological meaning of this hop>"}
  ],
  "hypothesis_chain": "<Possible 3-hop Hypothesis Chain>",
  "suggestions": ["<optional follow-up question>"]
}"#;

pub const RETRIEVAL_ENTITY_JSON_FORMAT: &str = r#"{
  "entities": [
    {"entity_name": "<exact name as in KG>", "category": "<category in KG>", "description": "<1-2 sentence relevance summary>"}
  ]
}"#;

pub const ANALYZE_AND_IMPROVE_OUTPUT_FORMAT: &str = r#"{
  "chain_assessment": "<is the chain logical and are the relations appropriate>",
  "biological_interpretation": "<mechanism-oriented explanation>",
  "suggested_improvements": "<alternative entities or relations>"
}"#;

/// Default values for the output-format slots.
pub fn default_format_bindings(template: TemplateName) -> Bindings {
    let mut b = Bindings::new();
    match template {
        TemplateName::RecommendEntities => {
            b.insert(
                "recommend_entity_json_format".into(),
                RECOMMEND_ENTITY_JSON_FORMAT.into(),
            );
        }
        TemplateName::AnalysePath => {
            b.insert("hypo_chain_format".into(), HYPO_CHAIN_FORMAT.into());
            b.insert("path_output_format".into(), PATH_OUTPUT_FORMAT.into());
        }
        TemplateName::RetrieveByHypothesis => {
            b.insert(
                "retrieval_entity_json_format".into(),
                RETRIEVAL_ENTITY_JSON_FORMAT.into(),
            );
        }
        TemplateName::AnalyzeImproveChain => {
            b.insert(
                "analyze_and_improve_output_format".into(),
                ANALYZE_AND_IMPROVE_OUTPUT_FORMAT.into(),
            );
        }
        TemplateName::GeneralResponse => {}
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn builtin_placeholders() {
        let t = TemplateName::RecommendEntities.template();
        assert_eq!(
            t.placeholders().collect::<Vec<_>>(),
            [
                "history",
                "kg_context",
                "vector_context",
                "recommend_entity_json_format"
            ]
        );
        assert_eq!(
            TemplateName::GeneralResponse
                .template()
                .placeholders()
                .collect::<Vec<_>>(),
            ["history"]
        );
        for t in TemplateName::ALL {
            let tpl = t.template();
            if let Some(slot) = t.format_slot() {
                assert!(tpl.has_placeholder(slot), "{t}");
            }
            for k in default_format_bindings(t).keys() {
                assert!(tpl.has_placeholder(k), "{t}: {k}");
            }
        }
    }

    #[test]
    fn unbound_placeholder_is_named() {
        let t = TemplateName::RetrieveByHypothesis.template();
        let mut b = default_format_bindings(TemplateName::RetrieveByHypothesis);
        b.insert("history".into(), String::new());
        assert_eq!(t.render(&b).unwrap_err(), RenderError::Unbound("kg_context".into()));
        b.insert("kg_context".into(), "x".into());
        assert!(t.render(&b).is_ok());
        b.insert("vector_context".into(), "x".into());
        assert_eq!(
            t.render(&b).unwrap_err(),
            RenderError::UnusedBinding("vector_context".into())
        );
    }

    #[test]
    fn recommend_with_empty_history_keeps_rule_line() {
        let t = TemplateName::RecommendEntities.template();
        let mut b = default_format_bindings(TemplateName::RecommendEntities);
        b.extend(bind(&[("history", ""), ("kg_context", ""), ("vector_context", "")]));
        let out = t.render(&b).unwrap();
        assert!(out.contains("return 5–7 of the most relevant entities"));
        assert!(out.contains("- Return your answer in JSON format only."));
    }

    #[test]
    fn values_are_literal() {
        let t = PromptTemplate::new("t", "a {x} b {y}").unwrap();
        let out = t.render(&bind(&[("x", "{y}"), ("y", "1")])).unwrap();
        assert_eq!(out, "a {y} b 1");
    }

    #[test]
    fn rendered_output_is_not_a_template() {
        let t = TemplateName::GeneralResponse.template();
        let out = t.render(&bind(&[("history", "user: hi")])).unwrap();
        assert_eq!(
            PromptTemplate::new("again", &out).unwrap_err(),
            RenderError::NoPlaceholders("again".into())
        );
        assert_eq!(
            PromptTemplate::new("dup", "{a} {a}").unwrap_err(),
            RenderError::RepeatedPlaceholder("a".into())
        );
    }

    #[test]
    fn json_braces_are_not_slots() {
        let t = PromptTemplate::new("t", "{\"k\": 1} {slot} {} {Upper}").unwrap();
        assert_eq!(t.placeholders().collect::<Vec<_>>(), ["slot"]);
    }
}
