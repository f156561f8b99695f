//! Response parsing for each template's output format.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::templates::TemplateName;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty response")]
    Empty,
    #[error("no JSON value found in response")]
    NoJson,
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("entry {index}: missing key `{key}`")]
    MissingKey { index: usize, key: &'static str },
    #[error("entry {index}: unexpected key `{key}`")]
    UnexpectedKey { index: usize, key: String },
    #[error("missing section `{0}`")]
    MissingSection(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendedEntity {
    pub entity_name: String,
    pub category: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedEntity {
    pub entity_name: String,
    pub category: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopExplanation {
    pub subject: String,
    pub relationship: String,
    pub object: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathAnalysis {
    pub hops: Vec<HopExplanation>,
    pub hypothesis_chain: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainAnalysis {
    pub chain_assessment: String,
    pub biological_interpretation: String,
    pub suggested_improvements: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Payload {
    Recommendations(Vec<RecommendedEntity>),
    PathAnalysis(PathAnalysis),
    RetrievedEntities(Vec<RetrievedEntity>),
    ChainAnalysis(ChainAnalysis),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parsed {
    pub payload: Payload,
    #[serde(default)]
    pub suggestions: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// End offset (exclusive) of the balanced JSON container starting at `start`.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Finds the outermost JSON object or array embedded in `raw`, skipping any
/// surrounding prose or code fences.
pub fn extract_json(raw: &str) -> Option<Value> {
    let bytes = raw.as_bytes();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(v) = serde_json::from_str(&raw[start..end]) {
                return Some(v);
            }
        }
    }
    None
}

fn entity_array(value: &Value) -> Result<&Vec<Value>, ParseError> {
    match value {
        Value::Array(items) => Ok(items),
        Value::Object(map) => match map.get("entities") {
            Some(Value::Array(items)) => Ok(items),
            _ => Err(ParseError::Schema("expected an `entities` array".into())),
        },
        _ => Err(ParseError::Schema("expected an array or object".into())),
    }
}

fn string_fields<const N: usize>(
    index: usize,
    entry: &Value,
    keys: [&'static str; N],
) -> Result<[String; N], ParseError> {
    let obj = entry
        .as_object()
        .ok_or_else(|| ParseError::Schema(format!("entry {index} is not an object")))?;
    if let Some(extra) = obj.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(ParseError::UnexpectedKey {
            index,
            key: extra.clone(),
        });
    }
    let mut out: [String; N] = std::array::from_fn(|_| String::new());
    for (slot, key) in out.iter_mut().zip(keys) {
        *slot = match obj.get(key) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => return Err(ParseError::MissingKey { index, key }),
            Some(other) => other.to_string(),
        };
    }
    Ok(out)
}

fn suggestions(value: Option<&Value>) -> Vec<String> {
    match value.and_then(|v| v.get("suggestions")) {
        Some(Value::Array(items)) => items.iter().filter_map(|v| v.as_str().map(str::to_owned)).collect(),
        _ => Vec::new(),
    }
}

fn count_warning(what: &str, n: usize, lo: usize, hi: usize) -> Option<String> {
    (n < lo || n > hi).then(|| format!("expected {lo}–{hi} {what}, got {n}"))
}

fn section_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.trim().to_owned(),
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string()))
            .collect::<Vec<_>>()
            .join("\n"),
        other => other.to_string(),
    }
}

const SECTIONS: [(&str, &str); 3] = [
    ("chain_assessment", "Chain Assessment"),
    ("biological_interpretation", "Biological Interpretation"),
    ("suggested_improvements", "Suggested Improvements"),
];

fn chain_sections_from_json(map: &Map<String, Value>) -> Option<ChainAnalysis> {
    let get = |k: &str| map.get(k).map(section_text);
    Some(ChainAnalysis {
        chain_assessment: get(SECTIONS[0].0)?,
        biological_interpretation: get(SECTIONS[1].0)?,
        suggested_improvements: get(SECTIONS[2].0)?,
    })
}

/// Splits a markdown answer on lines mentioning each section title.
fn chain_sections_from_text(raw: &str) -> Result<ChainAnalysis, ParseError> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut starts = [None; 3];
    for (i, line) in lines.iter().enumerate() {
        let lower = line.to_lowercase();
        for (k, (_, title)) in SECTIONS.iter().enumerate() {
            if starts[k].is_none() && lower.contains(&title.to_lowercase()) {
                starts[k] = Some(i);
            }
        }
    }
    let mut found = [0usize; 3];
    for (k, s) in starts.iter().enumerate() {
        found[k] = s.ok_or(ParseError::MissingSection(SECTIONS[k].1))?;
    }
    let body = |k: usize| {
        let from = found[k] + 1;
        let to = found
            .iter()
            .copied()
            .filter(|&s| s > found[k])
            .min()
            .unwrap_or(lines.len());
        lines[from..to].join("\n").trim().to_owned()
    };
    Ok(ChainAnalysis {
        chain_assessment: body(0),
        biological_interpretation: body(1),
        suggested_improvements: body(2),
    })
}

pub fn parse_response(template: TemplateName, raw: &str) -> Result<Parsed, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let json = extract_json(raw);
    let mut warnings = Vec::new();
    let payload = match template {
        TemplateName::RecommendEntities => {
            let value = json.as_ref().ok_or(ParseError::NoJson)?;
            let entities = entity_array(value)?
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    string_fields(i, e, ["entity_name", "category", "reason"]).map(|[n, c, r]| RecommendedEntity {
                        entity_name: n,
                        category: c,
                        reason: r,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            warnings.extend(count_warning("recommended entities", entities.len(), 5, 7));
            Payload::Recommendations(entities)
        }
        TemplateName::RetrieveByHypothesis => {
            let value = json.as_ref().ok_or(ParseError::NoJson)?;
            let entities = entity_array(value)?
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    string_fields(i, e, ["entity_name", "category", "description"]).map(|[n, c, d]| RetrievedEntity {
                        entity_name: n,
                        category: c,
                        description: d,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            warnings.extend(count_warning("retrieved entities", entities.len(), 15, 20));
            Payload::RetrievedEntities(entities)
        }
        TemplateName::AnalysePath => {
            let value = json.as_ref().ok_or(ParseError::NoJson)?;
            let map = value
                .as_object()
                .ok_or_else(|| ParseError::Schema("expected an object".into()))?;
            let hops = match map.get("hops") {
                Some(Value::Array(items)) => items
                    .iter()
                    .enumerate()
                    .map(|(i, h)| {
                        string_fields(i, h, ["subject", "relationship", "object", "explanation"]).map(
                            |[subject, relationship, object, explanation]| HopExplanation {
                                subject,
                                relationship,
                                object,
                                explanation,
                            },
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                _ => return Err(ParseError::Schema("missing `hops` array".into())),
            };
            let hypothesis_chain = match map.get("hypothesis_chain") {
                Some(Value::String(s)) => s.clone(),
                _ => return Err(ParseError::Schema("missing `hypothesis_chain` string".into())),
            };
            Payload::PathAnalysis(PathAnalysis { hops, hypothesis_chain })
        }
        TemplateName::AnalyzeImproveChain => {
            let from_json = json
                .as_ref()
                .and_then(Value::as_object)
                .and_then(chain_sections_from_json);
            match from_json {
                Some(sections) => Payload::ChainAnalysis(sections),
                None => Payload::ChainAnalysis(chain_sections_from_text(raw)?),
            }
        }
        TemplateName::GeneralResponse => Payload::Text(raw.to_owned()),
    };
    Ok(Parsed {
        payload,
        suggestions: suggestions(json.as_ref()),
        warnings,
    })
}
