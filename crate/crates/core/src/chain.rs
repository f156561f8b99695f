//! Hypothesis chains: three hypothesis positions, each resolved to a set of KG
//! entities, matched against the 3-hop paths of a prediction store.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    assemble_kg_context, default_format_bindings, ChainAnalysis, Gateway, GatewayError, GatewayRequest, Mode, Payload,
};
use crate::graph::KnowledgeGraph;
use crate::predictions::{PredictionStore, HOPS};

/// Default number of entities requested per hypothesis position.
pub const DEFAULT_PREVIEW_K: usize = 20;
/// Cap on the triplet lines sent as knowledge-graph context for a retrieval prompt.
pub const PREVIEW_CONTEXT_TRIPLETS: usize = 80;

/// Subset of {H1, H2, H3} as a bitmask: bit 0 is H1, bit 2 is H3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HypothesisSet(u8);

impl HypothesisSet {
    pub const EMPTY: HypothesisSet = HypothesisSet(0);
    pub const ALL: HypothesisSet = HypothesisSet(0b111);

    /// The seven non-empty subsets in UpSet column order: singletons, then
    /// adjacent pairs, then the outer pair, then all three.
    pub const NON_EMPTY: [HypothesisSet; 7] = [
        HypothesisSet(0b001),
        HypothesisSet(0b010),
        HypothesisSet(0b100),
        HypothesisSet(0b011),
        HypothesisSet(0b110),
        HypothesisSet(0b101),
        HypothesisSet(0b111),
    ];

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits <= 0b111).then_some(Self(bits))
    }

    /// Set containing only hypothesis `position` (zero-based).
    pub fn single(position: usize) -> Self {
        assert!(position < HOPS, "hypothesis position {position} out of range");
        Self(1 << position)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, position: usize) -> bool {
        position < HOPS && self.0 & (1 << position) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_superset(self, other: HypothesisSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn with(self, position: usize) -> Self {
        Self(self.0 | Self::single(position).0)
    }

    /// `"H1&H3"`; `"∅"` for the empty set.
    pub fn label(self) -> String {
        if self.is_empty() {
            return "∅".into();
        }
        (0..HOPS)
            .filter(|&i| self.contains(i))
            .map(|i| format!("H{}", i + 1))
            .collect::<Vec<_>>()
            .join("&")
    }

    /// Bit string with H1 leftmost: {H2, H3} is `"011"`.
    pub fn mask_string(self) -> String {
        (0..HOPS).map(|i| if self.contains(i) { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for HypothesisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid hypothesis subset {0:?} (expected e.g. \"H2,H3\", \"2,3\" or \"011\")")]
pub struct SubsetParseError(pub String);

impl FromStr for HypothesisSet {
    type Err = SubsetParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || SubsetParseError(s.to_owned());
        let t = s.trim().trim_start_matches('{').trim_end_matches('}').trim();
        if t.len() == HOPS && t.chars().all(|c| c == '0' || c == '1') {
            let mut set = HypothesisSet::EMPTY;
            for (i, c) in t.chars().enumerate() {
                if c == '1' {
                    set = set.with(i);
                }
            }
            return Ok(set);
        }
        let mut set = HypothesisSet::EMPTY;
        for part in t.split([',', '&', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            let digits = part.strip_prefix(['H', 'h']).unwrap_or(part);
            let n: usize = digits.parse().map_err(|_| err())?;
            if !(1..=HOPS).contains(&n) {
                return Err(err());
            }
            set = set.with(n - 1);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMatch {
    pub entity_id: String,
    pub entity_name: String,
    pub category: String,
    #[serde(default)]
    pub justification: String,
    /// 1-based; contiguous within a position.
    pub alignment_rank: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisNode {
    pub description: String,
    /// Free-text relation leading into this position.
    #[serde(default)]
    pub relation: String,
    /// KG relation labels the descriptor maps to; empty means unconstrained.
    #[serde(default)]
    pub relation_labels: Vec<String>,
    #[serde(default)]
    pub entities: Vec<EntityMatch>,
}

impl HypothesisNode {
    pub fn entity_ids(&self) -> HashSet<&str> {
        self.entities.iter().map(|e| e.entity_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainStatus {
    #[default]
    Draft,
    Analyzed,
    Retrieved,
}

impl fmt::Display for ChainStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainStatus::Draft => "draft",
            ChainStatus::Analyzed => "analyzed",
            ChainStatus::Retrieved => "retrieved",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisChain {
    pub id: String,
    pub positions: [HypothesisNode; HOPS],
    #[serde(default)]
    pub status: ChainStatus,
    /// Verbatim response of the last analysis.
    #[serde(default)]
    pub critique: Option<String>,
    #[serde(default)]
    pub analysis: Option<ChainAnalysis>,
}

impl HypothesisChain {
    pub fn position(&self, index: usize) -> Result<&HypothesisNode, ChainError> {
        self.positions.get(index).ok_or(ChainError::Position(index))
    }

    pub fn is_resolved(&self) -> bool {
        self.positions.iter().all(|p| !p.entities.is_empty())
    }

    /// `[H1] -relation-> [H2] -relation-> [H3]` rendering used in prompts.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.positions.iter().enumerate() {
            if i > 0 {
                let rel = if p.relation.is_empty() {
                    "related to"
                } else {
                    &p.relation
                };
                out.push_str(&format!(" -{rel}-> "));
            }
            out.push_str(&format!("[{}]", p.description));
        }
        out
    }

    /// Marks the chain as retrieved after a successful `match_chain`.
    pub fn mark_retrieved(&mut self) {
        self.status = ChainStatus::Retrieved;
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("a chain needs exactly {HOPS} hypothesis positions, got {0}")]
    Arity(usize),
    #[error("hypothesis H{} has an empty description", .0 + 1)]
    EmptyDescription(usize),
    #[error("no hypothesis position {0}")]
    Position(usize),
    #[error("hypothesis H{} has no resolved entities", .0 + 1)]
    Unresolved(usize),
    #[error("entity {0:?} is not in the knowledge graph")]
    UnknownEntity(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("none of the entities returned for H{} resolve in the knowledge graph", .0 + 1)]
    NoResolvable(usize),
    #[error("chain is {0}; this operation needs a draft or analyzed chain")]
    Status(ChainStatus),
    #[error("subset must be non-empty")]
    EmptySubset,
    #[error("unexpected response payload for {0}")]
    Payload(&'static str),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One position of a chain as supplied at creation time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionSpec {
    pub description: String,
    #[serde(default)]
    pub relation: String,
    #[serde(default)]
    pub relation_labels: Vec<String>,
}

pub fn create_chain(id: impl Into<String>, positions: Vec<PositionSpec>) -> Result<HypothesisChain, ChainError> {
    let positions: [PositionSpec; HOPS] = positions.try_into().map_err(|v: Vec<_>| ChainError::Arity(v.len()))?;
    if let Some(i) = positions.iter().position(|p| p.description.trim().is_empty()) {
        return Err(ChainError::EmptyDescription(i));
    }
    Ok(HypothesisChain {
        id: id.into(),
        positions: positions.map(|p| HypothesisNode {
            description: p.description,
            relation: p.relation,
            relation_labels: dedup(p.relation_labels),
            entities: Vec::new(),
        }),
        status: ChainStatus::Draft,
        critique: None,
        analysis: None,
    })
}

fn dedup(labels: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    labels.into_iter().filter(|l| seen.insert(l.clone())).collect()
}

/// Replaces the entity set of one position with the given entity references
/// (ids or names), in order. Editing a chain returns it to draft.
pub fn set_entities(
    chain: &mut HypothesisChain,
    position: usize,
    refs: &[String],
    g: &KnowledgeGraph,
) -> Result<(), ChainError> {
    chain.position(position)?;
    let mut matches: Vec<EntityMatch> = Vec::new();
    for r in refs {
        let e = g.resolve_ref(r).map_err(|_| ChainError::UnknownEntity(r.clone()))?;
        if matches.iter().any(|m| m.entity_id == e.id) {
            continue;
        }
        matches.push(EntityMatch {
            entity_id: e.id.clone(),
            entity_name: e.name.clone(),
            category: e.category.clone(),
            justification: String::new(),
            alignment_rank: matches.len() as u32 + 1,
        });
    }
    chain.positions[position].entities = matches;
    chain.status = ChainStatus::Draft;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preview {
    pub position: usize,
    pub matches: Vec<EntityMatch>,
    /// Names returned by the model that are not KG entities.
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Asks the gateway for entities aligned with one hypothesis and stores the
/// resolvable ones (at most `k`, ranked in response order) on the position.
pub fn preview_entities(
    chain: &mut HypothesisChain,
    position: usize,
    k: usize,
    gateway: &Gateway,
    g: &KnowledgeGraph,
    mode: Mode,
) -> Result<Preview, ChainError> {
    if k == 0 {
        return Err(ChainError::ZeroK);
    }
    let node = chain.position(position)?;
    if node.description.trim().is_empty() {
        return Err(ChainError::EmptyDescription(position));
    }
    let kg = assemble_kg_context(&node.description, g, 1, PREVIEW_CONTEXT_TRIPLETS);
    let mut bindings = default_format_bindings(crate::gateway::TemplateName::RetrieveByHypothesis);
    bindings.insert(
        "history".into(),
        format!(
            "user: Hypothesis chain: {}\nuser: Retrieve KG entities for hypothesis H{}: {}",
            chain.describe(),
            position + 1,
            node.description
        ),
    );
    bindings.insert("kg_context".into(), kg.text);
    let resp = gateway.complete(&GatewayRequest {
        template: crate::gateway::TemplateName::RetrieveByHypothesis,
        bindings,
        mode,
        timeout: None,
    })?;
    let Payload::RetrievedEntities(found) = resp.parsed.payload else {
        return Err(ChainError::Payload("entity retrieval"));
    };
    let mut warnings = resp.parsed.warnings;
    let mut matches: Vec<EntityMatch> = Vec::new();
    let mut dropped = Vec::new();
    for item in found {
        match g.resolve_name(&item.entity_name) {
            Ok(e) => {
                if matches.len() < k && !matches.iter().any(|m| m.entity_id == e.id) {
                    matches.push(EntityMatch {
                        entity_id: e.id.clone(),
                        entity_name: e.name.clone(),
                        category: e.category.clone(),
                        justification: item.description,
                        alignment_rank: matches.len() as u32 + 1,
                    });
                }
            }
            Err(err) => {
                log::warn!("dropping non-KG entity from retrieval: {err}");
                dropped.push(item.entity_name);
            }
        }
    }
    if !dropped.is_empty() {
        warnings.push(format!(
            "dropped {} name(s) not present in the knowledge graph",
            dropped.len()
        ));
    }
    if matches.is_empty() {
        return Err(ChainError::NoResolvable(position));
    }
    chain.positions[position].entities = matches.clone();
    chain.status = ChainStatus::Draft;
    Ok(Preview {
        position,
        matches,
        dropped,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intersection {
    pub subset: HypothesisSet,
    pub label: String,
    pub mask: String,
    /// Records whose bitmask equals the subset.
    pub exclusive: usize,
    /// Records whose bitmask contains the subset.
    pub inclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMatchReport {
    pub chain_id: String,
    pub dataset_id: String,
    pub total: usize,
    /// One bitmask per prediction record, in store order.
    pub masks: Vec<HypothesisSet>,
    /// Records satisfying each hypothesis (UpSet bar heights).
    pub hypothesis_counts: [usize; HOPS],
    pub intersections: Vec<Intersection>,
    /// Records with an empty bitmask.
    pub unmatched: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ChainMatchReport {
    pub fn from_masks(
        chain_id: impl Into<String>,
        dataset_id: impl Into<String>,
        masks: Vec<HypothesisSet>,
        warnings: Vec<String>,
    ) -> Self {
        let mut exclusive = [0usize; 8];
        for m in &masks {
            exclusive[m.bits() as usize] += 1;
        }
        let inclusive = |s: HypothesisSet| {
            (0u8..8)
                .filter(|&b| HypothesisSet(b).is_superset(s))
                .map(|b| exclusive[b as usize])
                .sum::<usize>()
        };
        let intersections = HypothesisSet::NON_EMPTY
            .iter()
            .map(|&s| Intersection {
                subset: s,
                label: s.label(),
                mask: s.mask_string(),
                exclusive: exclusive[s.bits() as usize],
                inclusive: inclusive(s),
            })
            .collect();
        let hypothesis_counts = [0, 1, 2].map(|i| inclusive(HypothesisSet::single(i)));
        Self {
            chain_id: chain_id.into(),
            dataset_id: dataset_id.into(),
            total: masks.len(),
            unmatched: exclusive[0],
            masks,
            hypothesis_counts,
            intersections,
            warnings,
        }
    }

    pub fn intersection(&self, subset: HypothesisSet) -> Option<&Intersection> {
        self.intersections.iter().find(|i| i.subset == subset)
    }
}

struct PositionConstraint<'c> {
    entities: HashSet<&'c str>,
    labels: Option<HashSet<&'c str>>,
}

/// Computes each record's bitmask: bit i is set iff the entity reached at hop
/// i is in position i's entity set and, when the position declares KG relation
/// labels, hop i's relation is one of them.
pub fn match_chain(
    chain: &HypothesisChain,
    store: &PredictionStore,
    g: &KnowledgeGraph,
) -> Result<ChainMatchReport, ChainError> {
    let mut warnings = Vec::new();
    let mut constraints = Vec::with_capacity(HOPS);
    for (i, p) in chain.positions.iter().enumerate() {
        if p.entities.is_empty() {
            return Err(ChainError::Unresolved(i));
        }
        if let Some(e) = p.entities.iter().find(|e| !g.contains(&e.entity_id)) {
            return Err(ChainError::UnknownEntity(e.entity_id.clone()));
        }
        let known: HashSet<&str> = p
            .relation_labels
            .iter()
            .map(String::as_str)
            .filter(|l| g.has_relation(l))
            .collect();
        let unknown: BTreeSet<&str> = p
            .relation_labels
            .iter()
            .map(String::as_str)
            .filter(|l| !known.contains(l))
            .collect();
        if !unknown.is_empty() {
            warnings.push(format!(
                "H{}: relation label(s) {:?} are not in the KG vocabulary",
                i + 1,
                unknown
            ));
        }
        let labels = if known.is_empty() {
            if !p.relation.trim().is_empty() || !p.relation_labels.is_empty() {
                warnings.push(format!(
                    "H{}: relation {:?} maps to no KG relation label; the relation constraint is not applied",
                    i + 1,
                    p.relation
                ));
            }
            None
        } else {
            Some(known)
        };
        constraints.push(PositionConstraint {
            entities: p.entity_ids(),
            labels,
        });
    }
    let masks = store
        .records()
        .iter()
        .map(|r| {
            let mut m = HypothesisSet::EMPTY;
            for (i, (hop, c)) in r.path.iter().zip(&constraints).enumerate() {
                let relation_ok = c.labels.as_ref().is_none_or(|l| l.contains(hop.relation.as_str()));
                if relation_ok && c.entities.contains(hop.entity.as_str()) {
                    m = m.with(i);
                }
            }
            m
        })
        .collect();
    Ok(ChainMatchReport::from_masks(
        &chain.id,
        store.dataset_id(),
        masks,
        warnings,
    ))
}

/// Record ids (store order) whose bitmask equals `subset` (exclusive) or
/// contains it.
pub fn upset_slice(
    report: &ChainMatchReport,
    subset: HypothesisSet,
    exclusive: bool,
) -> Result<Vec<usize>, ChainError> {
    if subset.is_empty() {
        return Err(ChainError::EmptySubset);
    }
    Ok(report
        .masks
        .iter()
        .enumerate()
        .filter(|(_, &m)| if exclusive { m == subset } else { m.is_superset(subset) })
        .map(|(i, _)| i)
        .collect())
}

/// Sends the chain for critique. On success the verbatim response is stored
/// and the chain becomes analyzed; on failure the chain is left untouched.
pub fn analyze_chain(
    chain: &mut HypothesisChain,
    gateway: &Gateway,
    history: &str,
    mode: Mode,
) -> Result<ChainAnalysis, ChainError> {
    if chain.status == ChainStatus::Retrieved {
        return Err(ChainError::Status(chain.status));
    }
    let template = crate::gateway::TemplateName::AnalyzeImproveChain;
    let mut bindings = default_format_bindings(template);
    let mut h = history.to_owned();
    if !h.is_empty() && !h.ends_with('\n') {
        h.push('\n');
    }
    h.push_str(&format!(
        "user: Analyze and improve this 3-hop hypothesis chain: {}",
        chain.describe()
    ));
    bindings.insert("history".into(), h);
    let resp = gateway.complete(&GatewayRequest {
        template,
        bindings,
        mode,
        timeout: None,
    })?;
    let Payload::ChainAnalysis(analysis) = resp.parsed.payload else {
        return Err(ChainError::Payload("chain analysis"));
    };
    chain.critique = Some(resp.raw);
    chain.analysis = Some(analysis.clone());
    chain.status = ChainStatus::Analyzed;
    Ok(analysis)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: &str) -> PositionSpec {
        PositionSpec {
            description: d.into(),
            ..Default::default()
        }
    }

    #[test]
    fn subset_parsing_and_labels() {
        let s: HypothesisSet = "H2,H3".parse().unwrap();
        assert_eq!(s.bits(), 0b110);
        assert_eq!(s.mask_string(), "011");
        assert_eq!(s.label(), "H2&H3");
        assert_eq!("2,3".parse::<HypothesisSet>().unwrap(), s);
        assert_eq!("011".parse::<HypothesisSet>().unwrap(), s);
        assert_eq!("{H2,H3}".parse::<HypothesisSet>().unwrap(), s);
        assert!("H4".parse::<HypothesisSet>().is_err());
        assert!("".parse::<HypothesisSet>().unwrap().is_empty());
        assert_eq!(HypothesisSet::NON_EMPTY[4], s);
    }

    #[test]
    fn arity_and_descriptions() {
        assert_eq!(
            create_chain("c", vec![spec("a"), spec("b")]).unwrap_err(),
            ChainError::Arity(2)
        );
        assert_eq!(
            create_chain("c", vec![spec("a"), spec(" "), spec("c")]).unwrap_err(),
            ChainError::EmptyDescription(1)
        );
        let c = create_chain("c", vec![spec("a"), spec("a"), spec("a")]).unwrap();
        assert_eq!(c.status, ChainStatus::Draft);
        assert!(c.positions.iter().all(|p| p.entities.is_empty()));
    }

    #[test]
    fn report_identities() {
        let masks: Vec<_> = [0u8, 1, 3, 7, 7, 6, 6, 4, 2, 5]
            .iter()
            .map(|&b| HypothesisSet::from_bits(b).unwrap())
            .collect();
        let r = ChainMatchReport::from_masks("c", "d", masks, vec![]);
        assert_eq!(r.unmatched, 1);
        assert_eq!(
            r.intersections.iter().map(|i| i.exclusive).sum::<usize>() + r.unmatched,
            10
        );
        assert_eq!(r.hypothesis_counts, [5, 6, 6]);
        assert_eq!(upset_slice(&r, "H2,H3".parse().unwrap(), true).unwrap(), vec![5, 6]);
        assert_eq!(
            upset_slice(&r, "H2,H3".parse().unwrap(), false).unwrap(),
            vec![3, 4, 5, 6]
        );
        assert_eq!(
            upset_slice(&r, HypothesisSet::EMPTY, true),
            Err(ChainError::EmptySubset)
        );
    }

    #[test]
    fn chain_serializes_with_three_positions() {
        let c = create_chain("c", vec![spec("a"), spec("b"), spec("c")]).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["positions"].as_array().unwrap().len(), 3);
        assert_eq!(v["status"], "draft");
        let mut bad = v.clone();
        bad["positions"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<HypothesisChain>(bad).is_err());
        assert_eq!(serde_json::from_value::<HypothesisChain>(v).unwrap(), c);
    }
}
