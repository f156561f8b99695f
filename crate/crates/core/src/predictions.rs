//! Ranked link predictions with three-hop interpretative paths.
//!
//! Records are ingested from JSON lines:
//!
//! ```text
//! {"head":"G1","tail":"G7","score":0.93,"rank":1,"path":[{"relation":"sl_gsg","weight":0.8,"entity":"G4"}, ...]}
//! ```
//!
//! Ranks are trusted from the file but cross-checked against scores; a file
//! whose ranks disagree with its scores is rejected rather than re-ranked.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainMatchReport, HypothesisSet};
use crate::graph::KnowledgeGraph;

pub const HOPS: usize = 3;
pub const DEFAULT_TOP_N: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hop {
    pub relation: String,
    pub weight: f64,
    pub entity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Stable record id: zero-based position in the source file.
    pub id: usize,
    pub head: String,
    pub tail: String,
    pub score: f64,
    pub rank: u32,
    pub path: [Hop; HOPS],
}

impl PredictionRecord {
    /// Head followed by the entity reached at each hop.
    pub fn path_entities(&self) -> [&str; HOPS + 1] {
        [
            &self.head,
            &self.path[0].entity,
            &self.path[1].entity,
            &self.path[2].entity,
        ]
    }

    pub fn relations(&self) -> [&str; HOPS] {
        [&self.path[0].relation, &self.path[1].relation, &self.path[2].relation]
    }

    pub fn is_relation_homogeneous(&self, label: &str) -> bool {
        self.path.iter().all(|h| h.relation == label)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    head: String,
    tail: String,
    score: f64,
    rank: i64,
    path: Vec<Hop>,
}

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: interpretative path must have exactly {HOPS} hops, found {found}")]
    HopCount { line: usize, found: usize },
    #[error("line {line}: unknown entity id {id:?}")]
    UnresolvedId { line: usize, id: String },
    #[error("head {head:?}: {message}")]
    RankInconsistent { head: String, message: String },
    #[error("unknown head entity {0:?}")]
    UnknownHead(String),
    #[error("unknown record id {0}")]
    UnknownRecord(usize),
    #[error("report was computed over dataset {report:?} ({report_len} records), store holds {store:?} ({store_len} records)")]
    DatasetMismatch {
        report: String,
        report_len: usize,
        store: String,
        store_len: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("entity term position {0} out of range 0..=3")]
    EntityPosition(usize),
    #[error("relation term position {0} out of range 1..=3")]
    RelationPosition(usize),
    #[error("edge weight hop {0} out of range 1..=3")]
    HopIndex(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityTerm {
    /// 0 is the head, 1..=3 the entity reached at that hop.
    pub position: usize,
    /// Entity id or display name.
    pub entity: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationTerm {
    /// Hop number, 1..=3.
    pub position: usize,
    pub relation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionFilter {
    pub head: Option<String>,
    /// Category of the tail entity.
    pub category: Option<String>,
    pub entity_terms: Vec<EntityTerm>,
    pub relation_terms: Vec<RelationTerm>,
    /// Drop records whose three hop relations all equal this label.
    pub exclude_relation_homogeneous: Option<String>,
    pub min_score: Option<f64>,
}

/// A filter with entity references resolved against a graph.
#[derive(Debug, Clone)]
pub struct CompiledFilter {
    head: Option<Option<String>>,
    category: Option<String>,
    entity_terms: Vec<(usize, Option<String>)>,
    relation_terms: Vec<(usize, String)>,
    exclude: Option<String>,
    min_score: Option<f64>,
}

fn resolve_term(g: &KnowledgeGraph, reference: &str) -> Option<String> {
    g.resolve_ref(reference).ok().map(|e| e.id.clone())
}

impl PredictionFilter {
    pub fn validate(&self) -> Result<(), FilterError> {
        for t in &self.entity_terms {
            if t.position > HOPS {
                return Err(FilterError::EntityPosition(t.position));
            }
        }
        for t in &self.relation_terms {
            if t.position == 0 || t.position > HOPS {
                return Err(FilterError::RelationPosition(t.position));
            }
        }
        Ok(())
    }

    pub fn compile(&self, g: &KnowledgeGraph) -> Result<CompiledFilter, FilterError> {
        self.validate()?;
        Ok(CompiledFilter {
            head: self.head.as_deref().map(|h| resolve_term(g, h)),
            category: self.category.clone(),
            entity_terms: self
                .entity_terms
                .iter()
                .map(|t| (t.position, resolve_term(g, &t.entity)))
                .collect(),
            relation_terms: self
                .relation_terms
                .iter()
                .map(|t| (t.position, t.relation.clone()))
                .collect(),
            exclude: self.exclude_relation_homogeneous.clone(),
            min_score: self.min_score,
        })
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl CompiledFilter {
    pub fn matches(&self, record: &PredictionRecord, tail_category: &str) -> bool {
        if let Some(head) = &self.head {
            if head.as_deref() != Some(record.head.as_str()) {
                return false;
            }
        }
        if let Some(cat) = &self.category {
            if cat != tail_category {
                return false;
            }
        }
        let entities = record.path_entities();
        for (pos, id) in &self.entity_terms {
            if id.as_deref() != Some(entities[*pos]) {
                return false;
            }
        }
        for (pos, rel) in &self.relation_terms {
            if record.path[pos - 1].relation != *rel {
                return false;
            }
        }
        if let Some(label) = &self.exclude {
            if record.is_relation_homogeneous(label) {
                return false;
            }
        }
        if let Some(min) = self.min_score {
            if record.score < min {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "column", content = "hop", rename_all = "snake_case")]
pub enum SortKey {
    Score,
    EdgeWeight(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Asc,
    #[default]
    Desc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredRow<'a> {
    pub record: &'a PredictionRecord,
    /// 1-based position in the filtered order.
    pub display_rank: usize,
    pub starred: bool,
}

/// Which satisfaction masks earn a star.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarPolicy {
    /// every hypothesis in the chain satisfied
    #[default]
    AllHypotheses,
    /// at least one hypothesis satisfied
    AnyHypothesis,
}

impl StarPolicy {
    pub fn stars(self, mask: HypothesisSet) -> bool {
        match self {
            StarPolicy::AllHypotheses => mask == HypothesisSet::ALL,
            StarPolicy::AnyHypothesis => !mask.is_empty(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PredictionStore {
    dataset_id: String,
    records: Vec<PredictionRecord>,
    raw: Vec<String>,
    tail_categories: Vec<String>,
    by_head: BTreeMap<String, Vec<usize>>,
    /// every record in (rank, head, tail, id) order
    order: Vec<usize>,
    stars: Vec<bool>,
    star_chain: Option<String>,
    clamped_weights: usize,
}

impl PredictionStore {
    pub fn load(dataset_id: &str, path: impl AsRef<Path>, g: &KnowledgeGraph) -> Result<Self, PredictionError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PredictionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl(dataset_id, &text, g)
    }

    pub fn from_jsonl(dataset_id: &str, text: &str, g: &KnowledgeGraph) -> Result<Self, PredictionError> {
        let mut parsed = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(line).map_err(|e| PredictionError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
            parsed.push((line_no, line.to_owned(), raw));
        }
        Self::build(dataset_id, parsed, g)
    }

    /// Builds a store from records already in memory; `id` fields are reassigned.
    pub fn from_records(
        dataset_id: &str,
        records: &[PredictionRecord],
        g: &KnowledgeGraph,
    ) -> Result<Self, PredictionError> {
        Self::from_jsonl(dataset_id, &to_jsonl(records), g)
    }

    fn build(
        dataset_id: &str,
        parsed: Vec<(usize, String, RawRecord)>,
        g: &KnowledgeGraph,
    ) -> Result<Self, PredictionError> {
        let mut store = Self {
            dataset_id: dataset_id.to_owned(),
            ..Default::default()
        };
        let mut lines = Vec::with_capacity(parsed.len());
        for (line, text, raw) in parsed {
            let record = store.validate(line, raw, g)?;
            store
                .tail_categories
                .push(g.entity(&record.tail).map(|e| e.category.clone()).unwrap_or_default());
            store.by_head.entry(record.head.clone()).or_default().push(record.id);
            store.records.push(record);
            store.raw.push(text);
            lines.push(line);
        }
        if store.clamped_weights > 0 {
            log::warn!(
                "{dataset_id}: clamped {} edge weights into [0, 1]",
                store.clamped_weights
            );
        }
        let records = &store.records;
        for (head, ids) in store.by_head.iter_mut() {
            ids.sort_by_key(|&i| (records[i].rank, i));
            verify_head_ranks(head, ids, records, &lines)?;
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| global_cmp(&records[a], &records[b]));
        store.order = order;
        store.stars = vec![false; store.records.len()];
        Ok(store)
    }

    fn validate(
        &mut self,
        line: usize,
        raw: RawRecord,
        g: &KnowledgeGraph,
    ) -> Result<PredictionRecord, PredictionError> {
        let malformed = |message: String| PredictionError::Malformed { line, message };
        if raw.path.len() != HOPS {
            return Err(PredictionError::HopCount {
                line,
                found: raw.path.len(),
            });
        }
        if !raw.score.is_finite() {
            return Err(malformed("score must be finite".into()));
        }
        if raw.rank < 1 || raw.rank > u32::MAX as i64 {
            return Err(malformed(format!(
                "rank must be a positive integer, found {}",
                raw.rank
            )));
        }
        for id in [&raw.head, &raw.tail] {
            if !g.contains(id) {
                return Err(PredictionError::UnresolvedId { line, id: id.clone() });
            }
        }
        let mut hops = raw.path;
        for hop in hops.iter_mut() {
            if !g.contains(&hop.entity) {
                return Err(PredictionError::UnresolvedId {
                    line,
                    id: hop.entity.clone(),
                });
            }
            if hop.relation.is_empty() {
                return Err(malformed("hop relation must be non-empty".into()));
            }
            if !hop.weight.is_finite() {
                return Err(malformed("edge weight must be finite".into()));
            }
            if !(0.0..=1.0).contains(&hop.weight) {
                hop.weight = hop.weight.clamp(0.0, 1.0);
                self.clamped_weights += 1;
            }
        }
        if hops[HOPS - 1].entity != raw.tail {
            return Err(malformed(format!(
                "last hop reaches {:?} but tail is {:?}",
                hops[HOPS - 1].entity,
                raw.tail
            )));
        }
        let path: [Hop; HOPS] = hops.try_into().expect("length checked");
        Ok(PredictionRecord {
            id: self.records.len(),
            head: raw.head,
            tail: raw.tail,
            score: raw.score,
            rank: raw.rank as u32,
            path,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn record(&self, id: usize) -> Result<&PredictionRecord, PredictionError> {
        self.records.get(id).ok_or(PredictionError::UnknownRecord(id))
    }

    /// The source line a record was loaded from, byte for byte.
    pub fn raw_line(&self, id: usize) -> Result<&str, PredictionError> {
        self.raw
            .get(id)
            .map(String::as_str)
            .ok_or(PredictionError::UnknownRecord(id))
    }

    pub fn tail_category(&self, id: usize) -> &str {
        &self.tail_categories[id]
    }

    pub fn clamped_weights(&self) -> usize {
        self.clamped_weights
    }

    pub fn heads(&self) -> impl Iterator<Item = &str> {
        self.by_head.keys().map(String::as_str)
    }

    /// Records for `head` in ascending rank, at most `n` of them.
    pub fn top_tails(&self, head: &str, n: usize) -> Result<Vec<&PredictionRecord>, PredictionError> {
        let ids = self
            .by_head
            .get(head)
            .ok_or_else(|| PredictionError::UnknownHead(head.to_owned()))?;
        Ok(ids.iter().take(n).map(|&i| &self.records[i]).collect())
    }

    /// All records in (rank, head, tail) order with display ranks 1..=n.
    pub fn unfiltered(&self) -> Vec<FilteredRow<'_>> {
        self.rows(self.order.iter().copied())
    }

    /// Applies `filter`, keeping the original rank order. Surviving records
    /// are renumbered 1..=k in `display_rank`.
    pub fn filter_and_rerank(
        &self,
        filter: &PredictionFilter,
        g: &KnowledgeGraph,
    ) -> Result<Vec<FilteredRow<'_>>, FilterError> {
        let compiled = filter.compile(g)?;
        Ok(self.rows(
            self.order
                .iter()
                .copied()
                .filter(|&i| compiled.matches(&self.records[i], &self.tail_categories[i])),
        ))
    }

    fn rows(&self, ids: impl Iterator<Item = usize>) -> Vec<FilteredRow<'_>> {
        ids.enumerate()
            .map(|(pos, i)| FilteredRow {
                record: &self.records[i],
                display_rank: pos + 1,
                starred: self.stars[i],
            })
            .collect()
    }

    /// Replaces star flags from a match report. Returns the number of starred records.
    pub fn mark_alignment(&mut self, report: &ChainMatchReport, policy: StarPolicy) -> Result<usize, PredictionError> {
        if report.dataset_id != self.dataset_id || report.masks.len() != self.records.len() {
            return Err(PredictionError::DatasetMismatch {
                report: report.dataset_id.clone(),
                report_len: report.masks.len(),
                store: self.dataset_id.clone(),
                store_len: self.records.len(),
            });
        }
        for (star, &mask) in self.stars.iter_mut().zip(&report.masks) {
            *star = policy.stars(mask);
        }
        self.star_chain = Some(report.chain_id.clone());
        Ok(self.stars.iter().filter(|&&s| s).count())
    }

    pub fn clear_stars(&mut self) {
        self.stars.iter_mut().for_each(|s| *s = false);
        self.star_chain = None;
    }

    pub fn is_starred(&self, id: usize) -> bool {
        self.stars.get(id).copied().unwrap_or(false)
    }

    pub fn starred_ids(&self) -> Vec<usize> {
        (0..self.stars.len()).filter(|&i| self.stars[i]).collect()
    }

    pub fn star_chain(&self) -> Option<&str> {
        self.star_chain.as_deref()
    }
}

fn global_cmp(a: &PredictionRecord, b: &PredictionRecord) -> Ordering {
    a.rank
        .cmp(&b.rank)
        .then_with(|| a.head.cmp(&b.head))
        .then_with(|| a.tail.cmp(&b.tail))
        .then_with(|| a.id.cmp(&b.id))
}

fn verify_head_ranks(
    head: &str,
    ids: &[usize],
    records: &[PredictionRecord],
    lines: &[usize],
) -> Result<(), PredictionError> {
    let fail = |message: String| PredictionError::RankInconsistent {
        head: head.to_owned(),
        message,
    };
    for (expected, &i) in (1u32..).zip(ids) {
        if records[i].rank != expected {
            return Err(fail(format!(
                "ranks must form 1..={}; line {} has rank {} where {} was expected",
                ids.len(),
                lines[i],
                records[i].rank,
                expected
            )));
        }
    }
    for pair in ids.windows(2) {
        let (a, b) = (&records[pair[0]], &records[pair[1]]);
        let ordered = a.score > b.score || (a.score == b.score && a.tail <= b.tail);
        if !ordered {
            return Err(fail(format!(
                "rank {} (line {}, score {}) is not ordered before rank {} (line {}, score {})",
                a.rank, lines[pair[0]], a.score, b.rank, lines[pair[1]], b.score
            )));
        }
    }
    Ok(())
}

fn sort_value(record: &PredictionRecord, key: SortKey) -> f64 {
    match key {
        SortKey::Score => record.score,
        SortKey::EdgeWeight(hop) => record.path[hop - 1].weight,
    }
}

/// Stable single-column sort. Equal keys fall back to tail id ascending.
pub fn sort_rows(rows: &mut [FilteredRow<'_>], key: SortKey, order: SortOrder) -> Result<(), FilterError> {
    if let SortKey::EdgeWeight(hop) = key {
        if hop == 0 || hop > HOPS {
            return Err(FilterError::HopIndex(hop));
        }
    }
    rows.sort_by(|a, b| {
        let (x, y) = (sort_value(a.record, key), sort_value(b.record, key));
        let primary = match order {
            SortOrder::Asc => x.total_cmp(&y),
            SortOrder::Desc => y.total_cmp(&x),
        };
        primary.then_with(|| a.record.tail.cmp(&b.record.tail))
    });
    Ok(())
}

/// Serializes records in the ingestion format, one JSON object per line.
pub fn to_jsonl(records: &[PredictionRecord]) -> String {
    #[derive(Serialize)]
    struct Wire<'a> {
        head: &'a str,
        tail: &'a str,
        score: f64,
        rank: u32,
        path: &'a [Hop; HOPS],
    }
    let mut out = String::new();
    for r in records {
        let wire = Wire {
            head: &r.head,
            tail: &r.tail,
            score: r.score,
            rank: r.rank,
            path: &r.path,
        };
        out.push_str(&serde_json::to_string(&wire).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Distinct relation labels used anywhere in the store's paths.
pub fn path_relations(store: &PredictionStore) -> HashSet<&str> {
    store
        .records()
        .iter()
        .flat_map(|r| r.path.iter().map(|h| h.relation.as_str()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Entity, Triplet};

    fn graph() -> KnowledgeGraph {
        let ents = ["H", "A", "B", "C", "T1", "T2", "T3"]
            .iter()
            .map(|id| Entity {
                id: id.to_string(),
                name: format!("name-{id}"),
                category: if id.starts_with('T') { "Gene" } else { "Process" }.into(),
                description: String::new(),
            })
            .collect();
        KnowledgeGraph::from_parts(ents, &[Triplet::new("H", "r", "A")]).unwrap()
    }

    fn line(tail: &str, score: f64, rank: u32, rels: [&str; 3], weights: [f64; 3]) -> String {
        format!(
            r#"{{"head":"H","tail":"{tail}","score":{score},"rank":{rank},"path":[{{"relation":"{}","weight":{},"entity":"A"}},{{"relation":"{}","weight":{},"entity":"B"}},{{"relation":"{}","weight":{},"entity":"{tail}"}}]}}"#,
            rels[0], weights[0], rels[1], weights[1], rels[2], weights[2]
        )
    }

    fn fixture() -> String {
        [
            line("T1", 0.9, 1, ["x", "x", "x"], [0.2, 0.5, 0.5]),
            line("T2", 0.8, 2, ["x", "y", "x"], [0.9, 0.5, 0.5]),
            line("T3", 0.8, 3, ["y", "y", "y"], [0.9, 0.1, 0.5]),
        ]
        .join("\n")
    }

    #[test]
    fn loads_and_orders() {
        let g = graph();
        let store = PredictionStore::from_jsonl("d", &fixture(), &g).unwrap();
        assert_eq!(store.len(), 3);
        let top = store.top_tails("H", 50).unwrap();
        assert_eq!(top.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(store.top_tails("H", 0).unwrap().len(), 0);
        assert!(matches!(store.top_tails("A", 5), Err(PredictionError::UnknownHead(_))));
        assert_eq!(
            store.raw_line(1).unwrap(),
            line("T2", 0.8, 2, ["x", "y", "x"], [0.9, 0.5, 0.5])
        );
        assert_eq!(store.tail_category(0), "Gene");
    }

    #[test]
    fn empty_file() {
        let store = PredictionStore::from_jsonl("d", "", &graph()).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn rejects_bad_records() {
        let g = graph();
        let two_hops = r#"{"head":"H","tail":"B","score":1.0,"rank":1,"path":[{"relation":"r","weight":0.5,"entity":"A"},{"relation":"r","weight":0.5,"entity":"B"}]}"#;
        assert!(matches!(
            PredictionStore::from_jsonl("d", two_hops, &g),
            Err(PredictionError::HopCount { line: 1, found: 2 })
        ));
        let unknown = line("T1", 0.9, 1, ["x", "x", "x"], [0.1; 3]).replace("\"A\"", "\"ZZ\"");
        assert!(matches!(
            PredictionStore::from_jsonl("d", &unknown, &g),
            Err(PredictionError::UnresolvedId { id, .. }) if id == "ZZ"
        ));
        // rank 1 has the lower score
        let swapped = [
            line("T1", 0.5, 1, ["x"; 3], [0.1; 3]),
            line("T2", 0.9, 2, ["x"; 3], [0.1; 3]),
        ]
        .join("\n");
        assert!(matches!(
            PredictionStore::from_jsonl("d", &swapped, &g),
            Err(PredictionError::RankInconsistent { .. })
        ));
        // gap in ranks
        let gap = [
            line("T1", 0.9, 1, ["x"; 3], [0.1; 3]),
            line("T2", 0.5, 3, ["x"; 3], [0.1; 3]),
        ]
        .join("\n");
        assert!(matches!(
            PredictionStore::from_jsonl("d", &gap, &g),
            Err(PredictionError::RankInconsistent { .. })
        ));
        // equal scores must be ordered by tail id
        let tie = [
            line("T2", 0.9, 1, ["x"; 3], [0.1; 3]),
            line("T1", 0.9, 2, ["x"; 3], [0.1; 3]),
        ]
        .join("\n");
        assert!(PredictionStore::from_jsonl("d", &tie, &g).is_err());
        let wrong_tail = line("T1", 0.9, 1, ["x"; 3], [0.1; 3]).replace("\"tail\":\"T1\"", "\"tail\":\"T2\"");
        assert!(matches!(
            PredictionStore::from_jsonl("d", &wrong_tail, &g),
            Err(PredictionError::Malformed { .. })
        ));
        assert!(matches!(
            PredictionStore::from_jsonl("d", "{not json", &g),
            Err(PredictionError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn clamps_out_of_range_weights() {
        let text = line("T1", 0.9, 1, ["x"; 3], [1.5, -0.2, 0.5]);
        let store = PredictionStore::from_jsonl("d", &text, &graph()).unwrap();
        assert_eq!(store.clamped_weights(), 2);
        assert_eq!(store.records()[0].path[0].weight, 1.0);
        assert_eq!(store.records()[0].path[1].weight, 0.0);
    }

    #[test]
    fn filter_terms() {
        let g = graph();
        let store = PredictionStore::from_jsonl("d", &fixture(), &g).unwrap();
        let all = store.filter_and_rerank(&PredictionFilter::default(), &g).unwrap();
        assert_eq!(all.len(), 3);

        let f = PredictionFilter {
            exclude_relation_homogeneous: Some("x".into()),
            ..Default::default()
        };
        let rows = store.filter_and_rerank(&f, &g).unwrap();
        assert_eq!(
            rows.iter().map(|r| (r.record.rank, r.display_rank)).collect::<Vec<_>>(),
            [(2, 1), (3, 2)]
        );

        let f = PredictionFilter {
            entity_terms: vec![EntityTerm {
                position: 2,
                entity: "C".into(),
            }],
            ..Default::default()
        };
        assert!(store.filter_and_rerank(&f, &g).unwrap().is_empty());

        let f = PredictionFilter {
            entity_terms: vec![EntityTerm {
                position: 3,
                entity: "name-T3".into(),
            }],
            relation_terms: vec![RelationTerm {
                position: 1,
                relation: "y".into(),
            }],
            ..Default::default()
        };
        let rows = store.filter_and_rerank(&f, &g).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].record.tail, "T3");

        let f = PredictionFilter {
            relation_terms: vec![RelationTerm {
                position: 4,
                relation: "y".into(),
            }],
            ..Default::default()
        };
        assert_eq!(
            store.filter_and_rerank(&f, &g).unwrap_err(),
            FilterError::RelationPosition(4)
        );
        let f = PredictionFilter {
            min_score: Some(0.85),
            category: Some("Gene".into()),
            head: Some("name-H".into()),
            ..Default::default()
        };
        assert_eq!(store.filter_and_rerank(&f, &g).unwrap().len(), 1);
    }

    #[test]
    fn sort_by_hop_weight() {
        let g = graph();
        let store = PredictionStore::from_jsonl("d", &fixture(), &g).unwrap();
        let mut rows = store.unfiltered();
        sort_rows(&mut rows, SortKey::EdgeWeight(1), SortOrder::Desc).unwrap();
        // T2 and T3 tie on 0.9 and fall back to tail id
        assert_eq!(
            rows.iter().map(|r| r.record.tail.as_str()).collect::<Vec<_>>(),
            ["T2", "T3", "T1"]
        );
        sort_rows(&mut rows, SortKey::EdgeWeight(2), SortOrder::Asc).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.record.tail.as_str()).collect::<Vec<_>>(),
            ["T3", "T1", "T2"]
        );
        sort_rows(&mut rows, SortKey::Score, SortOrder::Desc).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.record.tail.as_str()).collect::<Vec<_>>(),
            ["T1", "T2", "T3"]
        );
        assert_eq!(
            sort_rows(&mut rows, SortKey::EdgeWeight(4), SortOrder::Asc).unwrap_err(),
            FilterError::HopIndex(4)
        );
    }

    #[test]
    fn jsonl_roundtrip_preserves_records() {
        let g = graph();
        let store = PredictionStore::from_jsonl("d", &fixture(), &g).unwrap();
        let again = PredictionStore::from_records("d", store.records(), &g).unwrap();
        assert_eq!(store.records(), again.records());
    }
}
