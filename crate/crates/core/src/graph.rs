//! In-memory knowledge graph with forward and reverse adjacency indices.
//!
//! Entities and triplets are loaded from two tab-separated files:
//!
//! ```text
//! id<TAB>name<TAB>category<TAB>description
//! head<TAB>relation<TAB>tail
//! ```
//!
//! Entity ids are opaque strings on the public surface; internally every
//! entity and relation label is interned to a dense `u32`. Adjacency lists are
//! kept sorted by `(relation label, neighbor id)` so every query result has a
//! deterministic order.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENTITY_HEADER: [&str; 4] = ["id", "name", "category", "description"];
pub const TRIPLET_HEADER: [&str; 3] = ["head", "relation", "tail"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub category: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triplet {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

/// Which incident edges a neighborhood query should return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
    Both,
}

/// Orientation of a concrete edge relative to the queried entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeDirection {
    /// queried entity is the head
    Out,
    /// queried entity is the tail
    In,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor<'g> {
    pub relation: &'g str,
    pub entity: &'g Entity,
    pub direction: EdgeDirection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeMatch {
    pub relation: String,
    pub direction: EdgeDirection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCounts {
    pub entities: usize,
    pub triplets: usize,
    pub relations: usize,
    pub duplicates_skipped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppendOutcome {
    pub added: usize,
    pub duplicates: usize,
    pub counts: GraphCounts,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Malformed { file: String, line: u64, message: String },
    #[error("{file}:{line}: duplicate entity id {id:?}")]
    DuplicateEntity { file: String, line: u64, id: String },
    #[error("{}unknown entity id {id:?}", location_prefix(.file, .line))]
    DanglingId {
        file: Option<String>,
        line: Option<u64>,
        id: String,
    },
    #[error("unknown entity id {0:?}")]
    UnknownEntity(String),
    #[error("relation label must be non-empty")]
    EmptyRelation,
}

fn location_prefix(file: &Option<String>, line: &Option<u64>) -> String {
    match (file, line) {
        (Some(f), Some(l)) => format!("{f}:{l}: "),
        (None, Some(l)) => format!("line {l}: "),
        _ => String::new(),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("no entity named {0:?}")]
    NotFound(String),
    #[error("entity name {name:?} is ambiguous; candidates: {}", candidates.join(", "))]
    Ambiguous { name: String, candidates: Vec<String> },
}

/// Name lookup tables for exact, case-folded and whitespace-normalized matching.
#[derive(Debug, Default, Clone)]
struct NameIndex {
    exact: HashMap<String, Vec<u32>>,
    folded: HashMap<String, Vec<u32>>,
    normalized: HashMap<String, Vec<u32>>,
}

pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl NameIndex {
    fn insert(&mut self, name: &str, idx: u32) {
        self.exact.entry(name.to_owned()).or_default().push(idx);
        self.folded.entry(name.to_lowercase()).or_default().push(idx);
        self.normalized.entry(normalize_name(name)).or_default().push(idx);
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    by_id: HashMap<String, u32>,
    /// position of each entity in ascending id order
    id_rank: Vec<u32>,
    relations: Vec<String>,
    relation_ids: HashMap<String, u32>,
    triplets: Vec<[u32; 3]>,
    seen: HashSet<[u32; 3]>,
    out_adj: Vec<Vec<(u32, u32)>>,
    in_adj: Vec<Vec<(u32, u32)>>,
    duplicates_skipped: usize,
    names: NameIndex,
}

fn tsv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(false)
        .flexible(true)
        .from_reader(rdr)
}

fn open(path: &Path) -> Result<File, GraphError> {
    File::open(path).map_err(|source| GraphError::Io {
        path: path.to_owned(),
        source,
    })
}

fn check_header(file: &str, record: Option<&csv::StringRecord>, expected: &[&str]) -> Result<(), GraphError> {
    let ok = record.map(|r| r.iter().eq(expected.iter().copied())).unwrap_or(false);
    if ok {
        Ok(())
    } else {
        Err(GraphError::Malformed {
            file: file.to_owned(),
            line: 1,
            message: format!("expected header {:?}", expected.join("\t")),
        })
    }
}

fn read_rows<R: Read>(file: &str, rdr: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, GraphError> {
    let mut reader = tsv_reader(rdr);
    let mut rows = Vec::new();
    let mut first = true;
    for result in reader.records() {
        let record = result.map_err(|e| GraphError::Malformed {
            file: file.to_owned(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if first {
            check_header(file, Some(&record), header)?;
            first = false;
            continue;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(GraphError::Malformed {
                file: file.to_owned(),
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push((line, record));
    }
    if first {
        check_header(file, None, header)?;
    }
    Ok(rows)
}

impl KnowledgeGraph {
    pub fn load(entity_file: impl AsRef<Path>, triplet_file: impl AsRef<Path>) -> Result<Self, GraphError> {
        let entity_file = entity_file.as_ref();
        let triplet_file = triplet_file.as_ref();
        Self::from_readers_named(
            &entity_file.display().to_string(),
            open(entity_file)?,
            &triplet_file.display().to_string(),
            open(triplet_file)?,
        )
    }

    pub fn from_readers<E: Read, T: Read>(entities: E, triplets: T) -> Result<Self, GraphError> {
        Self::from_readers_named("entities", entities, "triplets", triplets)
    }

    fn from_readers_named<E: Read, T: Read>(
        entity_name: &str,
        entities: E,
        triplet_name: &str,
        triplets: T,
    ) -> Result<Self, GraphError> {
        let mut entity_list = Vec::new();
        let mut lines = Vec::new();
        for (line, row) in read_rows(entity_name, entities, &ENTITY_HEADER)? {
            let malformed = |message: &str| GraphError::Malformed {
                file: entity_name.to_owned(),
                line,
                message: message.to_owned(),
            };
            if row[0].is_empty() {
                return Err(malformed("entity id must be non-empty"));
            }
            if row[1].is_empty() {
                return Err(malformed("entity name must be non-empty"));
            }
            if row[2].is_empty() {
                return Err(malformed("entity category must be non-empty"));
            }
            entity_list.push(Entity {
                id: row[0].to_owned(),
                name: row[1].to_owned(),
                category: row[2].to_owned(),
                description: row[3].to_owned(),
            });
            lines.push(line);
        }
        let mut graph = Self::with_entities_at(entity_name, entity_list, &lines)?;

        let rows = read_rows(triplet_name, triplets, &TRIPLET_HEADER)?;
        graph.triplets.reserve(rows.len());
        for (line, row) in rows {
            let head = graph.lookup_at(&row[0], triplet_name, line)?;
            let tail = graph.lookup_at(&row[2], triplet_name, line)?;
            if row[1].is_empty() {
                return Err(GraphError::Malformed {
                    file: triplet_name.to_owned(),
                    line,
                    message: "relation label must be non-empty".into(),
                });
            }
            let rel = graph.intern_relation(&row[1]);
            if !graph.push_unsorted(head, rel, tail) {
                log::warn!("{triplet_name}:{line}: duplicate triplet skipped");
            }
        }
        graph.sort_adjacency();
        Ok(graph)
    }

    /// Builds a graph from in-memory entities and triplets.
    pub fn from_parts(entities: Vec<Entity>, triplets: &[Triplet]) -> Result<Self, GraphError> {
        let lines: Vec<u64> = (2..).take(entities.len()).collect();
        let mut graph = Self::with_entities_at("entities", entities, &lines)?;
        for t in triplets {
            if t.relation.is_empty() {
                return Err(GraphError::EmptyRelation);
            }
            let head = graph.lookup(&t.head)?;
            let tail = graph.lookup(&t.tail)?;
            let rel = graph.intern_relation(&t.relation);
            graph.push_unsorted(head, rel, tail);
        }
        graph.sort_adjacency();
        Ok(graph)
    }

    fn with_entities_at(file: &str, entities: Vec<Entity>, lines: &[u64]) -> Result<Self, GraphError> {
        let mut by_id = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if by_id.insert(e.id.clone(), i as u32).is_some() {
                return Err(GraphError::DuplicateEntity {
                    file: file.to_owned(),
                    line: lines.get(i).copied().unwrap_or(0),
                    id: e.id.clone(),
                });
            }
        }
        let mut order: Vec<u32> = (0..entities.len() as u32).collect();
        order.sort_by(|&a, &b| entities[a as usize].id.cmp(&entities[b as usize].id));
        let mut id_rank = vec![0u32; entities.len()];
        for (rank, &idx) in order.iter().enumerate() {
            id_rank[idx as usize] = rank as u32;
        }
        let mut names = NameIndex::default();
        for (i, e) in entities.iter().enumerate() {
            names.insert(&e.name, i as u32);
        }
        let n = entities.len();
        Ok(Self {
            entities,
            by_id,
            id_rank,
            out_adj: vec![Vec::new(); n],
            in_adj: vec![Vec::new(); n],
            names,
            ..Default::default()
        })
    }

    fn lookup_at(&self, id: &str, file: &str, line: u64) -> Result<u32, GraphError> {
        self.by_id.get(id).copied().ok_or_else(|| GraphError::DanglingId {
            file: Some(file.to_owned()),
            line: Some(line),
            id: id.to_owned(),
        })
    }

    fn lookup(&self, id: &str) -> Result<u32, GraphError> {
        self.by_id.get(id).copied().ok_or_else(|| GraphError::DanglingId {
            file: None,
            line: None,
            id: id.to_owned(),
        })
    }

    fn known(&self, id: &str) -> Result<u32, GraphError> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownEntity(id.to_owned()))
    }

    fn intern_relation(&mut self, label: &str) -> u32 {
        if let Some(&r) = self.relation_ids.get(label) {
            return r;
        }
        let r = self.relations.len() as u32;
        self.relations.push(label.to_owned());
        self.relation_ids.insert(label.to_owned(), r);
        r
    }

    /// Returns false when the triplet was already present.
    fn push_unsorted(&mut self, head: u32, rel: u32, tail: u32) -> bool {
        let key = [head, rel, tail];
        if !self.seen.insert(key) {
            self.duplicates_skipped += 1;
            return false;
        }
        self.triplets.push(key);
        self.out_adj[head as usize].push((rel, tail));
        self.in_adj[tail as usize].push((rel, head));
        true
    }

    fn adj_cmp(&self, a: &(u32, u32), b: &(u32, u32)) -> Ordering {
        self.relations[a.0 as usize]
            .cmp(&self.relations[b.0 as usize])
            .then_with(|| self.id_rank[a.1 as usize].cmp(&self.id_rank[b.1 as usize]))
    }

    fn sort_adjacency(&mut self) {
        let mut out_adj = std::mem::take(&mut self.out_adj);
        let mut in_adj = std::mem::take(&mut self.in_adj);
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_by(|a, b| self.adj_cmp(a, b));
        }
        self.out_adj = out_adj;
        self.in_adj = in_adj;
    }

    fn insert_sorted(&mut self, head: u32, rel: u32, tail: u32) -> bool {
        let key = [head, rel, tail];
        if !self.seen.insert(key) {
            return false;
        }
        self.triplets.push(key);
        let pos = self.out_adj[head as usize]
            .binary_search_by(|probe| self.adj_cmp(probe, &(rel, tail)))
            .unwrap_or_else(|p| p);
        self.out_adj[head as usize].insert(pos, (rel, tail));
        let pos = self.in_adj[tail as usize]
            .binary_search_by(|probe| self.adj_cmp(probe, &(rel, head)))
            .unwrap_or_else(|p| p);
        self.in_adj[tail as usize].insert(pos, (rel, head));
        true
    }

    /// Adds triplets to the graph. All ids are validated before any triplet is
    /// inserted, so a failed append leaves the graph untouched.
    pub fn append_triplets(&mut self, new: &[Triplet]) -> Result<AppendOutcome, GraphError> {
        let mut resolved = Vec::with_capacity(new.len());
        for t in new {
            if t.relation.is_empty() {
                return Err(GraphError::EmptyRelation);
            }
            resolved.push((self.lookup(&t.head)?, &t.relation, self.lookup(&t.tail)?));
        }
        let mut added = 0;
        for (head, relation, tail) in resolved {
            let rel = self.intern_relation(relation);
            if self.insert_sorted(head, rel, tail) {
                added += 1;
            }
        }
        Ok(AppendOutcome {
            added,
            duplicates: new.len() - added,
            counts: self.counts(),
        })
    }

    pub fn counts(&self) -> GraphCounts {
        GraphCounts {
            entities: self.entities.len(),
            triplets: self.triplets.len(),
            relations: self.relations.len(),
            duplicates_skipped: self.duplicates_skipped,
        }
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.by_id.get(id).map(|&i| &self.entities[i as usize])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn num_triplets(&self) -> usize {
        self.triplets.len()
    }

    /// Triplets in insertion order.
    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        self.triplets.iter().map(|&[h, r, t]| Triplet {
            head: self.entities[h as usize].id.clone(),
            relation: self.relations[r as usize].clone(),
            tail: self.entities[t as usize].id.clone(),
        })
    }

    /// Relation labels in ascending order.
    pub fn relation_vocabulary(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = self.relations.iter().map(String::as_str).collect();
        labels.sort_unstable();
        labels
    }

    pub fn has_relation(&self, label: &str) -> bool {
        self.relation_ids.contains_key(label)
    }

    /// Entity categories in ascending order.
    pub fn categories(&self) -> Vec<&str> {
        let mut cats: Vec<&str> = self.entities.iter().map(|e| e.category.as_str()).collect();
        cats.sort_unstable();
        cats.dedup();
        cats
    }

    pub fn out_degree(&self, id: &str) -> Result<usize, GraphError> {
        Ok(self.out_adj[self.known(id)? as usize].len())
    }

    pub fn in_degree(&self, id: &str) -> Result<usize, GraphError> {
        Ok(self.in_adj[self.known(id)? as usize].len())
    }

    /// Number of incident triplets counting both directions.
    pub fn degree(&self, id: &str) -> Result<usize, GraphError> {
        let i = self.known(id)? as usize;
        Ok(self.out_adj[i].len() + self.in_adj[i].len())
    }

    /// Incident edges ordered by `(relation, neighbor id)`; for `Both`,
    /// outgoing edges precede incoming ones on exact ties.
    pub fn neighbors(&self, id: &str, direction: Direction) -> Result<Vec<Neighbor<'_>>, GraphError> {
        let i = self.known(id)? as usize;
        let wrap = |&(rel, nbr): &(u32, u32), dir| Neighbor {
            relation: &self.relations[rel as usize],
            entity: &self.entities[nbr as usize],
            direction: dir,
        };
        let out = self.out_adj[i].iter().map(|e| wrap(e, EdgeDirection::Out));
        let inc = self.in_adj[i].iter().map(|e| wrap(e, EdgeDirection::In));
        Ok(match direction {
            Direction::Out => out.collect(),
            Direction::In => inc.collect(),
            Direction::Both => {
                let (a, b) = (&self.out_adj[i], &self.in_adj[i]);
                let mut merged = Vec::with_capacity(a.len() + b.len());
                let (mut x, mut y) = (0, 0);
                while x < a.len() && y < b.len() {
                    if self.adj_cmp(&a[x], &b[y]) != Ordering::Greater {
                        merged.push(wrap(&a[x], EdgeDirection::Out));
                        x += 1;
                    } else {
                        merged.push(wrap(&b[y], EdgeDirection::In));
                        y += 1;
                    }
                }
                merged.extend(a[x..].iter().map(|e| wrap(e, EdgeDirection::Out)));
                merged.extend(b[y..].iter().map(|e| wrap(e, EdgeDirection::In)));
                merged
            }
        })
    }

    /// First edge between `a` and `b` in neighbor order of `a`. The returned
    /// direction is relative to `a`.
    pub fn edge_exists(&self, a: &str, b: &str) -> Result<Option<EdgeMatch>, GraphError> {
        let ai = self.known(a)? as usize;
        let bi = self.known(b)?;
        let first_out = self.out_adj[ai].iter().find(|&&(_, n)| n == bi);
        let first_in = self.in_adj[ai].iter().find(|&&(_, n)| n == bi);
        let pick = match (first_out, first_in) {
            (Some(o), Some(i)) => {
                if self.relations[o.0 as usize] <= self.relations[i.0 as usize] {
                    Some((o.0, EdgeDirection::Out))
                } else {
                    Some((i.0, EdgeDirection::In))
                }
            }
            (Some(o), None) => Some((o.0, EdgeDirection::Out)),
            (None, Some(i)) => Some((i.0, EdgeDirection::In)),
            (None, None) => None,
        };
        Ok(pick.map(|(rel, direction)| EdgeMatch {
            relation: self.relations[rel as usize].clone(),
            direction,
        }))
    }

    /// Resolves a display name to an entity: exact match, then
    /// case-insensitive, then whitespace-normalized. More than one hit at the
    /// first level that matches anything is an ambiguity error.
    pub fn resolve_name(&self, name: &str) -> Result<&Entity, ResolveError> {
        let levels = [
            self.names.exact.get(name),
            self.names.folded.get(&name.to_lowercase()),
            self.names.normalized.get(&normalize_name(name)),
        ];
        for hits in levels.into_iter().flatten() {
            match hits.as_slice() {
                [] => continue,
                [only] => return Ok(&self.entities[*only as usize]),
                many => {
                    let mut candidates: Vec<String> =
                        many.iter().map(|&i| self.entities[i as usize].id.clone()).collect();
                    candidates.sort();
                    return Err(ResolveError::Ambiguous {
                        name: name.to_owned(),
                        candidates,
                    });
                }
            }
        }
        Err(ResolveError::NotFound(name.to_owned()))
    }

    /// Resolves an entity reference that may be either an id or a name.
    pub fn resolve_ref(&self, reference: &str) -> Result<&Entity, ResolveError> {
        match self.entity(reference) {
            Some(e) => Ok(e),
            None => self.resolve_name(reference),
        }
    }

    /// Serializes the triplet table in load format.
    pub fn write_triplets<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", TRIPLET_HEADER.join("\t"))?;
        for t in self.triplets() {
            writeln!(w, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(entities: &str, triplets: &str) -> Result<KnowledgeGraph, GraphError> {
        KnowledgeGraph::from_readers(entities.as_bytes(), triplets.as_bytes())
    }

    const THREE: &str = "id\tname\tcategory\tdescription\nA\tAlpha\tGene\t\nB\tBeta\tGene\tsecond\nC\tGamma\tDrug\t\n";

    #[test]
    fn empty_triplet_file() {
        let g = graph(THREE, "head\trelation\ttail\n").unwrap();
        assert_eq!(g.counts().entities, 3);
        assert_eq!(g.counts().triplets, 0);
        assert!(g.neighbors("A", Direction::Both).unwrap().is_empty());
    }

    #[test]
    fn dangling_id_names_id_and_line() {
        let err = graph(THREE, "head\trelation\ttail\nA\tr\tB\nA\tr\tX9\n").unwrap_err();
        match &err {
            GraphError::DanglingId { id, line, .. } => {
                assert_eq!(id, "X9");
                assert_eq!(*line, Some(3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("X9"));
    }

    #[test]
    fn duplicate_entity_rejected() {
        let err = graph(
            "id\tname\tcategory\tdescription\nA\tx\tG\t\nA\ty\tG\t\n",
            "head\trelation\ttail\n",
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEntity { line: 3, .. }));
    }

    #[test]
    fn malformed_rows() {
        let err = graph("id\tname\tcategory\tdescription\nA\tx\tG\n", "head\trelation\ttail\n").unwrap_err();
        assert!(matches!(err, GraphError::Malformed { line: 2, .. }), "{err}");
        let err = graph("id\tname\tcategory\n", "head\trelation\ttail\n").unwrap_err();
        assert!(matches!(err, GraphError::Malformed { line: 1, .. }));
        let err = graph("id\tname\tcategory\tdescription\nA\t\tG\t\n", "head\trelation\ttail\n").unwrap_err();
        assert!(err.to_string().contains("name"));
        let err = graph(THREE, "head\trelation\ttail\nA\t\tB\n").unwrap_err();
        assert!(matches!(err, GraphError::Malformed { line: 2, .. }));
        let err = graph(THREE, "").unwrap_err();
        assert!(matches!(err, GraphError::Malformed { line: 1, .. }));
    }

    #[test]
    fn duplicates_deduplicated_and_counted() {
        let g = graph(THREE, "head\trelation\ttail\nA\tr\tB\nA\tr\tB\nA\ts\tB\n").unwrap();
        assert_eq!(g.counts().triplets, 2);
        assert_eq!(g.counts().duplicates_skipped, 1);
    }

    #[test]
    fn relation_labels_case_sensitive() {
        let g = graph(THREE, "head\trelation\ttail\nA\tsl_gsg\tB\nA\tSL_GSG\tB\n").unwrap();
        assert_eq!(g.counts().relations, 2);
        assert_eq!(g.relation_vocabulary(), vec!["SL_GSG", "sl_gsg"]);
    }

    #[test]
    fn star_graph_neighbors() {
        let mut ents = vec![Entity {
            id: "hub".into(),
            name: "Hub".into(),
            category: "Gene".into(),
            description: String::new(),
        }];
        let mut trips = Vec::new();
        for i in 0..5 {
            ents.push(Entity {
                id: format!("s{i}"),
                name: format!("Spoke {i}"),
                category: "Gene".into(),
                description: String::new(),
            });
            if i % 2 == 0 {
                trips.push(Triplet::new("hub", "r", format!("s{i}")));
            } else {
                trips.push(Triplet::new(format!("s{i}"), "r", "hub"));
            }
        }
        ents.push(Entity {
            id: "lonely".into(),
            name: "Lonely".into(),
            category: "Gene".into(),
            description: String::new(),
        });
        let g = KnowledgeGraph::from_parts(ents, &trips).unwrap();
        let both = g.neighbors("hub", Direction::Both).unwrap();
        assert_eq!(both.len(), 5);
        let ids: Vec<&str> = both.iter().map(|n| n.entity.id.as_str()).collect();
        assert_eq!(ids, ["s0", "s1", "s2", "s3", "s4"]);
        assert_eq!(g.neighbors("hub", Direction::Out).unwrap().len(), 3);
        assert_eq!(g.neighbors("hub", Direction::In).unwrap().len(), 2);
        assert!(g.neighbors("lonely", Direction::Both).unwrap().is_empty());
        assert!(matches!(
            g.neighbors("nope", Direction::Both),
            Err(GraphError::UnknownEntity(_))
        ));
    }

    #[test]
    fn edge_exists_direction_flag() {
        let g = graph(THREE, "head\trelation\ttail\nA\tbinds\tB\nC\tacts\tA\n").unwrap();
        let ab = g.edge_exists("A", "B").unwrap().unwrap();
        assert_eq!(ab.relation, "binds");
        assert_eq!(ab.direction, EdgeDirection::Out);
        let ba = g.edge_exists("B", "A").unwrap().unwrap();
        assert_eq!(ba.direction, EdgeDirection::In);
        assert!(g.edge_exists("B", "C").unwrap().is_none());
        assert!(g.edge_exists("B", "Z").is_err());
    }

    #[test]
    fn append_is_idempotent_and_atomic() {
        let mut g = graph(THREE, "head\trelation\ttail\nA\tr\tB\n").unwrap();
        let out = g.append_triplets(&[Triplet::new("B", "r", "C")]).unwrap();
        assert_eq!(out.added, 1);
        assert_eq!(out.counts.triplets, 2);
        let out = g.append_triplets(&[Triplet::new("B", "r", "C")]).unwrap();
        assert_eq!(out.added, 0);
        assert_eq!(out.counts.triplets, 2);
        let err = g
            .append_triplets(&[Triplet::new("A", "q", "C"), Triplet::new("A", "q", "X")])
            .unwrap_err();
        assert!(matches!(err, GraphError::DanglingId { .. }));
        assert_eq!(g.counts().triplets, 2);

        let mut empty = KnowledgeGraph::default();
        assert!(matches!(
            empty.append_triplets(&[Triplet::new("A", "r", "B")]),
            Err(GraphError::DanglingId { .. })
        ));
    }

    #[test]
    fn name_resolution_levels() {
        let g = graph(
            "id\tname\tcategory\tdescription\n1\tBRCA1\tGene\t\n2\tbrca2\tGene\t\n3\tDNA  repair\tProcess\t\n4\tTP53\tGene\t\n5\ttp53\tGene\t\n",
            "head\trelation\ttail\n",
        )
        .unwrap();
        assert_eq!(g.resolve_name("BRCA1").unwrap().id, "1");
        assert_eq!(g.resolve_name("brca1").unwrap().id, "1");
        assert_eq!(g.resolve_name("BRCA2").unwrap().id, "2");
        assert_eq!(g.resolve_name("  dna repair ").unwrap().id, "3");
        // exact match wins over case-insensitive ambiguity
        assert_eq!(g.resolve_name("TP53").unwrap().id, "4");
        match g.resolve_name("Tp53") {
            Err(ResolveError::Ambiguous { candidates, .. }) => assert_eq!(candidates, ["4", "5"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(g.resolve_name("EGFR"), Err(ResolveError::NotFound(_))));
    }
}
