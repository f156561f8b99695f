//! Local context assembly for retrieval-grounded prompts.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::graph::{Direction, EdgeDirection, Entity, KnowledgeGraph, Triplet};

const MAX_NGRAM: usize = 4;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "could", "do", "for", "from", "has", "have", "i", "in",
    "into", "is", "it", "its", "me", "my", "of", "on", "or", "some", "that", "the", "their", "this", "to", "was", "we",
    "what", "which", "with", "would", "you", "your",
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgContext {
    /// One `head —relation→ tail` line per cited triplet, using display names.
    pub text: String,
    pub triplets: Vec<Triplet>,
    /// Entity ids matched in the query.
    pub seeds: Vec<String>,
}

fn tokens(query: &str) -> Vec<&str> {
    query
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '?' | '!' | '"' | '(' | ')' | '[' | ']'))
        .map(|t| t.trim_matches(|c: char| matches!(c, '.' | ':' | '\'' | '`')))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Entities named in `query`, found by greedy longest n-gram name resolution.
pub fn match_entities<'g>(query: &str, g: &'g KnowledgeGraph) -> Vec<&'g Entity> {
    let toks = tokens(query);
    let mut found: Vec<&Entity> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let mut advanced = false;
        for n in (1..=MAX_NGRAM.min(toks.len() - i)).rev() {
            if n == 1 && STOPWORDS.contains(&toks[i].to_lowercase().as_str()) {
                break;
            }
            let phrase = toks[i..i + n].join(" ");
            if let Ok(e) = g.resolve_ref(&phrase) {
                if !found.iter().any(|f| f.id == e.id) {
                    found.push(e);
                }
                i += n;
                advanced = true;
                break;
            }
        }
        if !advanced {
            i += 1;
        }
    }
    found
}

/// Collects triplets within `hops` steps of the entities named in `query`,
/// keeping the `cap` whose endpoints have the highest combined degree.
pub fn assemble_kg_context(query: &str, g: &KnowledgeGraph, hops: usize, cap: usize) -> KgContext {
    let seeds: Vec<&Entity> = match_entities(query, g);
    let mut visited: HashSet<&str> = seeds.iter().map(|e| e.id.as_str()).collect();
    let mut frontier: BTreeSet<&str> = visited.iter().copied().collect();
    let mut cited: BTreeSet<(&str, &str, &str)> = BTreeSet::new();
    for _ in 0..hops {
        let mut next = BTreeSet::new();
        for id in &frontier {
            for n in g.neighbors(id, Direction::Both).expect("frontier ids exist") {
                let edge = match n.direction {
                    EdgeDirection::Out => (*id, n.relation, n.entity.id.as_str()),
                    EdgeDirection::In => (n.entity.id.as_str(), n.relation, *id),
                };
                cited.insert(edge);
                if visited.insert(&n.entity.id) {
                    next.insert(n.entity.id.as_str());
                }
            }
        }
        frontier = next;
    }
    let deg = |id: &str| g.degree(id).unwrap_or(0);
    let mut ranked: Vec<((&str, &str, &str), usize)> = cited.into_iter().map(|t| (t, deg(t.0) + deg(t.2))).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cap);

    let name = |id: &str| g.entity(id).map(|e| e.name.clone()).unwrap_or_default();
    let text = ranked
        .iter()
        .map(|((h, r, t), _)| format!("{} —{}→ {}", name(h), r, name(t)))
        .collect::<Vec<_>>()
        .join("\n");
    KgContext {
        text,
        triplets: ranked.iter().map(|((h, r, t), _)| Triplet::new(*h, *r, *t)).collect(),
        seeds: seeds.iter().map(|e| e.id.clone()).collect(),
    }
}

fn keywords(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '_' && c != '-')
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= 3 && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Document-chunk context: entity descriptions scored by query term frequency.
pub fn assemble_vector_context(query: &str, g: &KnowledgeGraph, top_k: usize) -> String {
    let terms: BTreeSet<String> = keywords(query).into_iter().collect();
    if terms.is_empty() || top_k == 0 {
        return String::new();
    }
    let mut scored: Vec<(usize, &Entity)> = g
        .entities()
        .iter()
        .filter(|e| !e.description.is_empty())
        .filter_map(|e| {
            let score = keywords(&e.description).iter().filter(|w| terms.contains(*w)).count();
            (score > 0).then_some((score, e))
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    scored
        .iter()
        .take(top_k)
        .map(|(_, e)| format!("- {} ({}): {}", e.name, e.category, e.description))
        .collect::<Vec<_>>()
        .join("\n")
}
