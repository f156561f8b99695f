//! Ranking-quality metrics: NDCG@N, Precision@N, Recall@N, MPR, MRR, Hit@K.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CUTOFF: usize = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("no ranks given")]
    Empty,
    #[error("ranks are 1-based; got 0")]
    ZeroRank,
    #[error("rank {rank} exceeds universe size {universe}")]
    RankExceedsUniverse { rank: u64, universe: u64 },
    #[error("query {query}: candidate {candidate:?} listed twice")]
    DuplicateCandidate { query: String, candidate: String },
    #[error("query {query}: universe_size {universe} is smaller than the {candidates} candidates")]
    UniverseTooSmall {
        query: String,
        universe: u64,
        candidates: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unknown metric {0:?} (expected ndcg, precision, recall, mrr, mpr or hit)")]
    UnknownMetric(String),
}

/// Σ_{i=1..min(n,len)} s_i / log2(i+1).
pub fn dcg_at(relevance: &[bool], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    Ok(relevance
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum())
}

/// DCG normalised by the DCG of an ideal ordering with `total_relevant`
/// relevant items first. Zero when there is nothing relevant.
pub fn ndcg_at(relevance: &[bool], total_relevant: usize, n: usize) -> Result<f64, MetricError> {
    let dcg = dcg_at(relevance, n)?;
    if total_relevant == 0 {
        return Ok(0.0);
    }
    let ideal = vec![true; total_relevant.min(n)];
    Ok(dcg / dcg_at(&ideal, n)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// Set when there are no relevant items and recall was reported as 0.
    pub recall_undefined: bool,
}

/// precision = hits in top n / n; recall = hits in top n / total relevant.
pub fn precision_recall_at(
    relevance: &[bool],
    total_relevant: usize,
    n: usize,
) -> Result<PrecisionRecall, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    let hits = relevance.iter().take(n).filter(|&&s| s).count();
    Ok(PrecisionRecall {
        precision: hits as f64 / n as f64,
        recall: if total_relevant == 0 {
            0.0
        } else {
            hits as f64 / total_relevant as f64
        },
        recall_undefined: total_relevant == 0,
    })
}

/// Percentile rank of a 1-based rank among `universe` candidates: rank 1 → 100.
pub fn percentile_rank(rank: u64, universe: u64) -> Result<f64, MetricError> {
    if rank == 0 {
        return Err(MetricError::ZeroRank);
    }
    if rank > universe {
        return Err(MetricError::RankExceedsUniverse { rank, universe });
    }
    // 100·(1 − (r−1)/U), arranged to stay exact at both ends
    Ok(100.0 * (universe - rank + 1) as f64 / universe as f64)
}

/// Mean percentile rank, in percent.
pub fn mpr(ranks: &[(u64, u64)]) -> Result<f64, MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = 0.0;
    for &(r, u) in ranks {
        sum += percentile_rank(r, u)?;
    }
    Ok(sum / ranks.len() as f64)
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[u64]) -> Result<f64, MetricError> {
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    if ranks.contains(&0) {
        return Err(MetricError::ZeroRank);
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks ≤ k.
pub fn hit_at(ranks: &[u64], k: u64) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    if ranks.is_empty() {
        return Err(MetricError::Empty);
    }
    if ranks.contains(&0) {
        return Err(MetricError::ZeroRank);
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// One query's ranked candidates with its relevant set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedList {
    pub query_id: String,
    /// Rank 1 first.
    pub candidates: Vec<String>,
    /// Relevant ids; may include ids that were not ranked.
    #[serde(default)]
    pub relevant: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universe_size: Option<u64>,
}

impl RankedList {
    pub fn validate(&self) -> Result<(), MetricError> {
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.as_str()) {
                return Err(MetricError::DuplicateCandidate {
                    query: self.query_id.clone(),
                    candidate: c.clone(),
                });
            }
        }
        if let Some(u) = self.universe_size {
            if (u as usize) < self.candidates.len() {
                return Err(MetricError::UniverseTooSmall {
                    query: self.query_id.clone(),
                    universe: u,
                    candidates: self.candidates.len(),
                });
            }
        }
        Ok(())
    }

    /// s_i for every ranked candidate.
    pub fn relevance(&self) -> Vec<bool> {
        let rel: HashSet<&str> = self.relevant.iter().map(String::as_str).collect();
        self.candidates.iter().map(|c| rel.contains(c.as_str())).collect()
    }

    pub fn total_relevant(&self) -> usize {
        self.relevant.iter().collect::<HashSet<_>>().len()
    }

    /// Rank of the best-ranked relevant candidate.
    pub fn first_relevant_rank(&self) -> Option<u64> {
        self.relevance().iter().position(|&s| s).map(|i| i as u64 + 1)
    }

    pub fn universe(&self) -> u64 {
        self.universe_size.unwrap_or(self.candidates.len() as u64)
    }
}

/// Parses JSON lines, one `RankedList` per non-blank line.
pub fn parse_ranked_lists(text: &str) -> Result<Vec<RankedList>, MetricError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let list: RankedList = serde_json::from_str(line).map_err(|e| MetricError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        list.validate()?;
        out.push(list);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndcg,
    Precision,
    Recall,
    Mrr,
    Mpr,
    Hit,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Ndcg,
        Metric::Precision,
        Metric::Recall,
        Metric::Mrr,
        Metric::Mpr,
        Metric::Hit,
    ];

    /// Column name; cutoff metrics carry their cutoff.
    pub fn column(self, n: usize) -> String {
        match self {
            Metric::Ndcg => format!("ndcg@{n}"),
            Metric::Precision => format!("precision@{n}"),
            Metric::Recall => format!("recall@{n}"),
            Metric::Mrr => "mrr".into(),
            Metric::Mpr => "mpr".into(),
            Metric::Hit => format!("hit@{n}"),
        }
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "ndcg" => Metric::Ndcg,
            "precision" => Metric::Precision,
            "recall" => Metric::Recall,
            "mrr" => Metric::Mrr,
            "mpr" => Metric::Mpr,
            "hit" => Metric::Hit,
            other => return Err(MetricError::UnknownMetric(other.to_owned())),
        })
    }
}

pub fn parse_metric_list(s: &str) -> Result<Vec<Metric>, MetricError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub values: Vec<(String, f64)>,
    /// Metrics reported as 0 because they are undefined for this query.
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cutoff: usize,
    pub queries: usize,
    pub per_query: Vec<QueryMetrics>,
    /// Arithmetic mean over queries, in requested metric order.
    pub macro_avg: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn value(&self, column: &str) -> Option<f64> {
        self.macro_avg.iter().find(|(c, _)| c == column).map(|&(_, v)| v)
    }

    /// `metric\tvalue` table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\n");
        for (c, v) in &self.macro_avg {
            let _ = writeln!(out, "{c}\t{v}");
        }
        out
    }
}

/// Per-query metrics and their macro averages. MRR, MPR and Hit use the rank
/// of each query's best-ranked relevant candidate; a query without one
/// contributes 0 and is flagged.
pub fn evaluate(lists: &[RankedList], metrics: &[Metric], n: usize) -> Result<MetricReport, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    if lists.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut per_query = Vec::with_capacity(lists.len());
    for list in lists {
        list.validate()?;
        let rel = list.relevance();
        let total = list.total_relevant();
        let first = list.first_relevant_rank();
        let pr = precision_recall_at(&rel, total, n)?;
        let mut values = Vec::with_capacity(metrics.len());
        let mut flags = Vec::new();
        for &m in metrics {
            let v = match m {
                Metric::Ndcg => {
                    if total == 0 {
                        flags.push(m.column(n));
                    }
                    ndcg_at(&rel, total, n)?
                }
                Metric::Precision => pr.precision,
                Metric::Recall => {
                    if pr.recall_undefined {
                        flags.push(m.column(n));
                    }
                    pr.recall
                }
                Metric::Mrr | Metric::Mpr | Metric::Hit => match first {
                    None => {
                        flags.push(m.column(n));
                        0.0
                    }
                    Some(r) => match m {
                        Metric::Mrr => mrr(&[r])?,
                        Metric::Mpr => mpr(&[(r, list.universe())])?,
                        _ => hit_at(&[r], n as u64)?,
                    },
                },
            };
            values.push((m.column(n), v));
        }
        per_query.push(QueryMetrics {
            query_id: list.query_id.clone(),
            values,
            flags,
        });
    }
    let q = per_query.len() as f64;
    let macro_avg = metrics
        .iter()
        .enumerate()
        .map(|(j, m)| (m.column(n), per_query.iter().map(|p| p.values[j].1).sum::<f64>() / q))
        .collect();
    Ok(MetricReport {
        cutoff: n,
        queries: per_query.len(),
        per_query,
        macro_avg,
    })
}
