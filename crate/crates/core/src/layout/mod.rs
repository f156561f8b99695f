//! Hypothesis-view geometry: stacked two-level Voronoi treemaps, cross-layer
//! KG edges, and lasso selection over an entity embedding.

pub mod geometry;
mod lasso;
pub mod voronoi;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{Point, Rect};
pub use lasso::{lasso_select, load_embedding, EmbeddingPoint, EMBEDDING_HEADER};

use crate::chain::HypothesisChain;
use crate::graph::{EdgeDirection, GraphError, KnowledgeGraph};
use crate::predictions::PredictionRecord;
use voronoi::SolverOptions;

pub const MAX_ITERATIONS: usize = 500;
/// Required agreement between each cell's area share and its weight share.
pub const AREA_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("container has zero area")]
    ZeroArea,
    #[error("layer has no members")]
    EmptyLayer,
    #[error("weight of {id} must be positive and finite, got {weight}")]
    Weight { id: String, weight: f64 },
    #[error("{0} is listed twice in the layer")]
    DuplicateMember(String),
    #[error("lasso polygon needs at least 3 vertices, got {0}")]
    Lasso(usize),
    #[error("embedding line {line}: {message}")]
    Embedding { line: usize, message: String },
    #[error("{0}")]
    Graph(String),
}

impl From<GraphError> for LayoutError {
    fn from(e: GraphError) -> Self {
        LayoutError::Graph(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Direct neighbours of the path entities; `anchor` is set when layers are
    /// split per path entity (index into the path).
    OneHop { anchor: Option<usize> },
    /// Entities resolved for a chain position (zero-based).
    HypothesisAligned { position: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMember {
    pub id: String,
    pub category: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub members: Vec<LayerMember>,
    /// Set for layers emitted without members (e.g. an isolated path entity).
    #[serde(default)]
    pub empty: bool,
}

impl LayerSpec {
    pub fn member_ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneHopMode {
    /// One layer holding the union of all path entities' neighbours.
    #[default]
    Merged,
    /// One layer per path entity.
    PerEntity,
}

fn member_weights(
    g: &KnowledgeGraph,
    ids: &BTreeSet<String>,
    context: &HashSet<&str>,
) -> Result<Vec<LayerMember>, GraphError> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let e = g.entity(id).ok_or_else(|| GraphError::UnknownEntity(id.clone()))?;
        let density = g
            .neighbors(id, crate::graph::Direction::Both)?
            .iter()
            .filter(|n| context.contains(n.entity.id.as_str()))
            .count();
        out.push(LayerMember {
            id: id.clone(),
            category: e.category.clone(),
            weight: density.max(1) as f64,
        });
    }
    Ok(out)
}

fn layer(g: &KnowledgeGraph, kind: LayerKind, ids: BTreeSet<String>, path: &[&str]) -> Result<LayerSpec, GraphError> {
    let mut context: HashSet<&str> = path.iter().copied().collect();
    context.extend(ids.iter().map(String::as_str));
    let members = member_weights(g, &ids, &context)?;
    Ok(LayerSpec {
        kind,
        empty: members.is_empty(),
        members,
    })
}

/// Layers for one interpretative path: one-hop neighbourhood layer(s), then
/// one layer per chain position that has resolved entities. Weights count the
/// member's KG edges into the path entities and the layer itself, floored at 1.
pub fn build_layers(
    path: &PredictionRecord,
    chain: Option<&HypothesisChain>,
    g: &KnowledgeGraph,
    mode: OneHopMode,
) -> Result<Vec<LayerSpec>, GraphError> {
    let entities = path.path_entities();
    for id in entities {
        if !g.contains(id) {
            return Err(GraphError::UnknownEntity(id.to_owned()));
        }
    }
    let on_path: HashSet<&str> = entities.iter().copied().collect();
    let neighbours = |id: &str| -> Result<BTreeSet<String>, GraphError> {
        Ok(g.neighbors(id, crate::graph::Direction::Both)?
            .into_iter()
            .map(|n| n.entity.id.clone())
            .filter(|n| !on_path.contains(n.as_str()))
            .collect())
    };
    let mut layers = Vec::new();
    match mode {
        OneHopMode::Merged => {
            let mut all = BTreeSet::new();
            for id in entities {
                all.extend(neighbours(id)?);
            }
            layers.push(layer(g, LayerKind::OneHop { anchor: None }, all, &entities)?);
        }
        OneHopMode::PerEntity => {
            let mut seen = HashSet::new();
            for (k, id) in entities.iter().enumerate() {
                if !seen.insert(*id) {
                    continue;
                }
                layers.push(layer(
                    g,
                    LayerKind::OneHop { anchor: Some(k) },
                    neighbours(id)?,
                    &entities,
                )?);
            }
        }
    }
    if let Some(chain) = chain {
        for (i, p) in chain.positions.iter().enumerate() {
            if p.entities.is_empty() {
                continue;
            }
            let ids = p.entities.iter().map(|e| e.entity_id.clone()).collect();
            layers.push(layer(g, LayerKind::HypothesisAligned { position: i }, ids, &entities)?);
        }
    }
    Ok(layers)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrossEdge {
    pub layers: (usize, usize),
    pub a: String,
    pub b: String,
    pub relation: String,
    pub direction: EdgeDirection,
}

/// Every pair (a in layer i, b in layer i+1) joined by a KG edge, in layer and
/// member order.
pub fn derive_cross_edges(layers: &[LayerSpec], g: &KnowledgeGraph) -> Result<Vec<CrossEdge>, GraphError> {
    let mut out = Vec::new();
    for (i, pair) in layers.windows(2).enumerate() {
        let mut seen = HashSet::new();
        for a in pair[0].member_ids() {
            for b in pair[1].member_ids() {
                if !seen.insert((a, b)) {
                    continue;
                }
                if let Some(m) = g.edge_exists(a, b)? {
                    out.push(CrossEdge {
                        layers: (i, i + 1),
                        a: a.to_owned(),
                        b: b.to_owned(),
                        relation: m.relation,
                        direction: m.direction,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreemapOptions {
    pub max_iterations: usize,
    /// Per-level tolerance; two levels compound, so this is kept well below
    /// the overall 5% budget.
    pub level_tolerance: f64,
}

impl Default for TreemapOptions {
    fn default() -> Self {
        Self {
            max_iterations: MAX_ITERATIONS,
            level_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLayout {
    pub id: String,
    pub category: String,
    pub site: Point,
    /// Counter-clockwise vertices.
    pub polygon: Vec<Point>,
    pub target_share: f64,
    pub area_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRegion {
    pub category: String,
    pub polygon: Vec<Point>,
    pub target_share: f64,
    pub area_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub category_iterations: usize,
    /// Largest iteration count among the per-category entity partitions.
    pub entity_iterations: usize,
    /// max over cells of |area share − weight share| / weight share.
    pub max_relative_error: f64,
    /// |Σ cell areas − container area| / container area.
    pub area_sum_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub kind: LayerKind,
    pub container: Rect,
    pub cells: Vec<CellLayout>,
    pub category_regions: Vec<CategoryRegion>,
    pub diagnostics: Diagnostics,
}

fn category_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Two-level treemap of one layer: categories partition the container by
/// summed member weight, then each category region is partitioned among its
/// members. Non-convergence is reported in the diagnostics, not as an error.
pub fn compute_treemap(
    layer: &LayerSpec,
    container: Rect,
    seed: u64,
    opts: TreemapOptions,
) -> Result<LayerLayout, LayoutError> {
    if container.is_degenerate() {
        return Err(LayoutError::ZeroArea);
    }
    if layer.members.is_empty() {
        return Err(LayoutError::EmptyLayer);
    }
    let mut groups: BTreeMap<&str, Vec<&LayerMember>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for m in &layer.members {
        if !(m.weight > 0.0 && m.weight.is_finite()) {
            return Err(LayoutError::Weight {
                id: m.id.clone(),
                weight: m.weight,
            });
        }
        if !seen.insert(m.id.as_str()) {
            return Err(LayoutError::DuplicateMember(m.id.clone()));
        }
        groups.entry(m.category.as_str()).or_default().push(m);
    }
    let total_weight: f64 = layer.members.iter().map(|m| m.weight).sum();
    let total_area = container.area();
    let solver = SolverOptions {
        max_iterations: opts.max_iterations,
        tolerance: opts.level_tolerance,
    };
    let group_targets: Vec<f64> = groups
        .values()
        .map(|ms| ms.iter().map(|m| m.weight).sum::<f64>() / total_weight)
        .collect();
    let top = voronoi::fit(&container.polygon(), &group_targets, seed, solver);
    let mut converged = top.converged;
    let mut entity_iterations = 0;
    let mut cells = Vec::with_capacity(layer.members.len());
    let mut regions = Vec::with_capacity(groups.len());
    for (k, ((category, members), region)) in groups.iter().zip(&top.cells).enumerate() {
        regions.push(CategoryRegion {
            category: (*category).to_owned(),
            polygon: region.clone(),
            target_share: group_targets[k],
            area_share: geometry::area(region) / total_area,
        });
        let group_weight: f64 = members.iter().map(|m| m.weight).sum();
        let targets: Vec<f64> = members.iter().map(|m| m.weight / group_weight).collect();
        let d = voronoi::fit(region, &targets, category_seed(seed, k), solver);
        converged &= d.converged;
        entity_iterations = entity_iterations.max(d.iterations);
        for ((m, poly), site) in members.iter().zip(d.cells).zip(d.sites) {
            cells.push(CellLayout {
                id: m.id.clone(),
                category: m.category.clone(),
                site,
                area_share: geometry::area(&poly) / total_area,
                polygon: poly,
                target_share: m.weight / total_weight,
            });
        }
    }
    let max_relative_error = cells
        .iter()
        .map(|c| (c.area_share - c.target_share).abs() / c.target_share)
        .fold(0.0, f64::max);
    let area_sum_error = (cells.iter().map(|c| c.area_share).sum::<f64>() - 1.0).abs();
    converged &= max_relative_error < AREA_TOLERANCE;
    if !converged {
        log::warn!(
            "treemap did not converge within {} iterations (max relative area error {:.4})",
            opts.max_iterations,
            max_relative_error
        );
    }
    Ok(LayerLayout {
        kind: layer.kind,
        container,
        cells,
        category_regions: regions,
        diagnostics: Diagnostics {
            converged,
            category_iterations: top.iterations,
            entity_iterations,
            max_relative_error,
            area_sum_error,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedLayout {
    pub layers: Vec<LayerLayout>,
    /// Layers skipped because they have no members, by input index.
    pub empty_layers: Vec<usize>,
    pub cross_edges: Vec<CrossEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackOptions {
    pub width: f64,
    pub layer_height: f64,
    pub gutter: f64,
    pub seed: u64,
    #[serde(default)]
    pub treemap: TreemapOptions,
}

impl Default for StackOptions {
    fn default() -> Self {
        Self {
            width: 800.0,
            layer_height: 300.0,
            gutter: 40.0,
            seed: 0,
            treemap: TreemapOptions::default(),
        }
    }
}

/// Lays out non-empty layers top to bottom with a fixed gutter and derives the
/// cross-layer edges between consecutive non-empty layers.
pub fn compute_stacked(
    layers: &[LayerSpec],
    g: &KnowledgeGraph,
    opts: StackOptions,
) -> Result<StackedLayout, LayoutError> {
    let mut out = Vec::new();
    let mut shown = Vec::new();
    let mut empty_layers = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        if l.members.is_empty() {
            empty_layers.push(i);
            continue;
        }
        let y = out.len() as f64 * (opts.layer_height + opts.gutter);
        let rect = Rect::new(0.0, y, opts.width, opts.layer_height);
        out.push(compute_treemap(
            l,
            rect,
            opts.seed.wrapping_add(i as u64),
            opts.treemap,
        )?);
        shown.push(l.clone());
    }
    let cross_edges = derive_cross_edges(&shown, g)?;
    Ok(StackedLayout {
        layers: out,
        empty_layers,
        cross_edges,
    })
}
