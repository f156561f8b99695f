use std::collections::BTreeSet;

use kgchain_core::chain::{create_chain, set_entities, PositionSpec};
use kgchain_core::graph::{Direction, Entity, KnowledgeGraph, Triplet};
use kgchain_core::layout::{
    build_layers, compute_treemap, derive_cross_edges, lasso_select, EmbeddingPoint, LayerKind, LayerMember, LayerSpec,
    OneHopMode, Point, Rect, TreemapOptions,
};
use kgchain_core::predictions::{Hop, PredictionRecord};
use kgchain_core::synthetic::random_graph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shoelace area, written independently of the layout code.
fn shoelace(poly: &[Point]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let j = (i + 1) % poly.len();
        s += poly[i].x * poly[j].y - poly[j].x * poly[i].y;
    }
    s.abs() / 2.0
}

fn degree_layer(n: usize, seed: u64) -> LayerSpec {
    let g = random_graph(seed, n, n * 4);
    LayerSpec {
        kind: LayerKind::OneHop { anchor: None },
        members: g
            .entities()
            .iter()
            .map(|e| LayerMember {
                id: e.id.clone(),
                category: e.category.clone(),
                weight: g.degree(&e.id).unwrap().max(1) as f64,
            })
            .collect(),
        empty: false,
    }
}

fn check_quality(layer: &LayerSpec, seed: u64) {
    let rect = Rect::new(0.0, 0.0, 800.0, 500.0);
    let l = compute_treemap(layer, rect, seed, TreemapOptions::default()).unwrap();
    let total_w: f64 = layer.members.iter().map(|m| m.weight).sum();
    let mut sum = 0.0;
    for cell in &l.cells {
        let member = layer.members.iter().find(|x| x.id == cell.id).unwrap();
        let a = shoelace(&cell.polygon);
        sum += a;
        let share = a / rect.area();
        let target = member.weight / total_w;
        assert!(
            (share - target).abs() / target < 0.05,
            "{}: share {share} target {target}",
            cell.id
        );
    }
    assert!((sum - rect.area()).abs() / rect.area() < 0.005);
    assert!(l.diagnostics.converged);
    assert!(l.diagnostics.category_iterations <= 500 && l.diagnostics.entity_iterations <= 500);
    assert_eq!(l.cells.len(), layer.members.len());
}

#[test]
fn fifty_degree_weighted_cells() {
    check_quality(&degree_layer(50, 17), 1);
}

#[test]
fn twenty_cells_various_seeds() {
    for seed in 0..5 {
        check_quality(&degree_layer(20, seed), seed);
    }
}

#[test]
fn layouts_are_bit_identical_for_a_seed() {
    let layer = degree_layer(50, 2);
    let rect = Rect::new(0.0, 0.0, 640.0, 480.0);
    let a = compute_treemap(&layer, rect, 9, TreemapOptions::default()).unwrap();
    let b = compute_treemap(&layer, rect, 9, TreemapOptions::default()).unwrap();
    let bits = |l: &kgchain_core::layout::LayerLayout| -> Vec<u64> {
        l.cells
            .iter()
            .flat_map(|c| c.polygon.iter().flat_map(|p| [p.x.to_bits(), p.y.to_bits()]))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn heavier_cells_are_larger() {
    let layer = degree_layer(50, 8);
    let l = compute_treemap(&layer, Rect::new(0.0, 0.0, 500.0, 500.0), 4, TreemapOptions::default()).unwrap();
    for a in &l.cells {
        for b in &l.cells {
            if a.target_share > 2.0 * b.target_share {
                assert!(shoelace(&a.polygon) > shoelace(&b.polygon), "{} vs {}", a.id, b.id);
            }
        }
    }
}

#[test]
fn cells_are_interior_disjoint() {
    // sample points: each lies in at most one cell interior
    let layer = degree_layer(20, 3);
    let l = compute_treemap(&layer, Rect::new(0.0, 0.0, 100.0, 100.0), 2, TreemapOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let p = Point::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
        let owners = l.cells.iter().filter(|c| strictly_inside(&c.polygon, p)).count();
        assert!(owners <= 1);
    }
}

fn strictly_inside(poly: &[Point], p: Point) -> bool {
    // convex, counter-clockwise polygon
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) > 1e-9
    })
}

fn ent(id: &str, cat: &str) -> Entity {
    Entity {
        id: id.into(),
        name: id.into(),
        category: cat.into(),
        description: String::new(),
    }
}

fn path(h: &str, a: &str, b: &str, t: &str) -> PredictionRecord {
    let hop = |e: &str| Hop {
        relation: "r".into(),
        weight: 0.5,
        entity: e.into(),
    };
    PredictionRecord {
        id: 0,
        head: h.into(),
        tail: t.into(),
        score: 1.0,
        rank: 1,
        path: [hop(a), hop(b), hop(t)],
    }
}

/// Path P0-P1-P2-P3 where P0/P1/P2 have 3/4/5 private neighbours and P3 none.
fn neighbourhood_graph() -> KnowledgeGraph {
    let mut ents: Vec<Entity> = (0..4).map(|i| ent(&format!("P{i}"), "Gene")).collect();
    let mut triplets = vec![
        Triplet::new("P0", "r", "P1"),
        Triplet::new("P1", "r", "P2"),
        Triplet::new("P2", "r", "P3"),
    ];
    for (p, k) in [(0, 3), (1, 4), (2, 5)] {
        for j in 0..k {
            let id = format!("N{p}_{j}");
            ents.push(ent(&id, if j % 2 == 0 { "Drug" } else { "Pathway" }));
            triplets.push(Triplet::new(format!("P{p}"), "r", id));
        }
    }
    ents.push(ent("H0", "Gene"));
    ents.push(ent("H1", "Gene"));
    triplets.push(Triplet::new("N0_0", "links", "H0"));
    triplets.push(Triplet::new("H1", "links", "N2_4"));
    KnowledgeGraph::from_parts(ents, &triplets).unwrap()
}

#[test]
fn merged_one_hop_layer_is_neighbour_union() {
    let g = neighbourhood_graph();
    let p = path("P0", "P1", "P2", "P3");
    let layers = build_layers(&p, None, &g, OneHopMode::Merged).unwrap();
    assert_eq!(layers.len(), 1);
    let oracle: BTreeSet<String> = ["P0", "P1", "P2", "P3"]
        .iter()
        .flat_map(|id| g.neighbors(id, Direction::Both).unwrap())
        .map(|n| n.entity.id.clone())
        .filter(|id| !id.starts_with('P'))
        .collect();
    let got: BTreeSet<String> = layers[0].member_ids().map(str::to_owned).collect();
    assert_eq!(got.len(), 12);
    assert_eq!(got, oracle);
    assert!(layers[0].members.iter().all(|m| m.weight >= 1.0));
}

#[test]
fn per_entity_layers_flag_isolated_entities() {
    let g = neighbourhood_graph();
    let p = path("P0", "P1", "P2", "P3");
    let layers = build_layers(&p, None, &g, OneHopMode::PerEntity).unwrap();
    assert_eq!(layers.iter().map(|l| l.members.len()).collect::<Vec<_>>(), [3, 4, 5, 0]);
    assert!(layers[3].empty);
}

#[test]
fn hypothesis_layers_follow_resolved_positions() {
    let g = neighbourhood_graph();
    let spec = |d: &str| PositionSpec {
        description: d.into(),
        ..Default::default()
    };
    let mut chain = create_chain("c", vec![spec("a"), spec("b"), spec("c")]).unwrap();
    set_entities(&mut chain, 0, &["H0".into()], &g).unwrap();
    set_entities(&mut chain, 2, &["H1".into()], &g).unwrap();
    let layers = build_layers(&path("P0", "P1", "P2", "P3"), Some(&chain), &g, OneHopMode::Merged).unwrap();
    let kinds: Vec<LayerKind> = layers.iter().map(|l| l.kind).collect();
    assert_eq!(
        kinds,
        [
            LayerKind::OneHop { anchor: None },
            LayerKind::HypothesisAligned { position: 0 },
            LayerKind::HypothesisAligned { position: 2 },
        ]
    );
    let edges = derive_cross_edges(&layers, &g).unwrap();
    // oracle: nested loop over adjacent layer pairs against the raw triplets
    let triplets: Vec<Triplet> = g.triplets().collect();
    let mut oracle = Vec::new();
    for (i, w) in layers.windows(2).enumerate() {
        for a in w[0].member_ids() {
            for b in w[1].member_ids() {
                if triplets
                    .iter()
                    .any(|t| (t.head == a && t.tail == b) || (t.head == b && t.tail == a))
                {
                    oracle.push((i, a.to_owned(), b.to_owned()));
                }
            }
        }
    }
    let got: Vec<_> = edges.iter().map(|e| (e.layers.0, e.a.clone(), e.b.clone())).collect();
    assert_eq!(got, oracle);
    assert_eq!(got, [(0, "N0_0".to_string(), "H0".to_string())]);
    assert!(derive_cross_edges(&layers[..1], &g).unwrap().is_empty());
}

/// Convex polygon membership via half-plane sign tests (boundary inclusive).
fn halfplane_oracle(poly: &[Point], p: Point) -> bool {
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
    })
}

fn convex_polygon(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let k = rng.gen_range(3..10);
    let mut angles: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let (cx, cy, r) = (
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
        rng.gen_range(1.0..6.0),
    );
    angles
        .iter()
        .map(|a| Point::new(cx + r * a.cos(), cy + r * a.sin()))
        .collect()
}

#[test]
fn lasso_matches_halfplane_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let poly = convex_polygon(&mut rng);
        let pts: Vec<EmbeddingPoint> = (0..1000)
            .map(|i| EmbeddingPoint {
                entity_id: format!("p{i}"),
                x: rng.gen_range(-12.0..12.0),
                y: rng.gen_range(-12.0..12.0),
            })
            .collect();
        let got = lasso_select(&pts, &poly).unwrap();
        let want: Vec<String> = pts
            .iter()
            .filter(|p| halfplane_oracle(&poly, Point::new(p.x, p.y)))
            .map(|p| p.entity_id.clone())
            .collect();
        assert_eq!(got, want);
    }
}

proptest! {
    #[test]
    fn lasso_is_translation_invariant(seed in any::<u64>(), dx in -1e3f64..1e3, dy in -1e3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poly = convex_polygon(&mut rng);
        // keep points away from edges so rounding in the shift cannot flip them
        let pts: Vec<EmbeddingPoint> = (0..200)
            .map(|i| EmbeddingPoint { entity_id: format!("p{i}"), x: rng.gen_range(-12.0..12.0), y: rng.gen_range(-12.0..12.0) })
            .filter(|p| {
                (0..poly.len()).all(|i| {
                    let a = poly[i];
                    let b = poly[(i + 1) % poly.len()];
                    let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
                    (((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / len).abs() > 1e-6
                })
            })
            .collect();
        let shifted_poly: Vec<Point> = poly.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
        let shifted: Vec<EmbeddingPoint> = pts.iter().map(|p| EmbeddingPoint { entity_id: p.entity_id.clone(), x: p.x + dx, y: p.y + dy }).collect();
        prop_assert_eq!(lasso_select(&pts, &poly).unwrap(), lasso_select(&shifted, &shifted_poly).unwrap());
    }
}
