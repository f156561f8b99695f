//! Seeded synthetic datasets for tests, demos and benchmarks.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{create_chain, set_entities, HypothesisChain, PositionSpec};
use crate::graph::{Entity, KnowledgeGraph, Triplet, ENTITY_HEADER, TRIPLET_HEADER};
use crate::layout::EMBEDDING_HEADER;
use crate::predictions::{to_jsonl, Hop, PredictionRecord, PredictionStore};

pub const CATEGORIES: [&str; 4] = ["Gene", "Drug", "Pathway", "Disease"];
pub const RELATIONS: [&str; 5] = ["sl_gsg", "interacts_with", "regulates", "treats", "participates_in"];

fn entity_id(i: usize) -> String {
    format!("E{i:05}")
}

fn entities(n: usize, categories: &[&str]) -> Vec<Entity> {
    (0..n)
        .map(|i| Entity {
            id: entity_id(i),
            name: format!("Entity {i}"),
            category: categories[i % categories.len()].to_owned(),
            description: format!(
                "Synthetic {} number {i}.",
                categories[i % categories.len()].to_lowercase()
            ),
        })
        .collect()
}

/// `n_triplets` distinct random triplets (no self-loops) over `n_entities`.
pub fn random_triplets(rng: &mut ChaCha8Rng, n_entities: usize, n_triplets: usize) -> Vec<Triplet> {
    assert!(n_entities >= 2);
    let mut seen = HashSet::with_capacity(n_triplets);
    let mut out = Vec::with_capacity(n_triplets);
    while out.len() < n_triplets {
        let h = rng.gen_range(0..n_entities);
        let t = rng.gen_range(0..n_entities);
        let r = rng.gen_range(0..RELATIONS.len());
        if h == t || !seen.insert((h, r, t)) {
            continue;
        }
        out.push(Triplet::new(entity_id(h), RELATIONS[r], entity_id(t)));
    }
    out
}

pub fn random_graph(seed: u64, n_entities: usize, n_triplets: usize) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets = random_triplets(&mut rng, n_entities, n_triplets);
    KnowledgeGraph::from_parts(entities(n_entities, &CATEGORIES), &triplets).expect("synthetic graph is valid")
}

/// Graph, predictions and a resolved chain with a known number of records
/// whose paths pass through all three hypothesis entity sets.
pub struct PlantedFixture {
    pub graph: KnowledgeGraph,
    pub store: PredictionStore,
    pub chain: HypothesisChain,
    /// Record ids of the planted, fully aligned paths.
    pub planted: Vec<usize>,
}

pub struct PlantedConfig {
    pub entities: usize,
    pub triplets: usize,
    pub heads: usize,
    pub tails_per_head: usize,
    pub planted: usize,
    pub set_size: usize,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            entities: 100,
            triplets: 500,
            heads: 10,
            tails_per_head: 20,
            planted: 10,
            set_size: 8,
        }
    }
}

pub fn planted_fixture(seed: u64) -> PlantedFixture {
    planted_fixture_with(seed, &PlantedConfig::default())
}

/// Builds the fixture. Entity sets S1..S3 are disjoint; planted records route
/// their hops through S1, S2 and S3 in order, every other record misses at
/// least one of them (partial alignments are common on purpose).
pub fn planted_fixture_with(seed: u64, cfg: &PlantedConfig) -> PlantedFixture {
    assert!(
        cfg.planted <= cfg.heads * cfg.set_size.min(cfg.tails_per_head),
        "too many planted records"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ents = entities(cfg.entities, &CATEGORIES);
    let triplets = random_triplets(&mut rng, cfg.entities, cfg.triplets);
    let graph = KnowledgeGraph::from_parts(ents, &triplets).expect("synthetic graph is valid");

    let mut ids: Vec<usize> = (0..cfg.entities).collect();
    ids.shuffle(&mut rng);
    let k = cfg.set_size;
    let heads: Vec<usize> = ids[..cfg.heads].to_vec();
    let sets: [Vec<usize>; 3] = [
        ids[cfg.heads..cfg.heads + k].to_vec(),
        ids[cfg.heads + k..cfg.heads + 2 * k].to_vec(),
        ids[cfg.heads + 2 * k..cfg.heads + 3 * k].to_vec(),
    ];
    let others: Vec<usize> = ids[cfg.heads + 3 * k..].to_vec();
    let in_set = |s: usize, e: usize| sets[s].contains(&e);

    // spread planted records over the heads, one random slot at a time
    let mut planted_slots: HashSet<(usize, usize)> = HashSet::new();
    for k in 0..cfg.planted {
        loop {
            let slot = (k % cfg.heads, rng.gen_range(0..cfg.tails_per_head));
            if planted_slots.insert(slot) {
                break;
            }
        }
    }

    let mut records = Vec::with_capacity(cfg.heads * cfg.tails_per_head);
    for (hi, &head) in heads.iter().enumerate() {
        let mut used_tails = HashSet::new();
        let mut rows = vec![[0usize; 3]; cfg.tails_per_head];
        // planted rows first so they always find an unused tail in S3
        let mut slots: Vec<usize> = (0..cfg.tails_per_head).collect();
        slots.sort_by_key(|s| !planted_slots.contains(&(hi, *s)));
        for slot in slots {
            let planted = planted_slots.contains(&(hi, slot));
            let path = loop {
                let pick = |rng: &mut ChaCha8Rng, s: usize, aligned: bool| -> usize {
                    if aligned {
                        *sets[s].choose(rng).expect("non-empty set")
                    } else {
                        *others.choose(rng).expect("non-empty pool")
                    }
                };
                let aligned: [bool; 3] = if planted {
                    [true; 3]
                } else {
                    // any pattern except all three
                    let bits = rng.gen_range(0..7u8);
                    [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0]
                };
                let p = [
                    pick(&mut rng, 0, aligned[0]),
                    pick(&mut rng, 1, aligned[1]),
                    pick(&mut rng, 2, aligned[2]),
                ];
                if used_tails.contains(&p[2]) {
                    continue;
                }
                debug_assert_eq!(planted, in_set(0, p[0]) && in_set(1, p[1]) && in_set(2, p[2]));
                break p;
            };
            used_tails.insert(path[2]);
            rows[slot] = path;
        }
        for (rank0, path) in rows.into_iter().enumerate() {
            let hops = [0, 1, 2].map(|h| Hop {
                relation: RELATIONS[rng.gen_range(0..RELATIONS.len())].to_owned(),
                weight: (rng.gen_range(0..=1000) as f64) / 1000.0,
                entity: entity_id(path[h]),
            });
            records.push(PredictionRecord {
                id: 0,
                head: entity_id(head),
                tail: entity_id(path[2]),
                score: 1.0 - rank0 as f64 / (cfg.tails_per_head as f64 + 1.0),
                rank: rank0 as u32 + 1,
                path: hops,
            });
        }
    }
    let store = PredictionStore::from_records("planted", &records, &graph).expect("synthetic predictions are valid");
    let planted: Vec<usize> = store
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            let e: Vec<usize> = r
                .path
                .iter()
                .map(|h| h.entity[1..].parse().expect("synthetic id"))
                .collect();
            in_set(0, e[0]) && in_set(1, e[1]) && in_set(2, e[2])
        })
        .map(|(i, _)| i)
        .collect();

    let spec = |d: &str| PositionSpec {
        description: d.into(),
        ..Default::default()
    };
    let mut chain = create_chain(
        "planted-chain",
        vec![spec("first mediator"), spec("second mediator"), spec("target")],
    )
    .expect("three positions");
    for (i, s) in sets.iter().enumerate() {
        let refs: Vec<String> = s.iter().map(|&e| entity_id(e)).collect();
        set_entities(&mut chain, i, &refs, &graph).expect("set members exist");
    }
    PlantedFixture {
        graph,
        store,
        chain,
        planted,
    }
}

/// One head with 25 predictions: ranks 1–23 explained purely by `sl_gsg`
/// hops, ranks 24 and 25 by mixed relations. Excluding `sl_gsg`-homogeneous
/// paths leaves two records, so rank 25 is displayed second.
pub struct RerankFixture {
    pub graph: KnowledgeGraph,
    pub store: PredictionStore,
    pub head: String,
    /// Record id of the original rank-25 prediction.
    pub target: usize,
}

pub fn rerank_fixture() -> RerankFixture {
    let n = 60;
    let mut ents = entities(n, &["Gene"]);
    ents[0].name = "PRIMARY1".into();
    let mut triplets = Vec::new();
    for i in 1..n {
        triplets.push(Triplet::new(entity_id(0), "sl_gsg", entity_id(i)));
    }
    let graph = KnowledgeGraph::from_parts(ents, &triplets).expect("fixture graph is valid");
    let mut records = Vec::new();
    for r in 1..=25u32 {
        let tail = entity_id(r as usize);
        let mid1 = entity_id(30 + (r as usize % 15));
        let mid2 = entity_id(45 + (r as usize % 15));
        let rel = |k: usize| -> String {
            match (r, k) {
                (24, 1) => "interacts_with".into(),
                (25, 0) => "regulates".into(),
                (25, 2) => "interacts_with".into(),
                _ => "sl_gsg".into(),
            }
        };
        records.push(PredictionRecord {
            id: 0,
            head: entity_id(0),
            tail: tail.clone(),
            score: 1.0 - r as f64 / 100.0,
            rank: r,
            path: [
                Hop {
                    relation: rel(0),
                    weight: 0.9,
                    entity: mid1,
                },
                Hop {
                    relation: rel(1),
                    weight: 0.5,
                    entity: mid2,
                },
                Hop {
                    relation: rel(2),
                    weight: 0.7,
                    entity: tail,
                },
            ],
        });
    }
    let store = PredictionStore::from_records("rerank", &records, &graph).expect("fixture predictions are valid");
    let target = store
        .records()
        .iter()
        .position(|r| r.rank == 25)
        .expect("rank 25 present");
    RerankFixture {
        graph,
        store,
        head: entity_id(0),
        target,
    }
}

/// Writes `entities.tsv` and `triplets.tsv` with `n_triplets` distinct random
/// triplets. Returns the two paths.
pub fn write_large_graph(
    dir: &Path,
    n_entities: usize,
    n_triplets: usize,
    seed: u64,
) -> io::Result<(std::path::PathBuf, std::path::PathBuf)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ep = dir.join("entities.tsv");
    let tp = dir.join("triplets.tsv");
    let mut w = BufWriter::new(File::create(&ep)?);
    writeln!(w, "{}", ENTITY_HEADER.join("\t"))?;
    for i in 0..n_entities {
        let cat = CATEGORIES[i % CATEGORIES.len()];
        writeln!(w, "{}\tEntity {i}\t{cat}\t", entity_id(i))?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(&tp)?);
    writeln!(w, "{}", TRIPLET_HEADER.join("\t"))?;
    let mut seen: HashSet<u64> = HashSet::with_capacity(n_triplets);
    let mut written = 0;
    while written < n_triplets {
        let h = rng.gen_range(0..n_entities);
        let t = rng.gen_range(0..n_entities);
        let r = rng.gen_range(0..RELATIONS.len());
        let key = ((h as u64) << 32) | ((t as u64) << 3) | r as u64;
        if h == t || !seen.insert(key) {
            continue;
        }
        writeln!(w, "{}\t{}\t{}", entity_id(h), RELATIONS[r], entity_id(t))?;
        written += 1;
    }
    w.flush()?;
    Ok((ep, tp))
}

/// Files written by [`write_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub entities: PathBuf,
    pub triplets: PathBuf,
    pub predictions: PathBuf,
    pub embedding: PathBuf,
}

/// Writes `g` and `store` in the ingestion formats, plus a seeded random
/// embedding of every entity in the unit square.
pub fn write_dataset(dir: &Path, g: &KnowledgeGraph, store: &PredictionStore, seed: u64) -> io::Result<DatasetPaths> {
    let paths = DatasetPaths {
        entities: dir.join("entities.tsv"),
        triplets: dir.join("triplets.tsv"),
        predictions: dir.join("predictions.jsonl"),
        embedding: dir.join("embedding.csv"),
    };
    let mut w = BufWriter::new(File::create(&paths.entities)?);
    writeln!(w, "{}", ENTITY_HEADER.join("\t"))?;
    for e in g.entities() {
        writeln!(w, "{}\t{}\t{}\t{}", e.id, e.name, e.category, e.description)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(&paths.triplets)?);
    g.write_triplets(&mut w)?;
    w.flush()?;
    std::fs::write(&paths.predictions, to_jsonl(store.records()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = BufWriter::new(File::create(&paths.embedding)?);
    writeln!(w, "{}", EMBEDDING_HEADER.join(","))?;
    for e in g.entities() {
        writeln!(w, "{},{:.6},{:.6}", e.id, rng.gen::<f64>(), rng.gen::<f64>())?;
    }
    w.flush()?;
    Ok(paths)
}
