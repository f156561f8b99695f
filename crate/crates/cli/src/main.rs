//! `kgchain`: ingest datasets, match chains headlessly, evaluate rankings and
//! serve the HTTP API.
//!
//! Exit codes: 0 ok, 2 input-format error, 3 contract violation, 4 backend failure.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kgchain_core::chain::{
    analyze_chain, create_chain, match_chain, set_entities, ChainError, EntityMatch, HypothesisChain, PositionSpec,
};
use kgchain_core::gateway::{Gateway, GatewayError, Mode};
use kgchain_core::metrics::{evaluate, parse_metric_list, parse_ranked_lists, DEFAULT_CUTOFF};
use kgchain_core::predictions::StarPolicy;
use kgchain_server::dataset::{DatasetData, DatasetDescriptor, DatasetFiles, LoadStatus, Registry};
use kgchain_server::{endpoints_markdown, AppState, ServerConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "kgchain", version, about = "Knowledge-graph hypothesis-chain workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset and register it in a data directory.
    Ingest {
        /// Entity TSV: id, name, category, description.
        #[arg(long)]
        entities: PathBuf,
        /// Triplet TSV: head, relation, tail.
        #[arg(long)]
        triplets: PathBuf,
        /// Prediction JSON lines with 3-hop paths.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Embedding CSV: entity_id, x, y.
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Dataset id to register under.
        #[arg(long, default_value = "default")]
        id: String,
        /// Data directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API over a data directory.
    Serve {
        #[arg(long, env = "KGCHAIN_DATA", default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Use the offline mock model backend.
        #[arg(long)]
        mock_llm: bool,
        /// Which match results earn a star in the prediction table.
        #[arg(long, value_enum, default_value_t = StarArg::All)]
        star_policy: StarArg,
    },
    /// Match a chain against a registered dataset and write the report.
    Match {
        /// Chain JSON: {"id"?, "positions": [{description, relation?, relation_labels?, entities}]×3}.
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long, env = "KGCHAIN_DATA", default_value = "data")]
        data: PathBuf,
        /// Report path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask the model backend to critique a chain.
    Analyze {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        mock_llm: bool,
        #[arg(long, value_enum, default_value_t = ModeArg::Llm)]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ranking metrics for JSON-lines ranked lists, as TSV.
    Eval {
        #[arg(long)]
        ranked_lists: PathBuf,
        #[arg(long, default_value = "ndcg,precision,recall,mrr,mpr,hit")]
        metrics: String,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the HTTP endpoint reference as markdown.
    Endpoints,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StarArg {
    All,
    Any,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Llm,
    Rag,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Contract(_) => 3,
            CliError::Backend(_) => 4,
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Render(_) | GatewayError::Contract(_) => CliError::Contract(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::Gateway(g) => g.into(),
            ChainError::Payload(_) => CliError::Backend(e.to_string()),
            _ => CliError::Contract(e.to_string()),
        }
    }
}

fn input(context: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", context.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| input(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EntityRef {
    Ref(String),
    Match(EntityMatch),
}

#[derive(Deserialize)]
struct PositionFile {
    description: String,
    #[serde(default)]
    relation: String,
    #[serde(default)]
    relation_labels: Vec<String>,
    #[serde(default)]
    entities: Vec<EntityRef>,
}

#[derive(Deserialize)]
struct ChainFile {
    #[serde(default = "default_chain_id")]
    id: String,
    positions: Vec<PositionFile>,
}

fn default_chain_id() -> String {
    "chain".into()
}

/// Reads a chain file; entities are resolved against `g` when given.
fn load_chain(path: &Path, g: Option<&kgchain_core::graph::KnowledgeGraph>) -> Result<HypothesisChain, CliError> {
    let file: ChainFile = serde_json::from_str(&read(path)?).map_err(|e| input(path, e))?;
    let specs = file
        .positions
        .iter()
        .map(|p| PositionSpec {
            description: p.description.clone(),
            relation: p.relation.clone(),
            relation_labels: p.relation_labels.clone(),
        })
        .collect();
    let mut chain = create_chain(file.id, specs)?;
    for (i, p) in file.positions.into_iter().enumerate() {
        let refs: Vec<String> = p
            .entities
            .into_iter()
            .map(|e| match e {
                EntityRef::Ref(s) => s,
                EntityRef::Match(m) => m.entity_id,
            })
            .collect();
        if refs.is_empty() {
            continue;
        }
        match g {
            Some(g) => set_entities(&mut chain, i, &refs, g)?,
            None => {
                chain.positions[i].entities = refs
                    .into_iter()
                    .enumerate()
                    .map(|(k, id)| EntityMatch {
                        entity_name: id.clone(),
                        entity_id: id,
                        category: String::new(),
                        justification: String::new(),
                        alignment_rank: k as u32 + 1,
                    })
                    .collect()
            }
        }
    }
    Ok(chain)
}

fn ingest(files: DatasetFiles, id: &str, out: &Path) -> Result<DatasetDescriptor, CliError> {
    let data = DatasetData::load(id, &files).map_err(|e| CliError::Input(e.to_string()))?;
    let target = out.join("datasets").join(id);
    fs::create_dir_all(&target).map_err(|e| input(&target, e))?;
    let copy = |src: &Path, name: &str| -> Result<PathBuf, CliError> {
        fs::copy(src, target.join(name)).map_err(|e| input(src, e))?;
        Ok(Path::new("datasets").join(id).join(name))
    };
    let stored = DatasetFiles {
        entities: copy(&files.entities, "entities.tsv")?,
        triplets: copy(&files.triplets, "triplets.tsv")?,
        predictions: files
            .predictions
            .as_deref()
            .map(|p| copy(p, "predictions.jsonl"))
            .transpose()?,
        embedding: files
            .embedding
            .as_deref()
            .map(|p| copy(p, "embedding.csv"))
            .transpose()?,
    };
    let mut registry = Registry::read(out).map_err(|e| input(out, e))?;
    registry.datasets.insert(id.to_owned(), stored.clone());
    registry.write(out).map_err(|e| input(out, e))?;
    let mut d = DatasetDescriptor::new(id, stored);
    d.status = LoadStatus::Ready;
    d.counts = Some(data.counts());
    Ok(d)
}

fn load_registered(data_dir: &Path, id: &str) -> Result<DatasetData, CliError> {
    let registry = Registry::read(data_dir).map_err(|e| input(data_dir, e))?;
    let files = registry
        .datasets
        .get(id)
        .ok_or_else(|| CliError::Input(format!("dataset {id:?} is not registered in {}", data_dir.display())))?;
    let abs = |p: &Path| {
        if p.is_absolute() {
            p.to_owned()
        } else {
            data_dir.join(p)
        }
    };
    let files = DatasetFiles {
        entities: abs(&files.entities),
        triplets: abs(&files.triplets),
        predictions: files.predictions.as_deref().map(abs),
        embedding: files.embedding.as_deref().map(abs),
    };
    DatasetData::load(id, &files).map_err(|e| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest {
            entities,
            triplets,
            predictions,
            embedding,
            id,
            out,
        } => {
            let files = DatasetFiles {
                entities,
                triplets,
                predictions,
                embedding,
            };
            let d = ingest(files, &id, &out)?;
            emit(
                None,
                &format!("{}\n", serde_json::to_string_pretty(&d).expect("descriptor serializes")),
            )
        }
        Command::Serve {
            data,
            listen,
            mock_llm,
            star_policy,
        } => {
            let gateway = Gateway::from_env(mock_llm).map_err(|e| CliError::Backend(e.to_string()))?;
            log::info!("model backend: {}", gateway.backend_id());
            let mut config = ServerConfig::new(data);
            config.star_policy = match star_policy {
                StarArg::All => StarPolicy::AllHypotheses,
                StarArg::Any => StarPolicy::AnyHypothesis,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Backend(e.to_string()))?;
            rt.block_on(async move {
                let state = AppState::open(config.clone(), gateway)
                    .await
                    .map_err(|e| input(&config.data_dir, e))?;
                kgchain_server::serve(state, listen)
                    .await
                    .map_err(|e| CliError::Input(format!("{listen}: {e}")))
            })
        }
        Command::Match {
            chain,
            dataset,
            data,
            out,
        } => {
            let ds = load_registered(&data, &dataset)?;
            let chain = load_chain(&chain, Some(&ds.graph))?;
            let report = match_chain(&chain, &ds.store, &ds.graph)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            let text = format!(
                "{}\n",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            emit(out.as_deref(), &text)
        }
        Command::Analyze {
            chain,
            mock_llm,
            mode,
            out,
        } => {
            let mut chain = load_chain(&chain, None)?;
            let gateway = Gateway::from_env(mock_llm).map_err(|e| CliError::Backend(e.to_string()))?;
            let mode = match mode {
                ModeArg::Llm => Mode::Llm,
                ModeArg::Rag => Mode::Rag,
            };
            analyze_chain(&mut chain, &gateway, "", mode)?;
            let text = format!("{}\n", serde_json::to_string_pretty(&chain).expect("chain serializes"));
            emit(out.as_deref(), &text)
        }
        Command::Eval {
            ranked_lists,
            metrics,
            n,
            out,
        } => {
            let lists = parse_ranked_lists(&read(&ranked_lists)?).map_err(|e| input(&ranked_lists, e))?;
            let metrics = parse_metric_list(&metrics).map_err(|e| CliError::Input(e.to_string()))?;
            let report = evaluate(&lists, &metrics, n).map_err(|e| CliError::Input(e.to_string()))?;
            emit(out.as_deref(), &report.to_tsv())
        }
        Command::Endpoints => emit(None, &endpoints_markdown()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
