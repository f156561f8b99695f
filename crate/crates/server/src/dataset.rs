//! Dataset registry: descriptors persisted as JSON, loaded in the background.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use kgchain_core::graph::{GraphCounts, GraphError, KnowledgeGraph};
use kgchain_core::layout::{load_embedding, EmbeddingPoint, LayoutError};
use kgchain_core::predictions::{PredictionError, PredictionStore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REGISTRY_FILE: &str = "datasets.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadStatus {
    Unloaded,
    Loading,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub entities: PathBuf,
    pub triplets: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    #[serde(flatten)]
    pub graph: GraphCounts,
    pub predictions: usize,
    pub clamped_weights: usize,
    pub embedding_points: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub id: String,
    #[serde(flatten)]
    pub files: DatasetFiles,
    pub status: LoadStatus,
    /// Present iff the dataset is ready.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<DatasetCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DatasetDescriptor {
    pub fn new(id: impl Into<String>, files: DatasetFiles) -> Self {
        Self {
            id: id.into(),
            files,
            status: LoadStatus::Unloaded,
            counts: None,
            error: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Predictions(#[from] PredictionError),
    #[error(transparent)]
    Embedding(#[from] LayoutError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("embedding references unknown entity {0:?}")]
    EmbeddingEntity(String),
}

/// Everything held in memory for a ready dataset.
pub struct DatasetData {
    pub graph: KnowledgeGraph,
    pub store: PredictionStore,
    pub embedding: Vec<EmbeddingPoint>,
}

impl DatasetData {
    pub fn load(id: &str, files: &DatasetFiles) -> Result<Self, LoadError> {
        let graph = KnowledgeGraph::load(&files.entities, &files.triplets)?;
        let store = match &files.predictions {
            Some(p) => PredictionStore::load(id, p, &graph)?,
            None => PredictionStore::from_records(id, &[], &graph)?,
        };
        let embedding = match &files.embedding {
            Some(p) => {
                let f = File::open(p).map_err(|source| LoadError::Io {
                    path: p.clone(),
                    source,
                })?;
                let pts = load_embedding(f)?;
                if let Some(bad) = pts.iter().find(|pt| !graph.contains(&pt.entity_id)) {
                    return Err(LoadError::EmbeddingEntity(bad.entity_id.clone()));
                }
                pts
            }
            None => Vec::new(),
        };
        Ok(Self {
            graph,
            store,
            embedding,
        })
    }

    pub fn counts(&self) -> DatasetCounts {
        DatasetCounts {
            graph: self.graph.counts(),
            predictions: self.store.len(),
            clamped_weights: self.store.clamped_weights(),
            embedding_points: self.embedding.len(),
        }
    }
}

/// Registered datasets (id → files), stored as `datasets.json` in the data
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub datasets: BTreeMap<String, DatasetFiles>,
}

impl Registry {
    pub fn path(data_dir: &Path) -> PathBuf {
        data_dir.join(REGISTRY_FILE)
    }

    pub fn read(data_dir: &Path) -> io::Result<Self> {
        match fs::read_to_string(Self::path(data_dir)) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    pub fn write(&self, data_dir: &Path) -> io::Result<()> {
        fs::create_dir_all(data_dir)?;
        let tmp = data_dir.join(format!("{REGISTRY_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(self).expect("registry serializes"))?;
        fs::rename(tmp, Self::path(data_dir))
    }
}
