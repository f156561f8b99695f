//! Per-session state and its append-only event log.
//!
//! Every mutation is recorded as an event carrying its external inputs (model
//! replies are stored, not re-requested), so replaying the log against the
//! same dataset reconstructs the state exactly.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use kgchain_core::chain::{match_chain, ChainError, ChainMatchReport, HypothesisChain};
use kgchain_core::gateway::{ChatSession, HistoryEntry};
use kgchain_core::layout::Point;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetData;

pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub polygon: Vec<Point>,
    pub entity_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        id: String,
        dataset: String,
    },
    /// Full chain state after a create, edit, preview or analysis.
    ChainSaved {
        chain: HypothesisChain,
    },
    /// Matching is deterministic, so only the chain id is logged.
    ChainRetrieved {
        chain_id: String,
    },
    Lasso {
        selection: Selection,
    },
    Chat {
        entry: HistoryEntry,
    },
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("event refers to unknown chain {0:?}")]
    UnknownChain(String),
    #[error("replaying event for chain {chain_id:?}: {source}")]
    Replay { chain_id: String, source: ChainError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub dataset: String,
    pub chat: ChatSession,
    pub chains: BTreeMap<String, HypothesisChain>,
    /// Latest match report per retrieved chain.
    pub reports: BTreeMap<String, ChainMatchReport>,
    pub selections: Vec<Selection>,
    /// Events applied so far.
    pub events: usize,
}

impl SessionState {
    pub fn new(id: &str, dataset: &str) -> Self {
        Self {
            id: id.to_owned(),
            dataset: dataset.to_owned(),
            chat: ChatSession::new(id),
            chains: BTreeMap::new(),
            reports: BTreeMap::new(),
            selections: Vec::new(),
            events: 0,
        }
    }

    /// Id for the next chain created in this session.
    pub fn next_chain_id(&self) -> String {
        format!("{}-c{}", self.id, self.chains.len() + 1)
    }

    /// Applies one event. `ChainRetrieved` re-runs matching against `data`.
    pub fn apply(&mut self, event: &SessionEvent, data: &DatasetData) -> Result<(), SessionError> {
        match event {
            SessionEvent::Created { id, dataset } => *self = Self::new(id, dataset),
            SessionEvent::ChainSaved { chain } => {
                self.reports.remove(&chain.id);
                self.chains.insert(chain.id.clone(), chain.clone());
            }
            SessionEvent::ChainRetrieved { chain_id } => {
                let chain = self
                    .chains
                    .get_mut(chain_id)
                    .ok_or_else(|| SessionError::UnknownChain(chain_id.clone()))?;
                let report = match_chain(chain, &data.store, &data.graph).map_err(|source| SessionError::Replay {
                    chain_id: chain_id.clone(),
                    source,
                })?;
                chain.mark_retrieved();
                self.reports.insert(chain_id.clone(), report);
            }
            SessionEvent::Lasso { selection } => self.selections.push(selection.clone()),
            SessionEvent::Chat { entry } => self.chat.restore(entry.clone()),
        }
        self.events += 1;
        Ok(())
    }
}

/// File-backed event log at `<dir>/events.jsonl`.
#[derive(Debug, Clone)]
pub struct EventLog {
    path: PathBuf,
}

impl EventLog {
    pub fn new(session_dir: &Path) -> Self {
        Self {
            path: session_dir.join(EVENTS_FILE),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: io::Error) -> SessionError {
        SessionError::Io {
            path: self.path.clone(),
            source,
        }
    }

    pub fn append(&self, event: &SessionEvent) -> Result<(), SessionError> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(|e| self.io(e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| self.io(e))
    }

    pub fn read(&self) -> Result<Vec<SessionEvent>, SessionError> {
        let f = File::open(&self.path).map_err(|e| self.io(e))?;
        let mut events = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| self.io(e))?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| SessionError::Corrupt {
                path: self.path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(events)
    }

    /// Dataset id recorded in the log's `Created` event.
    pub fn dataset(&self) -> Result<String, SessionError> {
        match self.read()?.first() {
            Some(SessionEvent::Created { dataset, .. }) => Ok(dataset.clone()),
            _ => Err(SessionError::Corrupt {
                path: self.path.clone(),
                line: 1,
                message: "log does not start with a created event".into(),
            }),
        }
    }

    pub fn replay(&self, data: &DatasetData) -> Result<SessionState, SessionError> {
        let events = self.read()?;
        let mut state = SessionState::new("", "");
        for ev in &events {
            state.apply(ev, data)?;
        }
        Ok(state)
    }
}
