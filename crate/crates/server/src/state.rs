//! Shared server state: dataset slots, live sessions, revision counter and
//! the idempotency cache.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use kgchain_core::gateway::Gateway;
use kgchain_core::predictions::StarPolicy;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard, RwLock as AsyncRwLock};

use crate::dataset::{DatasetData, DatasetDescriptor, DatasetFiles, LoadStatus, Registry};
use crate::error::ApiError;
use crate::session::{EventLog, SessionEvent, SessionState};

pub const SESSIONS_DIR: &str = "sessions";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    /// Which match bitmasks earn a star in the prediction table.
    #[serde(default)]
    pub star_policy: StarPolicy,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            star_policy: StarPolicy::default(),
        }
    }
}

pub struct DatasetSlot {
    descriptor: RwLock<DatasetDescriptor>,
    /// Readers share, appends and star marking take the write half.
    pub data: AsyncRwLock<Option<DatasetData>>,
}

impl DatasetSlot {
    pub fn descriptor(&self) -> DatasetDescriptor {
        self.descriptor.read().expect("descriptor lock").clone()
    }

    fn update(&self, f: impl FnOnce(&mut DatasetDescriptor)) {
        f(&mut self.descriptor.write().expect("descriptor lock"));
    }
}

/// A cached final response for one idempotency key.
#[derive(Debug, Clone)]
pub struct CachedResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

type IdempotencySlot = Arc<AsyncMutex<Option<CachedResponse>>>;
pub type SessionHandle = Arc<AsyncMutex<SessionState>>;

struct Inner {
    config: ServerConfig,
    gateway: Arc<Gateway>,
    revision: AtomicU64,
    datasets: RwLock<BTreeMap<String, Arc<DatasetSlot>>>,
    registry: AsyncMutex<()>,
    sessions: AsyncMutex<HashMap<String, SessionHandle>>,
    next_session: AtomicU64,
    idempotency: Mutex<HashMap<String, IdempotencySlot>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl AppState {
    /// Opens the data directory and starts loading every registered dataset.
    pub async fn open(config: ServerConfig, gateway: Gateway) -> std::io::Result<Self> {
        fs::create_dir_all(config.data_dir.join(SESSIONS_DIR))?;
        let registry = Registry::read(&config.data_dir)?;
        let last_session = fs::read_dir(config.data_dir.join(SESSIONS_DIR))?
            .filter_map(|e| e.ok())
            .filter_map(|e| session_number(&e.file_name().to_string_lossy()))
            .max()
            .unwrap_or(0);
        let state = Self {
            inner: Arc::new(Inner {
                config,
                gateway: Arc::new(gateway),
                revision: AtomicU64::new(0),
                datasets: RwLock::new(BTreeMap::new()),
                registry: AsyncMutex::new(()),
                sessions: AsyncMutex::new(HashMap::new()),
                next_session: AtomicU64::new(last_session + 1),
                idempotency: Mutex::new(HashMap::new()),
            }),
        };
        for (id, files) in registry.datasets {
            state.start_load(DatasetDescriptor::new(id, files));
        }
        Ok(state)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    pub fn gateway(&self) -> Arc<Gateway> {
        Arc::clone(&self.inner.gateway)
    }

    pub fn revision(&self) -> u64 {
        self.inner.revision.load(Ordering::SeqCst)
    }

    /// Advances the revision after a successful mutation.
    pub fn bump(&self) -> u64 {
        self.inner.revision.fetch_add(1, Ordering::SeqCst) + 1
    }

    /// Makes a relative dataset path relative to the data directory.
    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.inner.config.data_dir.join(p)
        }
    }

    fn resolved_files(&self, files: &DatasetFiles) -> DatasetFiles {
        DatasetFiles {
            entities: self.resolve_path(&files.entities),
            triplets: self.resolve_path(&files.triplets),
            predictions: files.predictions.as_deref().map(|p| self.resolve_path(p)),
            embedding: files.embedding.as_deref().map(|p| self.resolve_path(p)),
        }
    }

    pub fn datasets(&self) -> Vec<DatasetDescriptor> {
        let map = self.inner.datasets.read().expect("datasets lock");
        map.values().map(|s| s.descriptor()).collect()
    }

    pub fn slot(&self, id: &str) -> Result<Arc<DatasetSlot>, ApiError> {
        let map = self.inner.datasets.read().expect("datasets lock");
        map.get(id).cloned().ok_or_else(|| ApiError::not_found("dataset", id))
    }

    /// Slot for a dataset that has finished loading.
    pub fn ready(&self, id: &str) -> Result<Arc<DatasetSlot>, ApiError> {
        let slot = self.slot(id)?;
        let d = slot.descriptor();
        if d.status != LoadStatus::Ready {
            return Err(
                ApiError::conflict("dataset_not_ready", format!("dataset {id:?} is {:?}", d.status))
                    .with_detail(serde_json::to_value(&d).expect("descriptor serializes")),
            );
        }
        Ok(slot)
    }

    /// Picks the dataset named in a request, or the only registered one.
    pub fn default_dataset(&self, requested: Option<&str>) -> Result<String, ApiError> {
        if let Some(id) = requested {
            return Ok(id.to_owned());
        }
        let map = self.inner.datasets.read().expect("datasets lock");
        match map.keys().collect::<Vec<_>>().as_slice() {
            [only] => Ok((*only).clone()),
            _ => Err(ApiError::invalid(
                "`dataset` is required when more than one dataset is registered",
            )),
        }
    }

    /// Registers (or re-registers after a failure) a dataset and loads it in the
    /// background. Re-posting identical files is a no-op.
    pub async fn register(&self, id: &str, files: DatasetFiles) -> Result<(DatasetDescriptor, bool), ApiError> {
        let valid_id = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !valid_id {
            return Err(ApiError::invalid(format!(
                "dataset id {id:?} must be non-empty ASCII letters, digits, '-', '_' or '.'"
            )));
        }
        let _guard = self.inner.registry.lock().await;
        if let Ok(existing) = self.slot(id) {
            let d = existing.descriptor();
            if d.files != files {
                return Err(ApiError::conflict(
                    "dataset_exists",
                    format!("dataset {id:?} is already registered with different files"),
                ));
            }
            if d.status != LoadStatus::Failed {
                return Ok((d, false));
            }
        }
        let mut registry =
            Registry::read(&self.inner.config.data_dir).map_err(|e| ApiError::internal(e.to_string()))?;
        registry.datasets.insert(id.to_owned(), files.clone());
        registry
            .write(&self.inner.config.data_dir)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let d = self.start_load(DatasetDescriptor::new(id, files));
        Ok((d, true))
    }

    fn start_load(&self, mut descriptor: DatasetDescriptor) -> DatasetDescriptor {
        descriptor.status = LoadStatus::Loading;
        let slot = Arc::new(DatasetSlot {
            descriptor: RwLock::new(descriptor.clone()),
            data: AsyncRwLock::new(None),
        });
        self.inner
            .datasets
            .write()
            .expect("datasets lock")
            .insert(descriptor.id.clone(), Arc::clone(&slot));
        let files = self.resolved_files(&descriptor.files);
        let id = descriptor.id.clone();
        let state = self.clone();
        tokio::task::spawn_blocking(move || {
            let result = DatasetData::load(&id, &files);
            let mut guard = slot.data.blocking_write();
            match result {
                Ok(data) => {
                    let counts = data.counts();
                    log::info!("dataset {id}: loaded {counts:?}");
                    *guard = Some(data);
                    slot.update(|d| {
                        d.status = LoadStatus::Ready;
                        d.counts = Some(counts);
                        d.error = None;
                    });
                }
                Err(e) => {
                    log::error!("dataset {id}: {e}");
                    slot.update(|d| {
                        d.status = LoadStatus::Failed;
                        d.error = Some(e.to_string());
                    });
                }
            }
            state.bump();
        });
        descriptor
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.inner.config.data_dir.join(SESSIONS_DIR).join(id)
    }

    pub fn event_log(&self, id: &str) -> EventLog {
        EventLog::new(&self.session_dir(id))
    }

    pub async fn create_session(&self, dataset: &str) -> Result<SessionState, ApiError> {
        let slot = self.ready(dataset)?;
        let id = format!("s{:04}", self.inner.next_session.fetch_add(1, Ordering::SeqCst));
        let event = SessionEvent::Created {
            id: id.clone(),
            dataset: dataset.to_owned(),
        };
        let mut state = SessionState::new(&id, dataset);
        {
            let data = slot.data.read().await;
            let data = data
                .as_ref()
                .ok_or_else(|| ApiError::internal("ready dataset has no data"))?;
            state
                .apply(&event, data)
                .map_err(|e| ApiError::internal(e.to_string()))?;
        }
        self.event_log(&id)
            .append(&event)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        self.inner
            .sessions
            .lock()
            .await
            .insert(id.clone(), Arc::new(AsyncMutex::new(state.clone())));
        Ok(state)
    }

    /// Live session handle, replaying the persisted log on first access.
    pub async fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let mut sessions = self.inner.sessions.lock().await;
        if let Some(h) = sessions.get(id) {
            return Ok(Arc::clone(h));
        }
        let log = self.event_log(id);
        if session_number(id).is_none() || !log.path().exists() {
            return Err(ApiError::not_found("session", id));
        }
        let dataset = log.dataset().map_err(|e| ApiError::internal(e.to_string()))?;
        let slot = self.ready(&dataset)?;
        let data = slot.data.read().await;
        let data = data
            .as_ref()
            .ok_or_else(|| ApiError::internal("ready dataset has no data"))?;
        let state = log.replay(data).map_err(|e| ApiError::internal(e.to_string()))?;
        log::info!("session {id}: replayed {} events", state.events);
        let handle = Arc::new(AsyncMutex::new(state));
        sessions.insert(id.to_owned(), Arc::clone(&handle));
        Ok(handle)
    }

    pub async fn lock_session(&self, id: &str) -> Result<OwnedMutexGuard<SessionState>, ApiError> {
        Ok(self.session(id).await?.lock_owned().await)
    }

    /// Applies an event to a locked session and appends it to the log.
    pub async fn record(&self, session: &mut SessionState, event: SessionEvent) -> Result<(), ApiError> {
        let slot = self.ready(&session.dataset)?;
        {
            let data = slot.data.read().await;
            let data = data
                .as_ref()
                .ok_or_else(|| ApiError::internal("ready dataset has no data"))?;
            session.apply(&event, data)?;
        }
        Ok(self.event_log(&session.id).append(&event)?)
    }

    pub(crate) fn idempotency_slot(&self, key: &str) -> IdempotencySlot {
        let mut map = self.inner.idempotency.lock().expect("idempotency lock");
        Arc::clone(map.entry(key.to_owned()).or_default())
    }

    pub(crate) fn forget_idempotency(&self, key: &str) {
        self.inner.idempotency.lock().expect("idempotency lock").remove(key);
    }
}
