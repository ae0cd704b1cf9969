use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};

use delib_core::dataset::{load_dataset, Dataset, Schema};
use delib_core::knowledge::KnowledgeExtractor;
use delib_core::llm::{HttpAdapter, LlmAdapter, MockAdapter};
use delib_core::model::{fit, ModelSnapshot};
use delib_core::session::{Engine, JsonlStore, Session, SessionError, SessionStore, StoreError};

use crate::config::{AdapterConfig, ServiceConfig};

pub type SessionHandle = Arc<Mutex<Session>>;

/// Shared server state: the engine, the event-log store, and live sessions.
/// Each session has its own lock, so events on one session are serialized
/// while different sessions proceed independently.
pub struct AppState {
    pub engine: Engine,
    pub store: Arc<dyn SessionStore>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

#[derive(Debug, thiserror::Error)]
pub enum LookupError {
    #[error("unknown session: {0}")]
    Unknown(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Replay(#[from] SessionError),
}

impl AppState {
    pub fn new(engine: Engine, store: Arc<dyn SessionStore>) -> Self {
        Self {
            engine,
            store,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    /// Loads data and model, builds the configured adapter, and opens the
    /// log directory.
    pub fn from_config(config: &ServiceConfig) -> Result<Self> {
        let schema = Schema::admissions();
        let data = load_dataset(&config.dataset, &schema)
            .with_context(|| format!("loading dataset {}", config.dataset.display()))?;
        let (train, cases) = data.split(config.split, config.seed)?;
        let mut model = match &config.model {
            Some(path) => ModelSnapshot::load(path).with_context(|| format!("loading model {}", path.display()))?,
            None => fit(&train)?,
        };
        if let Some(h) = config.halfgap {
            model = model.with_residual_halfgap(h)?;
        }
        let adapter: Arc<dyn LlmAdapter> = match &config.adapter {
            AdapterConfig::Mock { seed } => Arc::new(MockAdapter::new(*seed)),
            AdapterConfig::Http { endpoint, model, .. } => {
                Arc::new(HttpAdapter::from_env(endpoint, model, config.adapter.timeout())?)
            }
        };
        std::fs::create_dir_all(&config.log_dir)
            .with_context(|| format!("creating {}", config.log_dir.display()))?;
        let store = Arc::new(JsonlStore::open(&config.log_dir)?);
        Self::with_parts(train, cases, model, adapter, store, config.conflict_threshold)
    }

    pub fn with_parts(
        train: Dataset,
        cases: Dataset,
        model: ModelSnapshot,
        adapter: Arc<dyn LlmAdapter>,
        store: Arc<dyn SessionStore>,
        tau: f64,
    ) -> Result<Self> {
        let kx = KnowledgeExtractor::new(Arc::new(train), Arc::new(model))?;
        let engine = Engine::new(Arc::new(kx), Arc::new(cases), adapter).with_threshold(tau);
        Ok(Self::new(engine, store))
    }

    pub fn insert(&self, session: Session) -> SessionHandle {
        let id = session.session_id.clone();
        let handle = Arc::new(Mutex::new(session));
        self.sessions.lock().expect("session map poisoned").insert(id, handle.clone());
        handle
    }

    /// Live session, or one rebuilt from its stored log after a restart.
    pub fn get(&self, id: &str) -> Result<SessionHandle, LookupError> {
        if let Some(h) = self.sessions.lock().expect("session map poisoned").get(id) {
            return Ok(h.clone());
        }
        let entries = match self.store.load(id) {
            Ok(Some(entries)) => entries,
            Ok(None) | Err(StoreError::InvalidId(_)) => return Err(LookupError::Unknown(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        let session = Engine::replay(&entries)?;
        let mut map = self.sessions.lock().expect("session map poisoned");
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(session)))
            .clone())
    }

    /// Every stored session, rebuilt from its log.
    pub fn all_sessions(&self) -> Result<Vec<Session>, LookupError> {
        let mut out = Vec::new();
        for id in self.store.session_ids()? {
            let handle = self.get(&id)?;
            out.push(handle.lock().expect("session lock poisoned").clone());
        }
        Ok(out)
    }
}
