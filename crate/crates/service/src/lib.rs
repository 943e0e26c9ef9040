//! Assessment service: validates questionnaires, screens them with a loaded
//! model, keeps cases reachable by a return token for a limited time and
//! collects PCR follow-up results.

pub mod api;
pub mod assess;
pub mod clock;
pub mod store;
pub mod submission;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::TimeDelta;
use decode_core::ModelFile;

pub use api::{router, ApiError, AssessResponse};
pub use assess::{AssessmentResult, Decision, Influence, LoadedModel, DISCLAIMER};
pub use clock::{Clock, ManualClock, SystemClock};
pub use store::{CaseRecord, CaseStore, PcrResult, StoreError};
pub use submission::{FieldError, QuestionnaireSubmission};

/// Default return-link lifetime.
pub const DEFAULT_TTL: TimeDelta = TimeDelta::days(14);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Directory of the case event log; `None` keeps cases in memory only.
    pub data_dir: Option<PathBuf>,
    pub ttl: TimeDelta,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            ttl: DEFAULT_TTL,
        }
    }
}

pub struct AppState {
    pub model: LoadedModel,
    /// Optional second model reported alongside the primary one.
    pub secondary: Option<LoadedModel>,
    pub store: CaseStore,
    pub clock: Arc<dyn Clock>,
    pub ttl: TimeDelta,
}

impl AppState {
    pub fn new(model: ModelFile, store: CaseStore, clock: Arc<dyn Clock>, ttl: TimeDelta) -> Self {
        AppState {
            model: LoadedModel::new(model),
            secondary: None,
            store,
            clock,
            ttl,
        }
    }

    pub fn with_secondary(mut self, model: ModelFile) -> Self {
        self.secondary = Some(LoadedModel::new(model));
        self
    }

    /// Primary result, with the secondary model's result attached when it can
    /// score the submission.
    pub fn assess(&self, s: &QuestionnaireSubmission) -> Result<AssessmentResult, ApiError> {
        let mut r = self.model.assess(s)?;
        if let Some(m) = &self.secondary {
            r.secondary = m.assess(s).ok().map(Box::new);
        }
        Ok(r)
    }
}

/// Builds the state from `config` and serves until ctrl-c.
pub async fn serve(model: ModelFile, secondary: Option<ModelFile>, config: ServiceConfig) -> Result<(), StoreError> {
    let store = match &config.data_dir {
        Some(dir) => CaseStore::open(dir)?,
        None => CaseStore::in_memory(),
    };
    let mut state = AppState::new(model, store, Arc::new(SystemClock), config.ttl);
    if let Some(m) = secondary {
        state = state.with_secondary(m);
    }
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, model = %state.model.id, "listening");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
