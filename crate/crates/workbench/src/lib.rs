//! The counterfactual workbench service: a single-corpus HTTP session over
//! `dcc-core`, with draft persistence, suite export and evaluation.

pub mod api;
pub mod clients;
pub mod config;
pub mod session;

pub use api::router;
pub use config::WorkbenchConfig;
pub use session::{Services, Workbench, WorkbenchError};

use std::sync::Arc;

use dcc_core::drafts::DraftStore;
use dcc_core::Corpus;

/// Builds the session services from the configured targets.
pub fn services_from_config(config: &WorkbenchConfig) -> Result<Services, WorkbenchError> {
    let completion =
        clients::completion_service_for(&config.suggestion).map_err(WorkbenchError::Setup)?;
    let scorers =
        clients::checkpoint_scorers(&config.scorers.checkpoints).map_err(WorkbenchError::Setup)?;
    let evaluation = config
        .scorers
        .evaluation
        .as_deref()
        .map(clients::scorer_for)
        .transpose()
        .map_err(WorkbenchError::Setup)?;
    Ok(Services {
        completion,
        scorers,
        evaluation,
    })
}

/// A workbench whose drafts persist in the configured event log.
pub fn open_workbench(
    corpus: Corpus,
    config: WorkbenchConfig,
) -> Result<Arc<Workbench>, WorkbenchError> {
    let services = services_from_config(&config)?;
    let store = DraftStore::open(&config.server.event_log)?;
    Ok(Arc::new(Workbench::new(corpus, config, services, store)?))
}
