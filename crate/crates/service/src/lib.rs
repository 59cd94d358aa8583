//! Study service: session store with an append-only event log, payment
//! codes, admin export, and the HTTP API over it.

pub mod api;
pub mod assign;
pub mod config;
pub mod error;
pub mod events;
pub mod harness;
pub mod payment;
pub mod state;

use std::sync::Arc;

use alienzoo_core::pipeline::TrainingRecipe;
use alienzoo_core::{GameEngine, GrowthModel};

pub use api::router;
pub use config::{Assignment, StudyConfig};
pub use error::ServiceError;
pub use events::{Event, EventRecord, EventSink, FileLog, MemoryLog};
pub use state::{Clock, ManualClock, StudyService, SystemClock};

/// Model from `model_path`, or trained from the default recipe.
pub fn load_model(config: &StudyConfig) -> Result<GrowthModel, ServiceError> {
    let model = match &config.model_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ServiceError::Config(format!("reading {}: {e}", path.display())))?;
            GrowthModel::from_json(&text)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?
        }
        None => TrainingRecipe::for_experiment(config.experiment, config.seed)
            .train()
            .map_err(|e| ServiceError::Config(format!("training model: {e}")))?,
    };
    if model.experiment() != config.experiment {
        return Err(ServiceError::Config(format!(
            "model was trained for {:?}, study is {:?}",
            model.experiment(),
            config.experiment
        )));
    }
    Ok(model)
}

pub fn load_engine(config: &StudyConfig) -> Result<GameEngine, ServiceError> {
    let model = load_model(config)?;
    Ok(GameEngine::new(
        Arc::new(model),
        config.cfe,
        config.timings,
    )?)
}

/// Open the data directory and restore state; the service logs there.
pub fn open_service(config: &StudyConfig) -> Result<StudyService, ServiceError> {
    config.validate()?;
    let engine = Arc::new(load_engine(config)?);
    StudyService::open(
        engine,
        &config.data_dir,
        config.assignment,
        config.seed,
        config.snapshot_every,
        Arc::new(SystemClock),
        config.admin_token.clone(),
    )
}

/// Serve until ctrl-c.
pub async fn serve(config: StudyConfig) -> Result<(), ServiceError> {
    let service = Arc::new(open_service(&config)?);
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
