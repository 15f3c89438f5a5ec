//! HTTP service around the incident pipeline, plus the command line front end.

pub mod app;
pub mod commands;
pub mod config;
pub mod prefs;

use thiserror::Error;

pub use app::{build_state, router, spawn, AppState, RunningServer};
pub use config::{ContactEntry, Contacts, ServiceConfig};
pub use prefs::{PreferenceStore, UserPreferences};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] flarewatch_core::pipeline::PipelineError),
    #[error(transparent)]
    Store(#[from] flarewatch_core::store::StoreError),
    #[error(transparent)]
    Dataset(#[from] flarewatch_core::dataset::DatasetError),
    #[error(transparent)]
    Eval(#[from] flarewatch_core::evaluate::EvalError),
    #[error(transparent)]
    Classify(#[from] flarewatch_core::classify::ClassifyError),
    #[error(transparent)]
    Preprocess(#[from] flarewatch_core::preprocess::PreprocessError),
    #[error(transparent)]
    Feature(#[from] flarewatch_core::features::FeatureError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
