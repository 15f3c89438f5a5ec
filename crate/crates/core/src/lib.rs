//! Detection of urban emergencies in geo-tagged short posts.
//!
//! The crate is organised along the live path a post travels:
//!
//! * [`preprocess`] cleans, run-compresses, normalizes and spell-corrects text.
//! * [`features`] turns token sequences into sparse n-gram count vectors.
//! * [`classify`] holds the multinomial Naive Bayes and linear max-margin
//!   classifiers and the two-stage emergency/category decision.
//! * [`evaluate`] runs stratified cross validation, scores F1, ranks
//!   attributes by information gain and generates synthetic corpora.
//! * [`geo`] resolves incident locations and checks the monitored area.
//! * [`pipeline`] wires everything into keyword filter → classify → incident.
//! * [`store`] persists incidents in a checksummed append-only log.

pub mod classify;
pub mod dataset;
pub mod evaluate;
pub mod features;
pub mod geo;
pub mod pipeline;
pub mod post;
pub mod preprocess;
pub mod store;

pub use classify::{
    ClassifierModel, MaxMarginModel, NaiveBayesModel, OneVsRestModel, Prediction, TrainedStage,
};
pub use dataset::{Dataset, LabeledExample, Stage1Label};
pub use features::{FeatureVector, Vocabulary};
pub use geo::{BoundingBox, GeoPoint, GeoSource, Gazetteer};
pub use pipeline::{Incident, PipelineContext};
pub use post::RawPost;
pub use preprocess::{Dictionary, NormalizationMap, SanitizedPost};
pub use store::IncidentStore;
