//! Cross validation, scoring, attribute ranking and synthetic corpora.

mod attributes;
mod cv;
mod folds;
mod metrics;
mod synth;

use thiserror::Error;

use crate::classify::ClassifyError;

pub use attributes::{entropy, export_wordcloud, information_gain, AttributeRanking, WordCloudEntry};
pub use cv::{cross_validate, ClassScores, CvConfig, EvalReport, FoldReport, FoldView};
pub use folds::{make_folds, FoldPlan};
pub use metrics::{f1, Averaging, ConfusionMatrix, Scores};
pub use synth::{default_categories, generate_synthetic_corpus, PlantedCategory, SynthSpec, PLACES};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("fold count must be at least 2, got {0}")]
    InvalidFolds(usize),
    #[error("{examples} examples cannot fill {k} folds")]
    TooFewExamples { examples: usize, k: usize },
    #[error("size mismatch: {docs} documents, {labels} labels, plan covers {plan}")]
    SizeMismatch { docs: usize, labels: usize, plan: usize },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}
