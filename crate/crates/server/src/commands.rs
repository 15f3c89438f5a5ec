//! Command implementations behind the `flarewatch` binary.

use std::io::Write;
use std::path::Path;

use flarewatch_core::classify::{ClassifierFamily, ClassifierSpec};
use flarewatch_core::dataset::{stage1_classes, Dataset};
use flarewatch_core::evaluate::{
    cross_validate, export_wordcloud, generate_synthetic_corpus, information_gain, make_folds, CvConfig, EvalReport,
    SynthSpec, WordCloudEntry,
};
use flarewatch_core::features::FeatureConfig;
use flarewatch_core::pipeline::{
    replay_file, run_stream, FnSink, PipelineContext, PipelineError, StreamSummary, DEFAULT_QUEUE_CAPACITY, STAGE1_MODEL,
    STAGE2_MODEL,
};
use flarewatch_core::preprocess::sanitize_text;
use flarewatch_core::store::IncidentStore;
use flarewatch_core::{Dictionary, NormalizationMap, Vocabulary};
use serde::Serialize;
use serde_json::json;

use crate::config::{Contacts, ServiceConfig};
use crate::ServerError;

pub const WORDCLOUD_FILE: &str = "wordcloud.json";
pub const WORDCLOUD_TOP_K: usize = 50;

/// Stage 1 works on unigrams, stage 2 on word trigrams.
pub fn stage_features(stage: u8) -> FeatureConfig {
    if stage == 1 {
        FeatureConfig::unigrams()
    } else {
        FeatureConfig::trigrams()
    }
}

pub fn load_tables(cfg: &ServiceConfig) -> Result<(Dictionary, NormalizationMap), ServerError> {
    Ok((Dictionary::load(&cfg.dictionary)?, NormalizationMap::load(&cfg.normalization)?))
}

/// A TSV corpus if given, else the synthetic corpus for `spec`.
pub fn load_corpus(data: Option<&Path>, spec: &SynthSpec) -> Result<Dataset, ServerError> {
    match data {
        Some(p) => Ok(Dataset::load(p)?),
        None => Ok(generate_synthetic_corpus(spec)?),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub examples: usize,
    pub emergencies: usize,
    pub stage1: String,
    pub stage1_vocab: usize,
    pub stage2: String,
    pub stage2_vocab: usize,
    pub wordcloud_terms: usize,
}

/// Trains both stages and writes them with the stage-1 word cloud into `out`.
pub fn train(
    cfg: &ServiceConfig,
    contacts: &Contacts,
    dataset: &Dataset,
    families: (ClassifierFamily, ClassifierFamily),
    out: &Path,
) -> Result<TrainSummary, ServerError> {
    dataset.validate(&contacts.categories)?;
    let (dict, map) = load_tables(cfg)?;
    let corpus = dataset.tokenize(&dict, &map);
    let (stage1, stage2) = corpus.train_stages(
        &contacts.categories,
        (stage_features(1), ClassifierSpec::default_for(families.0)),
        (stage_features(2), ClassifierSpec::default_for(families.1)),
    )?;
    std::fs::create_dir_all(out).map_err(|source| ServerError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    stage1.save(out, STAGE1_MODEL)?;
    stage2.save(out, STAGE2_MODEL)?;
    let cloud = wordcloud(&corpus.docs, &corpus.stage1)?;
    let path = out.join(WORDCLOUD_FILE);
    let text = serde_json::to_string_pretty(&cloud).expect("word cloud serializes");
    std::fs::write(&path, text + "\n").map_err(|source| ServerError::Io { path, source })?;
    Ok(TrainSummary {
        examples: dataset.len(),
        emergencies: corpus.stage1.iter().filter(|&&l| l == 0).count(),
        stage1: stage1.model().family_name().into(),
        stage1_vocab: stage1.vocab().len(),
        stage2: stage2.model().family_name().into(),
        stage2_vocab: stage2.vocab().len(),
        wordcloud_terms: cloud.len(),
    })
}

pub fn wordcloud(docs: &[Vec<String>], labels: &[usize]) -> Result<Vec<WordCloudEntry>, ServerError> {
    let vocab = Vocabulary::fit(docs, FeatureConfig::unigrams())?;
    let ranking = information_gain(docs, labels, 2, &vocab);
    Ok(export_wordcloud(&ranking, WORDCLOUD_TOP_K))
}

/// Stratified k-fold evaluation of one stage.
pub fn evaluate(
    cfg: &ServiceConfig,
    contacts: &Contacts,
    dataset: &Dataset,
    stage: u8,
    family: ClassifierFamily,
    folds: usize,
    seed: u64,
) -> Result<EvalReport, ServerError> {
    let (dict, map) = load_tables(cfg)?;
    let corpus = dataset.tokenize(&dict, &map);
    let (docs, labels, classes) = if stage == 1 {
        (corpus.docs, corpus.stage1, stage1_classes())
    } else {
        let (d, l) = corpus.stage2(&contacts.categories)?;
        (d, l, contacts.categories.clone())
    };
    let plan = make_folds(&labels, classes.len(), folds, seed)?;
    let config = CvConfig {
        features: stage_features(stage),
        classifier: ClassifierSpec::default_for(family),
    };
    Ok(cross_validate(&docs, &labels, &classes, &config, &plan, None)?)
}

/// Full trace of one text through the live path, ignoring the keyword filter.
pub fn classify_text(ctx: &PipelineContext, text: &str) -> Result<serde_json::Value, ServerError> {
    let sanitized = sanitize_text("cli", text, &ctx.dictionary, &ctx.normalization)?;
    let first = ctx.stage1.classify(&sanitized.tokens)?;
    let second = if first.label == flarewatch_core::classify::EMERGENCY {
        Some(ctx.stage2.classify(&sanitized.tokens)?)
    } else {
        None
    };
    Ok(json!({
        "text": text,
        "keyword": ctx.filters.first_match(text),
        "stages": sanitized.stage_log,
        "tokens": sanitized.tokens,
        "stage1": { "label": first.label, "posteriors": first.posteriors_by_class() },
        "category": second.as_ref().map(|p| p.label.clone()),
        "stage2": second.map(|p| p.posteriors_by_class()),
    }))
}

/// Runs a JSON Lines file through the pipeline into `store`, writing
/// `ack <incident id>` to `acks` after each durable append.
pub fn replay(
    ctx: &PipelineContext,
    store: &IncidentStore,
    file: &Path,
    rate: Option<f64>,
    acks: &mut dyn Write,
) -> Result<StreamSummary, ServerError> {
    let source = replay_file(file, rate)?;
    let mut sink = FnSink(|incident: &flarewatch_core::Incident| {
        store.append(incident).map_err(|e| PipelineError::Sink(Box::new(e)))?;
        writeln!(acks, "ack {}", incident.id)
            .and_then(|_| acks.flush())
            .map_err(|e| PipelineError::Sink(Box::new(e)))
    });
    Ok(run_stream(source, ctx, &mut sink, DEFAULT_QUEUE_CAPACITY)?)
}

/// Incidents produced by a replay file, without persistence.
pub fn replay_incidents(
    ctx: &PipelineContext,
    file: &Path,
) -> Result<(Vec<flarewatch_core::Incident>, StreamSummary), ServerError> {
    let mut out = Vec::new();
    let summary = run_stream(replay_file(file, None)?, ctx, &mut out, DEFAULT_QUEUE_CAPACITY)?;
    Ok((out, summary))
}
