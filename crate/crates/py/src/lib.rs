//! Python bindings: preprocessing, evaluation, the live pipeline and the
//! incident log. Structured values cross the boundary as plain dicts.

use std::fmt::Display;
use std::io::Cursor;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use flarewatch_core::classify::{ClassifierSpec, MarginParams, EMERGENCY};
use flarewatch_core::evaluate::{self, CvConfig, SynthSpec};
use flarewatch_core::features::FeatureConfig;
use flarewatch_core::pipeline::{self, Clock, ContextPaths, JsonLinesSource, Outcome, DEFAULT_QUEUE_CAPACITY};
use flarewatch_core::preprocess;
use flarewatch_core::store::IncidentQuery;
use flarewatch_core::{BoundingBox, Incident, PipelineContext, RawPost, Vocabulary};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(flarewatch, FlarewatchError, PyException);

fn err(e: impl Display) -> PyErr {
    FlarewatchError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_time(raw: Option<&str>) -> PyResult<Option<DateTime<Utc>>> {
    raw.map(|s| {
        DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| PyValueError::new_err(format!("{s:?}: {e}")))
    })
    .transpose()
}

fn classifier_spec(name: &str) -> PyResult<ClassifierSpec> {
    match name {
        "svm" => Ok(ClassifierSpec::MaxMargin(MarginParams::default())),
        "nb" => Ok(ClassifierSpec::NaiveBayes { alpha: 1.0 }),
        other => Err(PyValueError::new_err(format!("classifier must be 'svm' or 'nb', got {other:?}"))),
    }
}

fn feature_config(ngram: usize) -> PyResult<FeatureConfig> {
    match ngram {
        1 => Ok(FeatureConfig::unigrams()),
        3 => Ok(FeatureConfig::trigrams()),
        n => Err(PyValueError::new_err(format!("ngram must be 1 or 3, got {n}"))),
    }
}

/// Word frequency list used by compression and spelling.
#[pyclass(name = "Dictionary", frozen)]
struct PyDictionary(preprocess::Dictionary);

#[pymethods]
impl PyDictionary {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        preprocess::Dictionary::load(path).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_words(words: Vec<String>) -> Self {
        Self(preprocess::Dictionary::from_words(words))
    }

    fn frequency(&self, word: &str) -> u64 {
        self.0.frequency(word)
    }

    fn __contains__(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "NormalizationMap", frozen)]
struct PyNormalizationMap(preprocess::NormalizationMap);

#[pymethods]
impl PyNormalizationMap {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        preprocess::NormalizationMap::load(path).map(Self).map_err(err)
    }

    /// `text` in the TSV format of the bundled table.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        preprocess::NormalizationMap::parse(text).map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
fn clean(text: &str) -> String {
    preprocess::clean(text)
}

#[pyfunction]
fn tokenize(cleaned: &str) -> Vec<String> {
    preprocess::tokenize(cleaned)
}

#[pyfunction]
fn compress_token(token: &str, dictionary: &PyDictionary) -> String {
    preprocess::compress_token(token, &dictionary.0)
}

#[pyfunction]
fn normalize_tokens(tokens: Vec<String>, normalization: &PyNormalizationMap, dictionary: &PyDictionary) -> Vec<String> {
    preprocess::normalize_tokens(&tokens, &normalization.0, &dictionary.0)
}

#[pyfunction]
fn spell_correct(tokens: Vec<String>, dictionary: &PyDictionary) -> Vec<String> {
    preprocess::spell_correct(&tokens, &dictionary.0)
}

/// All four stages; returns `{"tokens": [...], "stages": [...]}`.
#[pyfunction]
fn sanitize<'py>(
    py: Python<'py>,
    text: &str,
    dictionary: &PyDictionary,
    normalization: &PyNormalizationMap,
) -> PyResult<Bound<'py, PyAny>> {
    let s = preprocess::sanitize_text("python", text, &dictionary.0, &normalization.0).map_err(err)?;
    to_py(py, &serde_json::json!({ "tokens": s.tokens, "stages": s.stage_log }))
}

#[pyfunction]
fn incident_id(source_id: &str, category: &str) -> String {
    pipeline::incident_id(source_id, category)
}

#[pyclass(name = "BoundingBox", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyBoundingBox(BoundingBox);

#[pymethods]
impl PyBoundingBox {
    #[new]
    fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> PyResult<Self> {
        BoundingBox::new(min_lat, min_lon, max_lat, max_lon).map(Self).map_err(err)
    }

    #[staticmethod]
    fn mumbai() -> Self {
        Self(BoundingBox::MUMBAI)
    }

    fn contains(&self, lat: f64, lon: f64) -> bool {
        self.0.contains(lat, lon)
    }

    fn center(&self) -> (f64, f64) {
        self.0.center()
    }

    fn __repr__(&self) -> String {
        format!("BoundingBox({})", self.0)
    }
}

/// Synthetic labeled corpus as a list of dicts.
#[pyfunction]
#[pyo3(signature = (size = 3200, positives = 1313, noise = 0.0, seed = 7))]
fn synthetic_corpus(py: Python<'_>, size: usize, positives: usize, noise: f64, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let spec = SynthSpec::default().with_size(size, positives).with_noise(noise).with_seed(seed);
    let data = evaluate::generate_synthetic_corpus(&spec).map_err(err)?;
    to_py(py, &data.examples)
}

/// Stratified k-fold evaluation; returns the pooled report as a dict.
#[pyfunction]
#[pyo3(signature = (docs, labels, classes, classifier = "svm", ngram = 1, folds = 10, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn cross_validate<'py>(
    py: Python<'py>,
    docs: Vec<Vec<String>>,
    labels: Vec<usize>,
    classes: Vec<String>,
    classifier: &str,
    ngram: usize,
    folds: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = CvConfig {
        features: feature_config(ngram)?,
        classifier: classifier_spec(classifier)?,
    };
    let report = py
        .detach(|| {
            let plan = evaluate::make_folds(&labels, classes.len(), folds, seed)?;
            evaluate::cross_validate(&docs, &labels, &classes, &config, &plan, None)
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Terms ranked by information gain in bits, best first.
#[pyfunction]
#[pyo3(signature = (docs, labels, n_classes = None))]
fn information_gain(docs: Vec<Vec<String>>, labels: Vec<usize>, n_classes: Option<usize>) -> PyResult<Vec<(String, f64)>> {
    let vocab = Vocabulary::fit(&docs, FeatureConfig::unigrams()).map_err(err)?;
    let k = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Ok(evaluate::information_gain(&docs, &labels, k, &vocab).entries)
}

/// Filter, preprocessing, both classifiers and geolocation over bundled data.
#[pyclass(name = "Pipeline", frozen)]
struct PyPipeline(PipelineContext);

#[pymethods]
impl PyPipeline {
    /// Loads tables and models laid out like the bundled `data/` directory.
    #[new]
    #[pyo3(signature = (data_dir, categories, bbox = None, post_time = false))]
    fn new(data_dir: PathBuf, categories: Vec<String>, bbox: Option<PyBoundingBox>, post_time: bool) -> PyResult<Self> {
        let paths = ContextPaths {
            dictionary: data_dir.join("dictionary.tsv"),
            normalization: data_dir.join("normalization.tsv"),
            gazetteer: data_dir.join("gazetteer.tsv"),
            filters: data_dir.join("filters.txt"),
            models_dir: data_dir.join("models"),
        };
        let bbox = bbox.map_or(BoundingBox::MUMBAI, |b| b.0);
        let mut ctx = PipelineContext::load(&paths, bbox, categories).map_err(err)?;
        if post_time {
            ctx = ctx.with_clock(Clock::PostTime);
        }
        Ok(Self(ctx))
    }

    /// Both stages on free text, bypassing the keyword filter.
    fn classify<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        let ctx = &self.0;
        let s = preprocess::sanitize_text("python", text, &ctx.dictionary, &ctx.normalization).map_err(err)?;
        let first = ctx.stage1.classify(&s.tokens).map_err(err)?;
        let second = if first.label == EMERGENCY {
            Some(ctx.stage2.classify(&s.tokens).map_err(err)?)
        } else {
            None
        };
        to_py(
            py,
            &serde_json::json!({
                "tokens": s.tokens,
                "label": first.label,
                "stage1": first.posteriors_by_class(),
                "category": second.as_ref().map(|p| p.label.clone()),
                "stage2": second.map(|p| p.posteriors_by_class()),
            }),
        )
    }

    /// One post dict in; an incident dict or `None` out.
    fn process<'py>(&self, py: Python<'py>, post: &Bound<'py, PyAny>) -> PyResult<Option<Bound<'py, PyAny>>> {
        let post: RawPost = from_py(post)?;
        post.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        match py.detach(|| pipeline::process_post(&post, &self.0)).map_err(err)? {
            Outcome::Incident(i) => Ok(Some(to_py(py, &*i)?)),
            Outcome::Dropped(_) => Ok(None),
        }
    }

    /// Why `post` would be dropped, or `None` if it becomes an incident.
    fn drop_reason(&self, py: Python<'_>, post: &Bound<'_, PyAny>) -> PyResult<Option<String>> {
        let post: RawPost = from_py(post)?;
        match py.detach(|| pipeline::process_post(&post, &self.0)).map_err(err)? {
            Outcome::Incident(_) => Ok(None),
            Outcome::Dropped(r) => Ok(Some(serde_json::to_value(r).map_err(err)?.as_str().unwrap_or_default().to_string())),
        }
    }

    /// Runs JSON Lines text through the stream driver; returns (incidents, summary).
    fn replay<'py>(&self, py: Python<'py>, jsonl: String) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
        let mut out: Vec<Incident> = Vec::new();
        let summary = py
            .detach(|| pipeline::run_stream(JsonLinesSource::new(Cursor::new(jsonl)), &self.0, &mut out, DEFAULT_QUEUE_CAPACITY))
            .map_err(err)?;
        Ok((to_py(py, &out)?, to_py(py, &summary)?))
    }
}

/// Append-only, checksummed incident log.
#[pyclass(name = "IncidentStore", frozen)]
struct PyIncidentStore(flarewatch_core::IncidentStore);

#[pymethods]
impl PyIncidentStore {
    /// Opens or creates the log, discarding a torn final record.
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        flarewatch_core::IncidentStore::open(path).map(|(s, _)| Self(s)).map_err(err)
    }

    /// Returns `(seq, duplicate)`.
    fn append(&self, incident: &Bound<'_, PyAny>) -> PyResult<(usize, bool)> {
        let incident: Incident = from_py(incident)?;
        let ack = self.0.append(&incident).map_err(err)?;
        Ok((ack.seq, ack.duplicate))
    }

    fn get<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.0.get(id).map(|i| to_py(py, &i)).transpose()
    }

    /// Newest first. `since` is an RFC 3339 timestamp.
    #[pyo3(signature = (since = None, category = None, bbox = None, limit = None))]
    fn query<'py>(
        &self,
        py: Python<'py>,
        since: Option<&str>,
        category: Option<String>,
        bbox: Option<PyBoundingBox>,
        limit: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let q = IncidentQuery {
            since: parse_time(since)?,
            category,
            bbox: bbox.map(|b| b.0),
            limit,
        };
        to_py(py, &self.0.query(&q))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pymodule]
pub fn flarewatch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlarewatchError", m.py().get_type::<FlarewatchError>())?;
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyNormalizationMap>()?;
    m.add_class::<PyBoundingBox>()?;
    m.add_class::<PyPipeline>()?;
    m.add_class::<PyIncidentStore>()?;
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(compress_token, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(spell_correct, m)?)?;
    m.add_function(wrap_pyfunction!(sanitize, m)?)?;
    m.add_function(wrap_pyfunction!(incident_id, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(information_gain, m)?)?;
    Ok(())
}
