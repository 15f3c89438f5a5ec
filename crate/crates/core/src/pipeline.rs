//! The live path: keyword filter → sanitize → two-stage classify → geo → incident.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use crate::classify::{two_stage_classify, ClassifyError, TrainedStage, EMERGENCY, NON_EMERGENCY};
use crate::geo::{resolve_location, BoundingBox, GeoError, GeoPoint, GeoSource, Gazetteer, Geocoder};
use crate::post::RawPost;
use crate::preprocess::{sanitize, Dictionary, NormalizationMap, PreprocessError};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;
pub const STAGE1_MODEL: &str = "stage1";
pub const STAGE2_MODEL: &str = "stage2";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("filter list is empty")]
    EmptyFilterList,
    #[error("invalid context: {0}")]
    Context(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("incident sink: {0}")]
    Sink(#[source] Box<dyn std::error::Error + Send + Sync>),
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Ordered, deduplicated lowercase keyword phrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterList {
    phrases: Vec<String>,
    split: Vec<Vec<String>>,
}

impl FilterList {
    pub fn new<I, S>(phrases: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = FilterList {
            phrases: Vec::new(),
            split: Vec::new(),
        };
        for p in phrases {
            let w = words(p.as_ref());
            if w.is_empty() {
                continue;
            }
            let joined = w.join(" ");
            if !out.phrases.contains(&joined) {
                out.phrases.push(joined);
                out.split.push(w);
            }
        }
        if out.phrases.is_empty() {
            return Err(PipelineError::EmptyFilterList);
        }
        Ok(out)
    }

    /// One phrase per line; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    /// First phrase matching whole words of `text`.
    pub fn first_match(&self, text: &str) -> Option<&str> {
        let toks = words(text);
        self.split
            .iter()
            .position(|p| toks.windows(p.len()).any(|w| w == p.as_slice()))
            .map(|i| self.phrases[i].as_str())
    }
}

pub fn keyword_filter(post: &RawPost, filters: &FilterList) -> bool {
    filters.first_match(&post.text).is_some()
}

/// Where `detected_at` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    /// Wall clock, never earlier than the post timestamp.
    #[default]
    System,
    /// The post's own timestamp; makes replays reproducible.
    PostTime,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn detected_at(&self, post: &RawPost) -> DateTime<Utc> {
        let now = match self {
            Clock::System => Utc::now(),
            Clock::PostTime => post.timestamp,
            Clock::Fixed(t) => *t,
        };
        now.max(post.timestamp)
    }
}

/// Everything a post needs on its way to an incident. Immutable once built.
pub struct PipelineContext {
    pub dictionary: Dictionary,
    pub normalization: NormalizationMap,
    pub stage1: TrainedStage,
    pub stage2: TrainedStage,
    pub gazetteer: Gazetteer,
    pub geocoder: Option<Box<dyn Geocoder>>,
    pub filters: FilterList,
    pub bbox: BoundingBox,
    pub categories: Vec<String>,
    pub clock: Clock,
}

impl fmt::Debug for PipelineContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PipelineContext")
            .field("dictionary", &self.dictionary.len())
            .field("normalization", &self.normalization.len())
            .field("gazetteer", &self.gazetteer.len())
            .field("filters", &self.filters.phrases())
            .field("bbox", &self.bbox)
            .field("categories", &self.categories)
            .field("clock", &self.clock)
            .finish_non_exhaustive()
    }
}

/// File locations for [`PipelineContext::load`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContextPaths {
    pub dictionary: PathBuf,
    pub normalization: PathBuf,
    pub gazetteer: PathBuf,
    pub filters: PathBuf,
    pub models_dir: PathBuf,
}

impl PipelineContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dictionary: Dictionary,
        normalization: NormalizationMap,
        stage1: TrainedStage,
        stage2: TrainedStage,
        gazetteer: Gazetteer,
        filters: FilterList,
        bbox: BoundingBox,
        categories: Vec<String>,
    ) -> Result<Self, PipelineError> {
        bbox.validate()?;
        let s1 = stage1.model().classes();
        if s1 != [EMERGENCY, NON_EMERGENCY] {
            return Err(PipelineError::Context(format!(
                "stage 1 classes must be [{EMERGENCY}, {NON_EMERGENCY}], found {s1:?}"
            )));
        }
        if let Some(c) = stage2.model().classes().iter().find(|c| !categories.contains(c)) {
            return Err(PipelineError::Context(format!("stage 2 predicts unconfigured category {c:?}")));
        }
        Ok(Self {
            dictionary,
            normalization,
            stage1,
            stage2,
            gazetteer,
            geocoder: None,
            filters,
            bbox,
            categories,
            clock: Clock::System,
        })
    }

    pub fn load(paths: &ContextPaths, bbox: BoundingBox, categories: Vec<String>) -> Result<Self, PipelineError> {
        Self::new(
            Dictionary::load(&paths.dictionary)?,
            NormalizationMap::load(&paths.normalization)?,
            TrainedStage::load(&paths.models_dir, STAGE1_MODEL)?,
            TrainedStage::load(&paths.models_dir, STAGE2_MODEL)?,
            Gazetteer::load(&paths.gazetteer)?,
            FilterList::load(&paths.filters)?,
            bbox,
            categories,
        )
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_geocoder(mut self, geocoder: Box<dyn Geocoder>) -> Self {
        self.geocoder = Some(geocoder);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentScores {
    /// Posterior of the emergency class.
    pub stage1: f64,
    /// Posterior of every category.
    pub stage2: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub id: String,
    pub source_id: String,
    pub category: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub geo_source: Option<GeoSource>,
    pub place_name: Option<String>,
    pub out_of_area: bool,
    pub sanitized_text: String,
    pub raw_text: String,
    pub detected_at: DateTime<Utc>,
    pub scores: IncidentScores,
}

impl Incident {
    pub fn geo(&self) -> Option<GeoPoint> {
        Some(GeoPoint {
            lat: self.lat?,
            lon: self.lon?,
            source: self.geo_source?,
            place_name: self.place_name.clone(),
        })
    }
}

/// First 16 hex digits of SHA-256 over the source id and category.
pub fn incident_id(source_id: &str, category: &str) -> String {
    let mut h = Sha256::new();
    h.update(source_id.as_bytes());
    h.update([0u8]);
    h.update(category.as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Filter,
    Stage1,
    EmptyAfterCleaning,
    Malformed,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Incident(Box<Incident>),
    Dropped(DropReason),
}

impl Outcome {
    pub fn incident(self) -> Option<Incident> {
        match self {
            Outcome::Incident(i) => Some(*i),
            Outcome::Dropped(_) => None,
        }
    }
}

/// Runs one post through the live path.
///
/// A geocoder failure is logged and leaves the incident without a location.
pub fn process_post(post: &RawPost, ctx: &PipelineContext) -> Result<Outcome, PipelineError> {
    if !keyword_filter(post, &ctx.filters) {
        debug!(post = %post.id, reason = "filter", "dropped");
        return Ok(Outcome::Dropped(DropReason::Filter));
    }
    let sanitized = match sanitize(post, &ctx.dictionary, &ctx.normalization) {
        Ok(s) => s,
        Err(PreprocessError::EmptyAfterCleaning) => {
            debug!(post = %post.id, reason = "empty-after-cleaning", "dropped");
            return Ok(Outcome::Dropped(DropReason::EmptyAfterCleaning));
        }
        Err(e) => return Err(e.into()),
    };
    let Some(outcome) = two_stage_classify(&sanitized.tokens, &ctx.stage1, &ctx.stage2)? else {
        debug!(post = %post.id, reason = "stage1", "dropped");
        return Ok(Outcome::Dropped(DropReason::Stage1));
    };
    let geo = match resolve_location(post, &sanitized, &ctx.gazetteer, ctx.geocoder.as_deref()) {
        Ok(g) => g,
        Err(e) => {
            warn!(post = %post.id, error = %e, "geocoder failed, incident kept without location");
            None
        }
    };
    let out_of_area = geo.as_ref().is_some_and(|g| !ctx.bbox.contains(g.lat, g.lon));
    let stage1_posterior = outcome
        .stage1
        .posteriors_by_class()
        .into_iter()
        .find(|(c, _)| c == EMERGENCY)
        .map_or(0.0, |(_, p)| p);
    let stage2 = outcome.stage2.posteriors_by_class().into_iter().collect();
    let incident = Incident {
        id: incident_id(&post.id, &outcome.category),
        source_id: post.id.clone(),
        category: outcome.category,
        lat: geo.as_ref().map(|g| g.lat),
        lon: geo.as_ref().map(|g| g.lon),
        geo_source: geo.as_ref().map(|g| g.source),
        place_name: geo.and_then(|g| g.place_name),
        out_of_area,
        sanitized_text: sanitized.text(),
        raw_text: post.text.clone(),
        detected_at: ctx.clock.detected_at(post),
        scores: IncidentScores {
            stage1: stage1_posterior,
            stage2,
        },
    };
    Ok(Outcome::Incident(Box::new(incident)))
}

/// Per-run counters. Every ingested record lands in exactly one bucket.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub ingested: u64,
    pub filtered_out: u64,
    pub stage1_rejected: u64,
    pub empty_dropped: u64,
    pub malformed: u64,
    pub duplicates: u64,
    pub incidents: u64,
    pub max_latency_ms: f64,
}

impl StreamSummary {
    pub fn is_conserved(&self) -> bool {
        self.ingested
            == self.filtered_out
                + self.stage1_rejected
                + self.empty_dropped
                + self.malformed
                + self.duplicates
                + self.incidents
    }

    fn count(&mut self, reason: DropReason) {
        match reason {
            DropReason::Filter => self.filtered_out += 1,
            DropReason::Stage1 => self.stage1_rejected += 1,
            DropReason::EmptyAfterCleaning => self.empty_dropped += 1,
            DropReason::Malformed => self.malformed += 1,
            DropReason::Duplicate => self.duplicates += 1,
        }
    }
}

/// Receives incidents in ingestion order.
pub trait IncidentSink {
    fn deliver(&mut self, incident: &Incident) -> Result<(), PipelineError>;
}

impl IncidentSink for Vec<Incident> {
    fn deliver(&mut self, incident: &Incident) -> Result<(), PipelineError> {
        self.push(incident.clone());
        Ok(())
    }
}

/// Adapts a closure into a sink.
pub struct FnSink<F>(pub F);

impl<F> IncidentSink for FnSink<F>
where
    F: FnMut(&Incident) -> Result<(), PipelineError>,
{
    fn deliver(&mut self, incident: &Incident) -> Result<(), PipelineError> {
        (self.0)(incident)
    }
}

/// A source item: a parsed post or the reason a record was unusable.
pub type SourceRecord = Result<RawPost, String>;

/// JSON Lines post source over any reader, optionally throttled.
pub struct JsonLinesSource<R> {
    lines: std::io::Lines<R>,
    rate: Option<f64>,
    started: Option<Instant>,
    emitted: u64,
    line_no: usize,
}

impl<R: BufRead> JsonLinesSource<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            rate: None,
            started: None,
            emitted: 0,
            line_no: 0,
        }
    }

    /// Caps emission at `posts_per_second`; non-positive rates mean unthrottled.
    pub fn with_rate(mut self, posts_per_second: Option<f64>) -> Self {
        self.rate = posts_per_second.filter(|r| *r > 0.0 && r.is_finite());
        self
    }

    fn throttle(&mut self) {
        let Some(rate) = self.rate else { return };
        let started = *self.started.get_or_insert_with(Instant::now);
        let due = started + Duration::from_secs_f64(self.emitted as f64 / rate);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
    }
}

impl<R: BufRead> Iterator for JsonLinesSource<R> {
    type Item = SourceRecord;

    fn next(&mut self) -> Option<SourceRecord> {
        loop {
            self.line_no += 1;
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(format!("line {}: {e}", self.line_no))),
            };
            if line.trim().is_empty() {
                continue;
            }
            self.throttle();
            self.emitted += 1;
            let post = RawPost::from_json_line(&line).and_then(|p| {
                p.validate().map_err(|e| e.to_string())?;
                Ok(p)
            });
            return Some(post.map_err(|e| format!("line {}: {e}", self.line_no)));
        }
    }
}

pub fn replay_file(
    path: impl AsRef<Path>,
    rate: Option<f64>,
) -> Result<JsonLinesSource<std::io::BufReader<std::fs::File>>, PipelineError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(JsonLinesSource::new(std::io::BufReader::new(file)).with_rate(rate))
}

pub fn tcp_source(
    addr: impl std::net::ToSocketAddrs + fmt::Display,
) -> Result<JsonLinesSource<std::io::BufReader<std::net::TcpStream>>, PipelineError> {
    let label = addr.to_string();
    let stream = std::net::TcpStream::connect(addr).map_err(|source| PipelineError::Io {
        path: PathBuf::from(label),
        source,
    })?;
    Ok(JsonLinesSource::new(std::io::BufReader::new(stream)))
}

/// Consumes `source` to exhaustion.
///
/// A reader thread feeds a bounded queue of `capacity` records, blocking
/// when it is full; this thread processes and delivers in arrival order.
/// Posts repeating an already-seen id are dropped as duplicates.
pub fn run_stream<I, K>(
    source: I,
    ctx: &PipelineContext,
    sink: &mut K,
    capacity: usize,
) -> Result<StreamSummary, PipelineError>
where
    I: IntoIterator<Item = SourceRecord>,
    I::IntoIter: Send,
    K: IncidentSink + ?Sized,
{
    let (tx, rx) = crossbeam_channel::bounded::<SourceRecord>(capacity.max(1));
    let source = source.into_iter();
    // `rx` moves into the scope body so an early error drops it and
    // unblocks the reader before the scope joins.
    thread::scope(|scope| {
        scope.spawn(move || {
            for record in source {
                if tx.send(record).is_err() {
                    break;
                }
            }
        });
        let rx = rx;
        let mut summary = StreamSummary::default();
        let mut seen: HashSet<String> = HashSet::new();
        for record in rx.iter() {
            summary.ingested += 1;
            let post = match record {
                Ok(p) => p,
                Err(e) => {
                    warn!(error = %e, "malformed record skipped");
                    summary.count(DropReason::Malformed);
                    continue;
                }
            };
            if !seen.insert(post.id.clone()) {
                debug!(post = %post.id, reason = "duplicate", "dropped");
                summary.count(DropReason::Duplicate);
                continue;
            }
            let started = Instant::now();
            let outcome = process_post(&post, ctx)?;
            let ms = started.elapsed().as_secs_f64() * 1e3;
            summary.max_latency_ms = summary.max_latency_ms.max(ms);
            match outcome {
                Outcome::Incident(incident) => {
                    sink.deliver(&incident)?;
                    summary.incidents += 1;
                }
                Outcome::Dropped(reason) => summary.count(reason),
            }
        }
        Ok(summary)
    })
}
