use std::collections::VecDeque;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use crossbeam_channel::TrySendError;
use flarewatch_core::geo::BoundingBox;
use flarewatch_core::pipeline::{process_post, DropReason, Incident, Outcome, PipelineContext, StreamSummary};
use flarewatch_core::store::{IncidentQuery, IncidentStore};
use flarewatch_core::RawPost;
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;
use tracing::{error, info, warn};

use crate::config::{ContactEntry, Contacts, ServiceConfig};
use crate::prefs::{PreferenceStore, PreferencesError, PreferencesUpdate, UserPreferences};
use crate::ServerError;

/// Per-subscriber buffer before the oldest events are dropped.
pub const EVENT_BUFFER: usize = 1024;

/// An incident as published to live subscribers.
#[derive(Debug, Clone)]
pub struct Published {
    pub seq: usize,
    pub incident: Arc<Incident>,
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<IncidentStore>,
    pub contacts: Arc<Contacts>,
    pub prefs: Arc<PreferenceStore>,
    pub events: broadcast::Sender<Published>,
    pub ingest: crossbeam_channel::Sender<RawPost>,
    pub stats: Arc<Mutex<StreamSummary>>,
    pub wordcloud: Option<PathBuf>,
}

/// Starts the pipeline thread. It ends once every ingest sender is dropped.
pub fn spawn_worker(
    ctx: PipelineContext,
    store: Arc<IncidentStore>,
    events: broadcast::Sender<Published>,
    stats: Arc<Mutex<StreamSummary>>,
    capacity: usize,
) -> (crossbeam_channel::Sender<RawPost>, JoinHandle<()>) {
    let (tx, rx) = crossbeam_channel::bounded::<RawPost>(capacity);
    let handle = std::thread::Builder::new()
        .name("pipeline".into())
        .spawn(move || {
            let mut seen = std::collections::HashSet::new();
            for post in rx {
                let started = std::time::Instant::now();
                let outcome = if seen.insert(post.id.clone()) {
                    process_post(&post, &ctx)
                } else {
                    Ok(Outcome::Dropped(DropReason::Duplicate))
                };
                let mut published = None;
                // Posts that error out are booked as malformed so the totals balance.
                let dropped = match outcome {
                    Ok(Outcome::Incident(incident)) => match store.append(&incident) {
                        Ok(ack) => {
                            if !ack.duplicate {
                                published = Some((ack.seq, incident));
                            }
                            None
                        }
                        Err(e) => {
                            error!(post = %post.id, error = %e, "incident not stored");
                            Some(DropReason::Malformed)
                        }
                    },
                    Ok(Outcome::Dropped(reason)) => Some(reason),
                    Err(e) => {
                        warn!(post = %post.id, error = %e, "post failed");
                        Some(DropReason::Malformed)
                    }
                };
                {
                    let mut s = stats.lock().unwrap_or_else(|e| e.into_inner());
                    s.ingested += 1;
                    s.max_latency_ms = s.max_latency_ms.max(started.elapsed().as_secs_f64() * 1e3);
                    match dropped {
                        None => s.incidents += 1,
                        Some(DropReason::Filter) => s.filtered_out += 1,
                        Some(DropReason::Stage1) => s.stage1_rejected += 1,
                        Some(DropReason::EmptyAfterCleaning) => s.empty_dropped += 1,
                        Some(DropReason::Malformed) => s.malformed += 1,
                        Some(DropReason::Duplicate) => s.duplicates += 1,
                    }
                }
                if let Some((seq, incident)) = published {
                    let _ = events.send(Published {
                        seq,
                        incident: Arc::new(*incident),
                    });
                }
            }
            info!("pipeline worker stopped");
        })
        .expect("spawn pipeline thread");
    (tx, handle)
}

/// Loads everything named by `cfg` and starts the pipeline worker.
pub fn build_state(cfg: &ServiceConfig) -> Result<(AppState, JoinHandle<()>), ServerError> {
    let contacts = Contacts::load(&cfg.contacts)?;
    let ctx = cfg.pipeline_context(&contacts)?;
    std::fs::create_dir_all(&cfg.data_dir).map_err(|e| ServerError::Config(format!("{}: {e}", cfg.data_dir.display())))?;
    let (store, report) = IncidentStore::open(cfg.incidents_log())?;
    if report.torn_discarded > 0 {
        warn!(discarded = report.torn_discarded, "torn incident records discarded");
    }
    let prefs = PreferenceStore::open(cfg.preferences_log(), contacts.categories.clone())?;
    let store = Arc::new(store);
    let (events, _) = broadcast::channel(EVENT_BUFFER);
    let stats = Arc::new(Mutex::new(StreamSummary::default()));
    let (ingest, worker) = spawn_worker(ctx, store.clone(), events.clone(), stats.clone(), cfg.queue_capacity);
    Ok((
        AppState {
            store,
            contacts: Arc::new(contacts),
            prefs: Arc::new(prefs),
            events,
            ingest,
            stats,
            wordcloud: cfg.wordcloud.clone(),
        },
        worker,
    ))
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/posts", post(ingest_post))
        .route("/api/incidents", get(list_incidents))
        .route("/api/incidents/{id}", get(get_incident))
        .route("/api/stream", get(event_stream))
        .route("/api/contacts", get(list_contacts))
        .route("/api/categories", get(list_categories))
        .route("/api/preferences/{user}", get(get_preferences).put(put_preferences))
        .route("/api/wordcloud", get(wordcloud))
        .route("/healthz", get(healthz))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// A bound, running server.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: AppState,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl RunningServer {
    /// Stops accepting connections; open event streams are cut after a grace period.
    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let abort = self.task.abort_handle();
        if tokio::time::timeout(std::time::Duration::from_secs(2), &mut self.task).await.is_err() {
            abort.abort();
        }
    }
}

/// Binds `addr` (port 0 picks a free one) and serves in the background.
pub async fn spawn(cfg: &ServiceConfig, addr: SocketAddr) -> Result<RunningServer, ServerError> {
    let (state, _worker) = build_state(cfg)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServerError::Config(format!("bind {addr}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| ServerError::Config(e.to_string()))?;
    let app = router(state.clone(), cfg.static_dir.clone());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let r = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
        if let Err(e) = r {
            error!(error = %e, "server stopped");
        }
    });
    Ok(RunningServer {
        addr,
        state,
        shutdown: Some(tx),
        task,
    })
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(msg: impl Into<String>) -> Self {
        Self(StatusCode::NOT_FOUND, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub id: String,
}

async fn ingest_post(State(st): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Accepted>), ApiError> {
    let post: RawPost = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    post.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let id = post.id.clone();
    match st.ingest.try_send(post) {
        Ok(()) => Ok((StatusCode::ACCEPTED, Json(Accepted { id }))),
        Err(TrySendError::Full(_)) => Err(ApiError(StatusCode::TOO_MANY_REQUESTS, "ingest queue full".into())),
        Err(TrySendError::Disconnected(_)) => {
            Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, "pipeline stopped".into()))
        }
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct IncidentParams {
    pub since: Option<String>,
    pub category: Option<String>,
    pub bbox: Option<String>,
    pub limit: Option<usize>,
}

fn parse_bbox(raw: Option<&str>) -> Result<Option<BoundingBox>, ApiError> {
    raw.map(|b| b.parse::<BoundingBox>().map_err(|e| ApiError::bad_request(e.to_string())))
        .transpose()
}

fn parse_since(raw: Option<&str>) -> Result<Option<DateTime<Utc>>, ApiError> {
    raw.map(|s| {
        DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| ApiError::bad_request(format!("since: {e}")))
    })
    .transpose()
}

async fn list_incidents(
    State(st): State<AppState>,
    Query(p): Query<IncidentParams>,
) -> Result<Json<Vec<Incident>>, ApiError> {
    let q = IncidentQuery {
        since: parse_since(p.since.as_deref())?,
        category: p.category,
        bbox: parse_bbox(p.bbox.as_deref())?,
        limit: p.limit,
    };
    Ok(Json(st.store.query(&q)))
}

async fn get_incident(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Incident>, ApiError> {
    st.store
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no incident {id}")))
}

#[derive(Debug, Default, Deserialize)]
pub struct ContactParams {
    pub category: Option<String>,
}

async fn list_contacts(
    State(st): State<AppState>,
    Query(p): Query<ContactParams>,
) -> Result<Json<Vec<ContactEntry>>, ApiError> {
    match p.category {
        None => Ok(Json(st.contacts.all())),
        Some(c) => st
            .contacts
            .for_category(&c)
            .map(|list| Json(list.to_vec()))
            .ok_or_else(|| ApiError::not_found(format!("unknown category {c:?}"))),
    }
}

async fn list_categories(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "version": st.contacts.version, "categories": st.contacts.categories }))
}

async fn get_preferences(State(st): State<AppState>, Path(user): Path<String>) -> Json<UserPreferences> {
    Json(st.prefs.get(&user))
}

async fn put_preferences(
    State(st): State<AppState>,
    Path(user): Path<String>,
    body: Bytes,
) -> Result<Json<UserPreferences>, ApiError> {
    let update: PreferencesUpdate = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let prefs = st.prefs.clone();
    let result = tokio::task::spawn_blocking(move || prefs.update(&user, update))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match result {
        Ok(p) => Ok(Json(p)),
        Err(PreferencesError::Invalid(m)) => Err(ApiError::bad_request(m)),
        Err(PreferencesError::Store(e)) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

async fn wordcloud(State(st): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let path = st.wordcloud.as_ref().ok_or_else(|| ApiError::not_found("no word cloud configured"))?;
    let text = tokio::fs::read_to_string(path)
        .await
        .map_err(|e| ApiError::not_found(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(value))
}

async fn healthz(State(st): State<AppState>) -> Json<serde_json::Value> {
    let summary = st.stats.lock().unwrap_or_else(|e| e.into_inner()).clone();
    Json(json!({
        "status": "ok",
        "incidents": st.store.len(),
        "queued": st.ingest.len(),
        "summary": summary,
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct StreamParams {
    pub category: Option<String>,
    pub bbox: Option<String>,
    pub user: Option<String>,
    pub last_event_id: Option<String>,
}

/// What one live connection wants to see.
#[derive(Debug, Clone)]
struct Subscription {
    category: Option<String>,
    bbox: Option<BoundingBox>,
    prefs: Option<UserPreferences>,
}

impl Subscription {
    fn wants(&self, i: &Incident) -> bool {
        if self.category.as_ref().is_some_and(|c| c != &i.category) {
            return false;
        }
        if let Some(b) = &self.bbox {
            if !matches!((i.lat, i.lon), (Some(lat), Some(lon)) if b.contains(lat, lon)) {
                return false;
            }
        }
        self.prefs.as_ref().is_none_or(|p| p.wants(i))
    }
}

/// Payload of an `incident` event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncidentEvent {
    pub incident: Incident,
    pub contacts: Vec<ContactEntry>,
}

fn incident_event(contacts: &Contacts, incident: &Incident) -> Event {
    let payload = IncidentEvent {
        incident: incident.clone(),
        contacts: contacts.for_category(&incident.category).unwrap_or_default().to_vec(),
    };
    Event::default()
        .event("incident")
        .id(incident.id.clone())
        .json_data(&payload)
        .unwrap_or_else(|_| Event::default().event("error").data("encoding failed"))
}

struct StreamState {
    replay: VecDeque<Incident>,
    rx: broadcast::Receiver<Published>,
    sub: Subscription,
    contacts: Arc<Contacts>,
    /// Live events at or below this append position were already replayed.
    replayed_through: Option<usize>,
}

async fn event_stream(
    State(st): State<AppState>,
    Query(p): Query<StreamParams>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    if let Some(c) = &p.category {
        if !st.contacts.is_category(c) {
            return Err(ApiError::bad_request(format!("unknown category {c:?}")));
        }
    }
    let sub = Subscription {
        category: p.category.clone(),
        bbox: parse_bbox(p.bbox.as_deref())?,
        prefs: p.user.as_deref().map(|u| st.prefs.get(u)),
    };
    // Subscribe before reading the log so nothing falls between the two.
    let rx = st.events.subscribe();
    let last_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or(p.last_event_id);
    let (replay, replayed_through) = match last_id.as_deref().and_then(|id| st.store.seq_of(id).map(|s| (id, s))) {
        Some((id, seq)) => {
            let missed = st.store.after(id).unwrap_or_default();
            let through = seq + missed.len();
            (missed.into_iter().collect(), Some(through))
        }
        None => (VecDeque::new(), None),
    };
    let state = StreamState {
        replay,
        rx,
        sub,
        contacts: st.contacts.clone(),
        replayed_through,
    };
    let events = stream::unfold(state, |mut s| async move {
        while let Some(i) = s.replay.pop_front() {
            if s.sub.wants(&i) {
                let ev = incident_event(&s.contacts, &i);
                return Some((Ok(ev), s));
            }
        }
        loop {
            match s.rx.recv().await {
                Ok(p) => {
                    if s.replayed_through.is_some_and(|t| p.seq <= t) || !s.sub.wants(&p.incident) {
                        continue;
                    }
                    let ev = incident_event(&s.contacts, &p.incident);
                    return Some((Ok(ev), s));
                }
                Err(broadcast::error::RecvError::Lagged(missed)) => {
                    let ev = Event::default().event("gap").data(json!({ "missed": missed }).to_string());
                    return Some((Ok(ev), s));
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}
