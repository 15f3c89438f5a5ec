#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use flarewatch_core::RawPost;
use flarewatch_server::{RunningServer, ServiceConfig};
use serde_json::Value;
use tempfile::TempDir;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture_posts() -> Vec<RawPost> {
    let text = std::fs::read_to_string(data_dir().join("fixtures/stream.jsonl")).unwrap();
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

pub fn golden_incidents() -> Vec<Value> {
    let text = std::fs::read_to_string(data_dir().join("fixtures/golden_incidents.jsonl")).unwrap();
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Bundled contacts plus one category without any authority listed.
pub const EXTRA_CATEGORY: &str = "flood";

pub struct TestEnv {
    pub dir: TempDir,
    pub config_path: PathBuf,
    pub cfg: ServiceConfig,
}

pub fn test_env(queue_capacity: usize) -> TestEnv {
    let dir = tempfile::tempdir().unwrap();
    let data = data_dir().canonicalize().unwrap();
    let contacts = std::fs::read_to_string(data.join("contacts.toml"))
        .unwrap()
        .replace("\"drunk-driving\"]", &format!("\"drunk-driving\", \"{EXTRA_CATEGORY}\"]"));
    std::fs::write(dir.path().join("contacts.toml"), contacts).unwrap();
    let text = format!(
        r#"
port = 0
data_dir = "var"
contacts = "contacts.toml"
dictionary = "{d}/dictionary.tsv"
normalization = "{d}/normalization.tsv"
gazetteer = "{d}/gazetteer.tsv"
filters = "{d}/filters.txt"
models_dir = "{d}/models"
wordcloud = "{d}/models/wordcloud.json"
queue_capacity = {queue_capacity}
"#,
        d = data.display()
    );
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, &text).unwrap();
    let cfg = ServiceConfig::load(&config_path).unwrap();
    TestEnv { dir, config_path, cfg }
}

pub async fn start(env: &TestEnv) -> RunningServer {
    flarewatch_server::spawn(&env.cfg, SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap()
}

pub fn base(server: &RunningServer) -> String {
    format!("http://{}", server.addr)
}

/// Posts in order; returns how many were accepted. Invalid posts must get 400.
pub async fn post_all(client: &reqwest::Client, base: &str, posts: &[RawPost]) -> u64 {
    let mut accepted = 0;
    for p in posts {
        let r = client.post(format!("{base}/api/posts")).json(p).send().await.unwrap();
        let expected = if p.validate().is_ok() { 202 } else { 400 };
        assert_eq!(r.status(), expected, "{}", p.id);
        accepted += u64::from(expected == 202);
    }
    accepted
}

pub async fn health(client: &reqwest::Client, base: &str) -> Value {
    client.get(format!("{base}/healthz")).send().await.unwrap().json().await.unwrap()
}

/// Polls until the worker has taken in `n` posts.
pub async fn wait_ingested(client: &reqwest::Client, base: &str, n: u64) -> Value {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let h = health(client, base).await;
        if h["summary"]["ingested"].as_u64() == Some(n) {
            return h;
        }
        assert!(Instant::now() < deadline, "worker stalled: {h}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[derive(Debug, Clone)]
pub struct SseEvent {
    pub event: String,
    pub id: Option<String>,
    pub data: String,
}

impl SseEvent {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.data).unwrap()
    }
}

/// Minimal server-sent events reader over a streaming response.
pub struct SseClient {
    resp: reqwest::Response,
    buf: String,
}

impl SseClient {
    pub async fn connect(client: &reqwest::Client, url: &str, last_event_id: Option<&str>) -> Self {
        let mut req = client.get(url);
        if let Some(id) = last_event_id {
            req = req.header("Last-Event-ID", id);
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status(), 200, "{url}");
        Self { resp, buf: String::new() }
    }

    /// Next non-comment event, or `None` if nothing arrives within `wait`.
    pub async fn next(&mut self, wait: Duration) -> Option<SseEvent> {
        let deadline = tokio::time::Instant::now() + wait;
        loop {
            while let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                if let Some(ev) = parse_block(&block) {
                    return Some(ev);
                }
            }
            match tokio::time::timeout_at(deadline, self.resp.chunk()).await {
                Ok(Ok(Some(bytes))) => self.buf.push_str(&String::from_utf8_lossy(&bytes)),
                Ok(Ok(None)) | Ok(Err(_)) | Err(_) => return None,
            }
        }
    }

    /// Collects events until `n` arrived or `wait` passed without one.
    pub async fn collect(&mut self, n: usize, wait: Duration) -> Vec<SseEvent> {
        let mut out = Vec::new();
        while out.len() < n {
            match self.next(wait).await {
                Some(ev) => out.push(ev),
                None => break,
            }
        }
        out
    }
}

fn parse_block(block: &str) -> Option<SseEvent> {
    let mut event = String::from("message");
    let mut id = None;
    let mut data = Vec::new();
    let mut any = false;
    for line in block.lines() {
        if line.starts_with(':') || line.is_empty() {
            continue;
        }
        let (field, value) = line.split_once(':').unwrap_or((line, ""));
        let value = value.strip_prefix(' ').unwrap_or(value);
        any = true;
        match field {
            "event" => event = value.to_string(),
            "id" => id = Some(value.to_string()),
            "data" => data.push(value.to_string()),
            _ => {}
        }
    }
    any.then(|| SseEvent { event, id, data: data.join("\n") })
}

/// Compiles the named definition of the bundled API schema.
pub fn schema_for(def: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(repo_root().join("schema/api.schema.json")).unwrap();
    let mut schema: Value = serde_json::from_str(&text).unwrap();
    schema["$ref"] = Value::String(format!("#/$defs/{def}"));
    jsonschema::options().should_validate_formats(true).build(&schema).unwrap()
}

pub fn schema_errors(validator: &jsonschema::Validator, value: &Value) -> Vec<String> {
    validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}

/// An arbitrary but well-formed incident, including awkward text and missing geo.
pub fn random_incident<R: rand::Rng>(rng: &mut R, categories: &[String]) -> flarewatch_core::Incident {
    use flarewatch_core::geo::GeoSource;
    use flarewatch_core::pipeline::{incident_id, IncidentScores};
    const WORDS: &[&str] = &["help", "fire", "\"quoted\"", "tab\there", "line\nbreak", "मदद", "😀", "", "powai"];
    let source_id = format!("src-{}", rng.random::<u64>());
    let category = categories[rng.random_range(0..categories.len())].clone();
    let text: Vec<&str> = (0..rng.random_range(0..12)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let geo = rng.random_bool(0.8).then(|| {
        let source = [GeoSource::PostMetadata, GeoSource::Gazetteer, GeoSource::ExternalGeocoder][rng.random_range(0..3)];
        (rng.random_range(-90.0..=90.0), rng.random_range(-180.0..=180.0), source)
    });
    let mut weights: Vec<f64> = categories.iter().map(|_| rng.random::<f64>() + 1e-9).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    flarewatch_core::Incident {
        id: incident_id(&source_id, &category),
        source_id,
        category,
        lat: geo.map(|g| g.0),
        lon: geo.map(|g| g.1),
        geo_source: geo.map(|g| g.2),
        place_name: rng.random_bool(0.5).then(|| "lake lucene".to_string()),
        out_of_area: rng.random_bool(0.3),
        sanitized_text: text.join(" ").to_lowercase(),
        raw_text: text.join(" "),
        detected_at: chrono::DateTime::from_timestamp(rng.random_range(0..4_000_000_000), rng.random_range(0..1_000_000_000))
            .unwrap(),
        scores: IncidentScores {
            stage1: rng.random(),
            stage2: categories.iter().cloned().zip(weights).collect(),
        },
    }
}
