//! Incident location: post coordinates, gazetteer lookup, optional HTTP geocoder.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::post::RawPost;
use crate::preprocess::SanitizedPost;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("coordinates out of range: ({lat}, {lon})")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error("malformed bounding box: {0}")]
    InvalidBoundingBox(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("geocoder unavailable: {0}")]
    GeocoderUnavailable(String),
    #[error("geocoder response: {0}")]
    GeocoderResponse(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeoSource {
    PostMetadata,
    Gazetteer,
    ExternalGeocoder,
}

impl GeoSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GeoSource::PostMetadata => "post-metadata",
            GeoSource::Gazetteer => "gazetteer",
            GeoSource::ExternalGeocoder => "external-geocoder",
        }
    }
}

impl fmt::Display for GeoSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn valid_coordinates(lat: f64, lon: f64) -> bool {
    (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub source: GeoSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_name: Option<String>,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, source: GeoSource) -> Result<Self, GeoError> {
        if !valid_coordinates(lat, lon) {
            return Err(GeoError::InvalidCoordinates { lat, lon });
        }
        Ok(Self {
            lat,
            lon,
            source,
            place_name: None,
        })
    }

    pub fn with_place(mut self, name: impl Into<String>) -> Self {
        self.place_name = Some(name.into());
        self
    }
}

/// Closed lat/lon rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub const MUMBAI: BoundingBox = BoundingBox {
        min_lat: 18.89,
        min_lon: 72.77,
        max_lat: 19.28,
        max_lon: 73.03,
    };

    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self, GeoError> {
        let b = Self {
            min_lat,
            min_lon,
            max_lat,
            max_lon,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(v: [f64; 4]) -> Result<Self, GeoError> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !valid_coordinates(self.min_lat, self.min_lon) || !valid_coordinates(self.max_lat, self.max_lon) {
            return Err(GeoError::InvalidBoundingBox(format!("{self} has out-of-range corners")));
        }
        if !(self.min_lat < self.max_lat && self.min_lon < self.max_lon) {
            return Err(GeoError::InvalidBoundingBox(format!("{self} needs min < max on both axes")));
        }
        Ok(())
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.min_lat + self.max_lat) / 2.0, (self.min_lon + self.max_lon) / 2.0)
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.min_lat, self.min_lon, self.max_lat, self.max_lon)
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = GeoError;

    /// `min_lat,min_lon,max_lat,max_lon`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeoError::InvalidBoundingBox(format!("{s:?}: {e}")))?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| GeoError::InvalidBoundingBox(format!("{s:?}: expected four numbers")))?;
        Self::from_array(arr)
    }
}

pub fn in_bounds(p: &GeoPoint, bbox: &BoundingBox) -> bool {
    bbox.contains(p.lat, p.lon)
}

/// Lowercase place name → coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    places: HashMap<String, (f64, f64)>,
    max_words: usize,
}

impl Gazetteer {
    pub fn from_entries<I, S>(entries: I) -> Result<Self, GeoError>
    where
        I: IntoIterator<Item = (S, f64, f64)>,
        S: AsRef<str>,
    {
        let mut g = Gazetteer::default();
        for (name, lat, lon) in entries {
            if !valid_coordinates(lat, lon) {
                return Err(GeoError::InvalidCoordinates { lat, lon });
            }
            let key = name.as_ref().split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            if key.is_empty() {
                continue;
            }
            g.max_words = g.max_words.max(key.split(' ').count());
            g.places.insert(key, (lat, lon));
        }
        Ok(g)
    }

    /// TSV `place<TAB>lat<TAB>lon`; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self, GeoError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| GeoError::Parse { line: i + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", cols.len())));
            }
            let lat: f64 = cols[1].trim().parse().map_err(|e| bad(format!("latitude: {e}")))?;
            let lon: f64 = cols[2].trim().parse().map_err(|e| bad(format!("longitude: {e}")))?;
            if !valid_coordinates(lat, lon) {
                return Err(bad(format!("coordinates out of range: ({lat}, {lon})")));
            }
            entries.push((cols[0].to_string(), lat, lon));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GeoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.places.get(&name.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }

    /// Longest place name occurring as a contiguous token span; the earliest
    /// span wins among equally long matches.
    pub fn lookup<S: AsRef<str>>(&self, tokens: &[S]) -> Option<GeoPoint> {
        let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
        for n in (1..=self.max_words.min(lower.len())).rev() {
            for window in lower.windows(n) {
                let key = window.join(" ");
                if let Some(&(lat, lon)) = self.places.get(&key) {
                    return Some(GeoPoint {
                        lat,
                        lon,
                        source: GeoSource::Gazetteer,
                        place_name: Some(key),
                    });
                }
            }
        }
        None
    }
}

/// A place-string lookup service.
pub trait Geocoder: Send + Sync {
    fn geocode(&self, query: &str) -> Result<Option<(f64, f64)>, GeoError>;
}

/// Generic JSON-over-HTTP geocoder.
///
/// Sends `GET endpoint?<query_param>=<query>` (plus the key parameter, if
/// any) and reads coordinates from dotted paths such as `results.0.lat`.
/// Numeric path segments index arrays; string values are parsed as numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpGeocoderConfig {
    pub endpoint: String,
    #[serde(default = "default_query_param")]
    pub query_param: String,
    #[serde(default)]
    pub key_param: Option<String>,
    #[serde(default)]
    pub key: Option<String>,
    pub lat_path: String,
    pub lon_path: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_query_param() -> String {
    "q".into()
}

fn default_timeout_ms() -> u64 {
    2000
}

pub struct HttpGeocoder {
    config: HttpGeocoderConfig,
    client: reqwest::blocking::Client,
}

impl HttpGeocoder {
    pub fn new(config: HttpGeocoderConfig) -> Result<Self, GeoError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GeoError::GeocoderUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpGeocoderConfig {
        &self.config
    }
}

impl fmt::Debug for HttpGeocoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpGeocoder").field("endpoint", &self.config.endpoint).finish()
    }
}

impl Geocoder for HttpGeocoder {
    fn geocode(&self, query: &str) -> Result<Option<(f64, f64)>, GeoError> {
        let mut params = vec![(self.config.query_param.as_str(), query)];
        if let (Some(k), Some(v)) = (&self.config.key_param, &self.config.key) {
            params.push((k.as_str(), v.as_str()));
        }
        let response = self
            .client
            .get(&self.config.endpoint)
            .query(&params)
            .send()
            .map_err(|e| GeoError::GeocoderUnavailable(e.to_string()))?;
        if response.status() == reqwest::StatusCode::NOT_FOUND {
            return Ok(None);
        }
        if !response.status().is_success() {
            return Err(GeoError::GeocoderUnavailable(format!("status {}", response.status())));
        }
        let body: serde_json::Value = response
            .json()
            .map_err(|e| GeoError::GeocoderResponse(e.to_string()))?;
        let (Some(lat), Some(lon)) = (
            number_at(&body, &self.config.lat_path),
            number_at(&body, &self.config.lon_path),
        ) else {
            return Ok(None);
        };
        if !valid_coordinates(lat, lon) {
            return Err(GeoError::InvalidCoordinates { lat, lon });
        }
        Ok(Some((lat, lon)))
    }
}

/// Follows a dotted path through objects and arrays.
pub fn number_at(value: &serde_json::Value, path: &str) -> Option<f64> {
    let mut cur = value;
    for seg in path.split('.').filter(|s| !s.is_empty()) {
        cur = match cur {
            serde_json::Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
            serde_json::Value::Object(map) => map.get(seg)?,
            _ => return None,
        };
    }
    match cur {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Post coordinates, else the longest gazetteer match in the sanitized
/// tokens, else one geocoder lookup of the sanitized text.
///
/// Errors only come from the geocoder; callers treat them as "no location".
pub fn resolve_location(
    post: &RawPost,
    sanitized: &SanitizedPost,
    gazetteer: &Gazetteer,
    geocoder: Option<&dyn Geocoder>,
) -> Result<Option<GeoPoint>, GeoError> {
    if let Some((lat, lon)) = post.coords() {
        if let Ok(p) = GeoPoint::new(lat, lon, GeoSource::PostMetadata) {
            return Ok(Some(p));
        }
    }
    if let Some(p) = gazetteer.lookup(&sanitized.tokens) {
        return Ok(Some(p));
    }
    let Some(geocoder) = geocoder else {
        return Ok(None);
    };
    let query = sanitized.text();
    Ok(geocoder
        .geocode(&query)?
        .map(|(lat, lon)| GeoPoint {
            lat,
            lon,
            source: GeoSource::ExternalGeocoder,
            place_name: None,
        }))
}
