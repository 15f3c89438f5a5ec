//! Append-only JSON Lines logs with a CRC32 per line, and the incident index.
//!
//! Line format: `<json>\t<crc32 of json, 8 lowercase hex digits>\n`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::geo::BoundingBox;
use crate::pipeline::{Incident, IncidentSink, PipelineError};

pub const DEFAULT_QUERY_LIMIT: usize = 200;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("log {path} is corrupt at line {line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("log {path} would exceed its {max_bytes}-byte limit")]
    StorageFull { path: PathBuf, max_bytes: u64 },
    #[error("encoding record: {0}")]
    Encode(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn checksum(payload: &str) -> u32 {
    crc32fast::hash(payload.as_bytes())
}

pub fn encode_line(payload: &str) -> String {
    format!("{payload}\t{:08x}\n", checksum(payload))
}

/// Splits and verifies one line (without its newline).
pub fn decode_line(line: &str) -> Result<&str, String> {
    let (payload, crc) = line.rsplit_once('\t').ok_or("missing checksum")?;
    let expected = u32::from_str_radix(crc, 16).map_err(|e| format!("checksum field: {e}"))?;
    if crc.len() != 8 || checksum(payload) != expected {
        return Err("checksum mismatch".into());
    }
    Ok(payload)
}

/// What reopening a log found.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub records: usize,
    pub torn_discarded: usize,
}

/// Typed append-only log. One writer; `append` returns after `fsync`.
#[derive(Debug)]
pub struct RecordLog<T> {
    path: PathBuf,
    file: File,
    bytes: u64,
    records: usize,
    last_checksum: Option<u32>,
    max_bytes: Option<u64>,
    _record: PhantomData<fn() -> T>,
}

impl<T: Serialize + DeserializeOwned> RecordLog<T> {
    /// Opens or creates the log and returns every intact record.
    ///
    /// A damaged final line (torn write) is cut off and counted; damage on
    /// any earlier line is [`StoreError::CorruptLog`].
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<T>, RecoveryReport), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw).map_err(io)?;

        let mut records = Vec::new();
        let mut report = RecoveryReport::default();
        let mut good_end = 0usize;
        let mut last_checksum = None;
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < raw.len() {
            line_no += 1;
            let (end, complete) = match raw[offset..].iter().position(|&b| b == b'\n') {
                Some(i) => (offset + i, true),
                None => (raw.len(), false),
            };
            let next = if complete { end + 1 } else { end };
            let is_last = next >= raw.len();
            let parsed = std::str::from_utf8(&raw[offset..end])
                .map_err(|e| e.to_string())
                .and_then(|line| {
                    let payload = decode_line(line)?;
                    let record: T = serde_json::from_str(payload).map_err(|e| e.to_string())?;
                    Ok((record, checksum(payload)))
                });
            match parsed {
                Ok((record, crc)) if complete => {
                    records.push(record);
                    last_checksum = Some(crc);
                    good_end = next;
                }
                Ok(_) | Err(_) if is_last => {
                    report.torn_discarded += 1;
                    warn!(path = %path.display(), line = line_no, "discarding torn trailing record");
                }
                Err(message) => {
                    return Err(StoreError::CorruptLog {
                        path: path.clone(),
                        line: line_no,
                        message,
                    })
                }
                Ok(_) => unreachable!("incomplete lines are always last"),
            }
            offset = next;
        }
        if good_end < raw.len() {
            file.set_len(good_end as u64).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        report.records = records.len();
        let log = Self {
            path: path.clone(),
            file,
            bytes: good_end as u64,
            records: records.len(),
            last_checksum,
            max_bytes: None,
            _record: PhantomData,
        };
        Ok((log, records, report))
    }

    pub fn with_max_bytes(mut self, max_bytes: Option<u64>) -> Self {
        self.max_bytes = max_bytes;
        self
    }

    pub fn append(&mut self, record: &T) -> Result<(), StoreError> {
        let payload = serde_json::to_string(record)?;
        let line = encode_line(&payload);
        if let Some(max_bytes) = self.max_bytes {
            if self.bytes + line.len() as u64 > max_bytes {
                return Err(StoreError::StorageFull {
                    path: self.path.clone(),
                    max_bytes,
                });
            }
        }
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.bytes += line.len() as u64;
        self.records += 1;
        self.last_checksum = Some(checksum(&payload));
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn last_checksum(&self) -> Option<u32> {
        self.last_checksum
    }
}

/// Predicates for [`IncidentStore::query`]; unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncidentQuery {
    pub since: Option<DateTime<Utc>>,
    pub category: Option<String>,
    pub bbox: Option<BoundingBox>,
    pub limit: Option<usize>,
}

impl IncidentQuery {
    pub fn matches(&self, i: &Incident) -> bool {
        if self.since.is_some_and(|s| i.detected_at < s) {
            return false;
        }
        if self.category.as_ref().is_some_and(|c| c != &i.category) {
            return false;
        }
        if let Some(b) = &self.bbox {
            return matches!((i.lat, i.lon), (Some(lat), Some(lon)) if b.contains(lat, lon));
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// Position in append order.
    pub seq: usize,
    /// The id was already stored; nothing was written.
    pub duplicate: bool,
}

#[derive(Debug, Default)]
struct Index {
    incidents: Vec<Incident>,
    by_id: HashMap<String, usize>,
}

impl Index {
    fn insert(&mut self, incident: Incident) -> usize {
        let seq = self.incidents.len();
        self.by_id.insert(incident.id.clone(), seq);
        self.incidents.push(incident);
        seq
    }
}

/// Durable incident log plus its in-memory index.
///
/// Appends are serialized; readers take a shared lock and see every
/// acknowledged incident.
#[derive(Debug)]
pub struct IncidentStore {
    log: Mutex<RecordLog<Incident>>,
    index: RwLock<Index>,
}

impl IncidentStore {
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, RecoveryReport), StoreError> {
        Self::open_with_limit(path, None)
    }

    pub fn open_with_limit(path: impl AsRef<Path>, max_bytes: Option<u64>) -> Result<(Self, RecoveryReport), StoreError> {
        let (log, records, report) = RecordLog::<Incident>::open(path)?;
        let mut index = Index::default();
        for incident in records {
            if !index.by_id.contains_key(&incident.id) {
                index.insert(incident);
            }
        }
        Ok((
            Self {
                log: Mutex::new(log.with_max_bytes(max_bytes)),
                index: RwLock::new(index),
            },
            report,
        ))
    }

    /// Writes and fsyncs before acknowledging. Re-appending a stored id is a no-op.
    pub fn append(&self, incident: &Incident) -> Result<Ack, StoreError> {
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(&seq) = self.read().by_id.get(&incident.id) {
            return Ok(Ack { seq, duplicate: true });
        }
        log.append(incident)?;
        let seq = self
            .index
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(incident.clone());
        Ok(Ack { seq, duplicate: false })
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Index> {
        self.index.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Matching incidents, newest `detected_at` first (later appends first on ties).
    pub fn query(&self, q: &IncidentQuery) -> Vec<Incident> {
        let index = self.read();
        let mut hits: Vec<(usize, &Incident)> = index.incidents.iter().enumerate().filter(|(_, i)| q.matches(i)).collect();
        hits.sort_by(|a, b| b.1.detected_at.cmp(&a.1.detected_at).then(b.0.cmp(&a.0)));
        hits.into_iter()
            .take(q.limit.unwrap_or(DEFAULT_QUERY_LIMIT))
            .map(|(_, i)| i.clone())
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<Incident> {
        let index = self.read();
        index.by_id.get(id).map(|&s| index.incidents[s].clone())
    }

    /// Incidents appended after `id`, in append order. `None` if `id` is unknown.
    pub fn after(&self, id: &str) -> Option<Vec<Incident>> {
        let index = self.read();
        let &seq = index.by_id.get(id)?;
        Some(index.incidents[seq + 1..].to_vec())
    }

    /// Append position of a stored id.
    pub fn seq_of(&self, id: &str) -> Option<usize> {
        self.read().by_id.get(id).copied()
    }

    /// Every incident in append order.
    pub fn all(&self) -> Vec<Incident> {
        self.read().incidents.clone()
    }

    pub fn len(&self) -> usize {
        self.read().incidents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> PathBuf {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).path().to_path_buf()
    }
}

impl IncidentSink for IncidentStore {
    fn deliver(&mut self, incident: &Incident) -> Result<(), PipelineError> {
        IncidentStore::append(self, incident)
            .map(|_| ())
            .map_err(|e| PipelineError::Sink(Box::new(e)))
    }
}

impl IncidentSink for &IncidentStore {
    fn deliver(&mut self, incident: &Incident) -> Result<(), PipelineError> {
        IncidentStore::append(self, incident)
            .map(|_| ())
            .map_err(|e| PipelineError::Sink(Box::new(e)))
    }
}

/// Reopens the log at `path` and rebuilds the index.
pub fn recover(path: impl AsRef<Path>) -> Result<(IncidentStore, RecoveryReport), StoreError> {
    IncidentStore::open(path)
}
