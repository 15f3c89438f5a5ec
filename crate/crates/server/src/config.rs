use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use flarewatch_core::geo::{BoundingBox, HttpGeocoder, HttpGeocoderConfig};
use flarewatch_core::pipeline::{ContextPaths, PipelineContext, DEFAULT_QUEUE_CAPACITY};
use serde::{Deserialize, Serialize};

use crate::ServerError;

pub const PORT_ENV: &str = "FLAREWATCH_PORT";
pub const DATA_DIR_ENV: &str = "FLAREWATCH_DATA_DIR";

/// Service configuration file. Relative paths resolve against the file's
/// directory; `FLAREWATCH_PORT` and `FLAREWATCH_DATA_DIR` override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    pub data_dir: PathBuf,
    #[serde(default = "default_bbox")]
    pub bbox: [f64; 4],
    pub contacts: PathBuf,
    pub dictionary: PathBuf,
    pub normalization: PathBuf,
    pub gazetteer: PathBuf,
    pub filters: PathBuf,
    pub models_dir: PathBuf,
    #[serde(default)]
    pub wordcloud: Option<PathBuf>,
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    #[serde(default)]
    pub geocoder: Option<HttpGeocoderConfig>,
}

fn default_port() -> u16 {
    8080
}

fn default_bbox() -> [f64; 4] {
    let b = BoundingBox::MUMBAI;
    [b.min_lat, b.min_lon, b.max_lat, b.max_lon]
}

fn default_queue_capacity() -> usize {
    DEFAULT_QUEUE_CAPACITY
}

impl ServiceConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ServerError> {
        let mut cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))?;
        for p in [
            &mut cfg.data_dir,
            &mut cfg.contacts,
            &mut cfg.dictionary,
            &mut cfg.normalization,
            &mut cfg.gazetteer,
            &mut cfg.filters,
            &mut cfg.models_dir,
        ] {
            *p = base.join(&*p);
        }
        for p in [&mut cfg.wordcloud, &mut cfg.static_dir].into_iter().flatten() {
            *p = base.join(&*p);
        }
        if cfg.queue_capacity == 0 {
            return Err(ServerError::Config("queue_capacity must be positive".into()));
        }
        cfg.bbox()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Applies `FLAREWATCH_PORT` / `FLAREWATCH_DATA_DIR` from `lookup`.
    pub fn apply_env(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ServerError> {
        if let Some(port) = lookup(PORT_ENV) {
            self.port = port
                .parse()
                .map_err(|e| ServerError::Config(format!("{PORT_ENV}={port:?}: {e}")))?;
        }
        if let Some(dir) = lookup(DATA_DIR_ENV) {
            self.data_dir = PathBuf::from(dir);
        }
        Ok(self)
    }

    pub fn bbox(&self) -> Result<BoundingBox, ServerError> {
        BoundingBox::from_array(self.bbox).map_err(|e| ServerError::Config(e.to_string()))
    }

    pub fn context_paths(&self) -> ContextPaths {
        ContextPaths {
            dictionary: self.dictionary.clone(),
            normalization: self.normalization.clone(),
            gazetteer: self.gazetteer.clone(),
            filters: self.filters.clone(),
            models_dir: self.models_dir.clone(),
        }
    }

    pub fn incidents_log(&self) -> PathBuf {
        self.data_dir.join("incidents.log")
    }

    pub fn preferences_log(&self) -> PathBuf {
        self.data_dir.join("preferences.log")
    }

    /// Loads models and tables into a pipeline context.
    pub fn pipeline_context(&self, contacts: &Contacts) -> Result<PipelineContext, ServerError> {
        let mut ctx = PipelineContext::load(&self.context_paths(), self.bbox()?, contacts.categories.clone())?;
        if let Some(g) = &self.geocoder {
            ctx = ctx.with_geocoder(Box::new(HttpGeocoder::new(g.clone()).map_err(|e| ServerError::Config(e.to_string()))?));
        }
        Ok(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactEntry {
    pub category: String,
    pub authority: String,
    pub phone: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactsFile {
    version: u32,
    categories: Vec<String>,
    #[serde(default)]
    contact: Vec<ContactEntry>,
}

/// Configured categories and the authority directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Contacts {
    pub version: u32,
    pub categories: Vec<String>,
    by_category: BTreeMap<String, Vec<ContactEntry>>,
}

impl Contacts {
    pub fn parse(text: &str) -> Result<Self, ServerError> {
        let file: ContactsFile = toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))?;
        if file.categories.is_empty() {
            return Err(ServerError::Config("no categories configured".into()));
        }
        let mut by_category: BTreeMap<String, Vec<ContactEntry>> =
            file.categories.iter().map(|c| (c.clone(), Vec::new())).collect();
        for entry in file.contact {
            if entry.phone.trim().is_empty() {
                return Err(ServerError::Config(format!("{}: empty phone", entry.authority)));
            }
            let Some(list) = by_category.get_mut(&entry.category) else {
                return Err(ServerError::Config(format!("contact for unknown category {:?}", entry.category)));
            };
            list.push(entry);
        }
        Ok(Self {
            version: file.version,
            categories: file.categories,
            by_category,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `None` for an unknown category.
    pub fn for_category(&self, category: &str) -> Option<&[ContactEntry]> {
        self.by_category.get(category).map(Vec::as_slice)
    }

    pub fn all(&self) -> Vec<ContactEntry> {
        self.categories
            .iter()
            .flat_map(|c| self.by_category[c].iter().cloned())
            .collect()
    }

    pub fn is_category(&self, category: &str) -> bool {
        self.by_category.contains_key(category)
    }
}
