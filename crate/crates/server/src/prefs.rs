use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use flarewatch_core::geo::BoundingBox;
use flarewatch_core::pipeline::Incident;
use flarewatch_core::store::{RecordLog, StoreError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPreferences {
    pub user: String,
    pub notifications_enabled: bool,
    pub categories: Vec<String>,
    #[serde(default)]
    pub bbox: Option<BoundingBox>,
}

impl UserPreferences {
    pub fn defaults(user: &str, categories: &[String]) -> Self {
        Self {
            user: user.to_string(),
            notifications_enabled: true,
            categories: categories.to_vec(),
            bbox: None,
        }
    }

    /// Whether a push for `incident` should reach this user. Incidents
    /// without coordinates never match an area of interest.
    pub fn wants(&self, incident: &Incident) -> bool {
        if !self.notifications_enabled || !self.categories.contains(&incident.category) {
            return false;
        }
        match (&self.bbox, incident.lat, incident.lon) {
            (None, _, _) => true,
            (Some(b), Some(lat), Some(lon)) => b.contains(lat, lon),
            (Some(_), _, _) => false,
        }
    }
}

/// Body of `PUT /api/preferences/{user}`; omitted fields keep their value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencesUpdate {
    #[serde(default)]
    pub notifications_enabled: Option<bool>,
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    #[serde(default, with = "double_option")]
    pub bbox: Option<Option<BoundingBox>>,
}

/// Distinguishes an absent field from an explicit `null`.
mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(v: &Option<Option<T>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(inner) => inner.serialize(s),
        }
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
        Option::<T>::deserialize(d).map(Some)
    }
}

/// Last-write-wins preferences persisted in a checksummed log.
#[derive(Debug)]
pub struct PreferenceStore {
    inner: Mutex<(RecordLog<UserPreferences>, HashMap<String, UserPreferences>)>,
    categories: Vec<String>,
}

impl PreferenceStore {
    pub fn open(path: impl AsRef<Path>, categories: Vec<String>) -> Result<Self, StoreError> {
        let (log, records, _) = RecordLog::open(path)?;
        let map = records.into_iter().map(|p: UserPreferences| (p.user.clone(), p)).collect();
        Ok(Self {
            inner: Mutex::new((log, map)),
            categories,
        })
    }

    pub fn get(&self, user: &str) -> UserPreferences {
        let guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .1
            .get(user)
            .cloned()
            .unwrap_or_else(|| UserPreferences::defaults(user, &self.categories))
    }

    /// Validates, persists and returns the merged preferences.
    pub fn update(&self, user: &str, update: PreferencesUpdate) -> Result<UserPreferences, PreferencesError> {
        if user.trim().is_empty() {
            return Err(PreferencesError::Invalid("empty user id".into()));
        }
        let mut prefs = self.get(user);
        if let Some(v) = update.notifications_enabled {
            prefs.notifications_enabled = v;
        }
        if let Some(cats) = update.categories {
            if let Some(bad) = cats.iter().find(|c| !self.categories.contains(c)) {
                return Err(PreferencesError::Invalid(format!("unknown category {bad:?}")));
            }
            let mut dedup: Vec<String> = Vec::with_capacity(cats.len());
            for c in cats {
                if !dedup.contains(&c) {
                    dedup.push(c);
                }
            }
            prefs.categories = dedup;
        }
        if let Some(bbox) = update.bbox {
            if let Some(b) = &bbox {
                b.validate().map_err(|e| PreferencesError::Invalid(e.to_string()))?;
            }
            prefs.bbox = bbox;
        }
        let mut guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        guard.0.append(&prefs)?;
        guard.1.insert(user.to_string(), prefs.clone());
        Ok(prefs)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PreferencesError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}
