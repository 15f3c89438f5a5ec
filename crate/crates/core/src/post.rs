use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PostError {
    #[error("post text is empty")]
    EmptyText,
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("only one of lat/lon given")]
    PartialCoordinates,
}

/// An ingested post as it arrives from a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub author: String,
}

impl RawPost {
    pub fn new(id: impl Into<String>, text: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            lat: None,
            lon: None,
            timestamp,
            author: String::new(),
        }
    }

    pub fn with_coords(mut self, lat: f64, lon: f64) -> Self {
        self.lat = Some(lat);
        self.lon = Some(lon);
        self
    }

    pub fn with_author(mut self, author: impl Into<String>) -> Self {
        self.author = author.into();
        self
    }

    pub fn coords(&self) -> Option<(f64, f64)> {
        self.lat.zip(self.lon)
    }

    pub fn validate(&self) -> Result<(), PostError> {
        if self.text.trim().is_empty() {
            return Err(PostError::EmptyText);
        }
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => {
                if !(-90.0..=90.0).contains(&lat) {
                    return Err(PostError::Latitude(lat));
                }
                if !(-180.0..=180.0).contains(&lon) {
                    return Err(PostError::Longitude(lon));
                }
                Ok(())
            }
            (None, None) => Ok(()),
            _ => Err(PostError::PartialCoordinates),
        }
    }

    /// Parses one JSON Lines replay record and validates it.
    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let post: RawPost = serde_json::from_str(line).map_err(|e| e.to_string())?;
        post.validate().map_err(|e| e.to_string())?;
        Ok(post)
    }
}
