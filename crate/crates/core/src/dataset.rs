//! Labeled post corpora and their TSV file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ClassifierSpec, ClassifyError, TrainedStage, EMERGENCY, NON_EMERGENCY};
use crate::features::FeatureConfig;
use crate::preprocess::{sanitize_text, Dictionary, NormalizationMap, PreprocessError};

pub const TSV_HEADER: &str = "text\tstage1_label\tstage2_category\tlat\tlon\ttimestamp";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("example {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage1Label {
    #[serde(rename = "emergency")]
    Emergency,
    #[serde(rename = "non-emergency")]
    NonEmergency,
}

impl Stage1Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Emergency => EMERGENCY,
            Self::NonEmergency => NON_EMERGENCY,
        }
    }

    /// Class index in `[emergency, non-emergency]` order.
    pub fn index(self) -> usize {
        match self {
            Self::Emergency => 0,
            Self::NonEmergency => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Emergency => Self::NonEmergency,
            Self::NonEmergency => Self::Emergency,
        }
    }
}

impl fmt::Display for Stage1Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage1Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            EMERGENCY => Ok(Self::Emergency),
            NON_EMERGENCY => Ok(Self::NonEmergency),
            other => Err(format!("unknown stage-1 label {other:?}")),
        }
    }
}

/// Stage-1 class names in index order.
pub fn stage1_classes() -> Vec<String> {
    vec![EMERGENCY.to_string(), NON_EMERGENCY.to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub stage1: Stage1Label,
    pub category: Option<String>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub timestamp: Option<DateTime<Utc>>,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, stage1: Stage1Label, category: Option<String>) -> Self {
        Self {
            text: text.into(),
            stage1,
            category,
            lat: None,
            lon: None,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
}

/// Sanitized tokens of every example, aligned with the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedCorpus {
    pub docs: Vec<Vec<String>>,
    pub stage1: Vec<usize>,
    pub categories: Vec<Option<String>>,
}

impl TokenizedCorpus {
    /// Emergency-only documents with category indices into `categories`.
    pub fn stage2(&self, categories: &[String]) -> Result<(Vec<Vec<String>>, Vec<usize>), DatasetError> {
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for (i, (doc, cat)) in self.docs.iter().zip(&self.categories).enumerate() {
            if self.stage1[i] != Stage1Label::Emergency.index() {
                continue;
            }
            let cat = cat.as_deref().ok_or_else(|| DatasetError::Invalid {
                index: i,
                message: "emergency without category".into(),
            })?;
            let idx = categories.iter().position(|c| c == cat).ok_or_else(|| DatasetError::Invalid {
                index: i,
                message: format!("unknown category {cat:?}"),
            })?;
            docs.push(doc.clone());
            labels.push(idx);
        }
        Ok((docs, labels))
    }

    /// Fits both stages: `first` on every document, `second` on emergencies only.
    pub fn train_stages(
        &self,
        categories: &[String],
        first: (FeatureConfig, ClassifierSpec),
        second: (FeatureConfig, ClassifierSpec),
    ) -> Result<(TrainedStage, TrainedStage), DatasetError> {
        let stage1 = TrainedStage::train(&self.docs, &self.stage1, &stage1_classes(), first.0, &first.1)?;
        let (docs, labels) = self.stage2(categories)?;
        let stage2 = TrainedStage::train(&docs, &labels, categories, second.0, &second.1)?;
        Ok((stage1, stage2))
    }
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>) -> Self {
        Self { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: Stage1Label) -> usize {
        self.examples.iter().filter(|e| e.stage1 == label).count()
    }

    /// Category present iff emergency, and drawn from `categories`.
    pub fn validate(&self, categories: &[String]) -> Result<(), DatasetError> {
        for (index, e) in self.examples.iter().enumerate() {
            let bad = |message: String| DatasetError::Invalid { index, message };
            match (e.stage1, &e.category) {
                (Stage1Label::Emergency, None) => return Err(bad("emergency without category".into())),
                (Stage1Label::NonEmergency, Some(c)) => {
                    return Err(bad(format!("non-emergency with category {c:?}")))
                }
                (_, Some(c)) if !categories.contains(c) => return Err(bad(format!("unknown category {c:?}"))),
                _ => {}
            }
        }
        Ok(())
    }

    /// Category names in first-appearance order.
    pub fn categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in self.examples.iter().filter_map(|e| e.category.as_ref()) {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }

    /// Sanitizes every text. Posts that clean to nothing become empty documents.
    pub fn tokenize(&self, dict: &Dictionary, map: &NormalizationMap) -> TokenizedCorpus {
        use rayon::prelude::*;
        let docs = self
            .examples
            .par_iter()
            .enumerate()
            .map(|(i, e)| match sanitize_text(&i.to_string(), &e.text, dict, map) {
                Ok(s) => s.tokens,
                Err(PreprocessError::EmptyAfterCleaning) => Vec::new(),
                Err(_) => Vec::new(),
            })
            .collect();
        TokenizedCorpus {
            docs,
            stage1: self.examples.iter().map(|e| e.stage1.index()).collect(),
            categories: self.examples.iter().map(|e| e.category.clone()).collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.examples {
            let text: String = e
                .text
                .chars()
                .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
                .collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                text,
                e.stage1,
                e.category.as_deref().unwrap_or(""),
                opt(e.lat),
                opt(e.lon),
                e.timestamp.map(|t| t.to_rfc3339()).unwrap_or_default()
            ));
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self, DatasetError> {
        let mut examples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim_end_matches('\r');
            if line.is_empty() || (i == 0 && line == TSV_HEADER) {
                continue;
            }
            let perr = |message: String| DatasetError::Parse { line: n, message };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(perr(format!("expected 6 columns, found {}", cols.len())));
            }
            let stage1: Stage1Label = cols[1].parse().map_err(perr)?;
            let num = |s: &str| -> Result<Option<f64>, DatasetError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| perr(format!("bad number {s:?}")))
                }
            };
            let timestamp = if cols[5].is_empty() {
                None
            } else {
                Some(
                    DateTime::parse_from_rfc3339(cols[5])
                        .map_err(|e| perr(format!("bad timestamp: {e}")))?
                        .with_timezone(&Utc),
                )
            };
            examples.push(LabeledExample {
                text: cols[0].to_string(),
                stage1,
                category: (!cols[2].is_empty()).then(|| cols[2].to_string()),
                lat: num(cols[3])?,
                lon: num(cols[4])?,
                timestamp,
            });
        }
        Ok(Self { examples })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::parse_tsv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_roundtrip() {
        let mut e = LabeledExample::new("fire at powai\tnow", Stage1Label::Emergency, Some("fire".into()));
        e.lat = Some(19.1176);
        e.lon = Some(72.906);
        e.timestamp = Some("2016-04-01T10:00:00Z".parse().unwrap());
        let d = Dataset::new(vec![e, LabeledExample::new("nice day", Stage1Label::NonEmergency, None)]);
        let back = Dataset::parse_tsv(&d.to_tsv()).unwrap();
        assert_eq!(back.examples[0].text, "fire at powai now");
        assert_eq!(back.examples[0].lat, Some(19.1176));
        assert_eq!(back.examples[1], d.examples[1]);
        assert_eq!(back.count(Stage1Label::Emergency), 1);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            Dataset::parse_tsv("a\tmaybe\t\t\t\t\n"),
            Err(DatasetError::Parse { line: 1, .. })
        ));
        assert!(Dataset::parse_tsv("a\temergency\tfire\n").is_err());
        assert!(Dataset::parse_tsv("a\temergency\tfire\tx\t\t\n").is_err());
    }

    #[test]
    fn validation() {
        let cats = vec!["fire".to_string()];
        let ok = Dataset::new(vec![LabeledExample::new("x", Stage1Label::Emergency, Some("fire".into()))]);
        assert!(ok.validate(&cats).is_ok());
        let missing = Dataset::new(vec![LabeledExample::new("x", Stage1Label::Emergency, None)]);
        assert!(missing.validate(&cats).is_err());
        let stray = Dataset::new(vec![LabeledExample::new("x", Stage1Label::NonEmergency, Some("fire".into()))]);
        assert!(stray.validate(&cats).is_err());
        let unknown = Dataset::new(vec![LabeledExample::new("x", Stage1Label::Emergency, Some("flood".into()))]);
        assert!(unknown.validate(&cats).is_err());
    }
}
