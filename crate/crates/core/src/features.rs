//! Sparse n-gram count vectors over a vocabulary fitted on training text only.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("n-gram order must be 1 or 3, got {0}")]
    InvalidOrder(usize),
    #[error("no documents to fit on")]
    EmptyCorpus,
    #[error("no document yields any n-gram")]
    EmptyVocabulary,
    #[error("vocabulary line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How documents are turned into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub order: usize,
    /// Emit unigrams for documents shorter than `order`.
    pub fallback_short_docs: bool,
    /// Presence (1.0) instead of term counts.
    pub binary: bool,
}

impl FeatureConfig {
    pub const fn unigrams() -> Self {
        Self {
            order: 1,
            fallback_short_docs: true,
            binary: false,
        }
    }

    pub const fn trigrams() -> Self {
        Self {
            order: 3,
            fallback_short_docs: true,
            binary: false,
        }
    }

    fn check(&self) -> Result<(), FeatureError> {
        match self.order {
            1 | 3 => Ok(()),
            n => Err(FeatureError::InvalidOrder(n)),
        }
    }
}

/// Contiguous word n-grams of `doc`, joined by single spaces.
pub fn extract_ngrams<S: AsRef<str>>(doc: &[S], config: &FeatureConfig) -> Vec<String> {
    let n = config.order.max(1);
    if doc.len() >= n {
        doc.windows(n)
            .map(|w| w.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" "))
            .collect()
    } else if config.fallback_short_docs {
        doc.iter().map(|t| t.as_ref().to_string()).collect()
    } else {
        Vec::new()
    }
}

/// Feature string → dense index, assigned in first-occurrence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    config: FeatureConfig,
    features: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn fit<D, S>(docs: &[D], config: FeatureConfig) -> Result<Self, FeatureError>
    where
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        config.check()?;
        if docs.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let mut vocab = Self {
            config,
            features: Vec::new(),
            index: HashMap::new(),
        };
        for doc in docs {
            for gram in extract_ngrams(doc.as_ref(), &config) {
                vocab.insert(gram);
            }
        }
        if vocab.features.is_empty() {
            return Err(FeatureError::EmptyVocabulary);
        }
        Ok(vocab)
    }

    fn insert(&mut self, feature: String) {
        if !self.index.contains_key(&feature) {
            self.index.insert(feature.clone(), self.features.len());
            self.features.push(feature);
        }
    }

    pub fn config(&self) -> FeatureConfig {
        self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn feature(&self, index: usize) -> Option<&str> {
        self.features.get(index).map(String::as_str)
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    /// Counts in-vocabulary n-grams of `doc`; unknown n-grams are ignored.
    pub fn vectorize<S: AsRef<str>>(&self, doc: &[S]) -> FeatureVector {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for gram in extract_ngrams(doc, &self.config) {
            if let Some(&i) = self.index.get(&gram) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        if self.config.binary {
            for e in &mut entries {
                e.1 = 1.0;
            }
        }
        FeatureVector {
            entries,
            dimension: self.len(),
        }
    }

    /// `index<TAB>feature` lines preceded by `#` settings lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "# ngram_order\t{}", c.order);
        let _ = writeln!(out, "# fallback_short_docs\t{}", c.fallback_short_docs);
        let _ = writeln!(out, "# binary\t{}", c.binary);
        for (i, f) in self.features.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{f}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut config = FeatureConfig::unigrams();
        let mut vocab = Self {
            config,
            features: Vec::new(),
            index: HashMap::new(),
        };
        let perr = |line: usize, message: String| FeatureError::Parse { line, message };
        for (n, line) in text.lines().enumerate() {
            let n = n + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(setting) = line.strip_prefix("# ") {
                let (key, value) = setting
                    .split_once('\t')
                    .ok_or_else(|| perr(n, "malformed setting".into()))?;
                let flag = || value.parse::<bool>().map_err(|e| perr(n, e.to_string()));
                match key {
                    "ngram_order" => {
                        config.order = value.parse().map_err(|_| perr(n, "bad order".into()))?
                    }
                    "fallback_short_docs" => config.fallback_short_docs = flag()?,
                    "binary" => config.binary = flag()?,
                    other => return Err(perr(n, format!("unknown setting {other:?}"))),
                }
                continue;
            }
            let (idx, feature) = line
                .split_once('\t')
                .ok_or_else(|| perr(n, "expected index<TAB>feature".into()))?;
            let idx: usize = idx.parse().map_err(|_| perr(n, format!("bad index {idx:?}")))?;
            if idx != vocab.features.len() {
                return Err(perr(n, format!("index {idx} out of sequence")));
            }
            if vocab.index.contains_key(feature) {
                return Err(perr(n, format!("duplicate feature {feature:?}")));
            }
            vocab.insert(feature.to_string());
        }
        config.check()?;
        vocab.config = config;
        if vocab.features.is_empty() {
            return Err(FeatureError::EmptyVocabulary);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Sparse vector with strictly increasing indices below `dimension`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
    dimension: usize,
}

impl FeatureVector {
    /// Builds a vector from unsorted pairs; duplicate indices are summed and
    /// non-positive values or indices ≥ `dimension` are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>, dimension: usize) -> Self {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut raw: Vec<(usize, f64)> = pairs.into_iter().filter(|&(i, _)| i < dimension).collect();
        raw.sort_by_key(|&(i, _)| i);
        for (i, v) in raw {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v > 0.0);
        Self { entries, dimension }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i] * v).sum()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }
}
