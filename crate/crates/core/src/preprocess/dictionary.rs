use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::PreprocessError;

/// Lowercase word list with unigram counts.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    freqs: HashMap<String, u64>,
    total: u64,
    // words grouped by char length, each bucket sorted, for candidate scans
    by_len: BTreeMap<usize, Vec<String>>,
}

impl Dictionary {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut freqs: HashMap<String, u64> = HashMap::new();
        for (word, count) in pairs {
            *freqs.entry(word.as_ref().to_lowercase()).or_default() += count;
        }
        let total = freqs.values().sum();
        let mut by_len: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for word in freqs.keys() {
            by_len.entry(word.chars().count()).or_default().push(word.clone());
        }
        for bucket in by_len.values_mut() {
            bucket.sort();
        }
        Self {
            freqs,
            total,
            by_len,
        }
    }

    /// Words with count 1 each.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::from_pairs(words.into_iter().map(|w| (w, 1)))
    }

    /// Parses `word<TAB>count` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, PreprocessError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, count) = line.split_once('\t').ok_or_else(|| PreprocessError::Parse {
                line: i + 1,
                message: "expected word<TAB>count".into(),
            })?;
            let count: u64 = count.trim().parse().map_err(|_| PreprocessError::Parse {
                line: i + 1,
                message: format!("bad count {count:?}"),
            })?;
            let word = word.trim();
            if word.is_empty() {
                return Err(PreprocessError::Parse {
                    line: i + 1,
                    message: "empty word".into(),
                });
            }
            pairs.push((word.to_string(), count));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PreprocessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Case-insensitive membership.
    pub fn contains(&self, word: &str) -> bool {
        if self.freqs.contains_key(word) {
            return true;
        }
        let lower = word.to_lowercase();
        lower != word && self.freqs.contains_key(&lower)
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.freqs
            .get(word)
            .or_else(|| self.freqs.get(&word.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    /// Add-one smoothed unigram probability.
    pub fn smoothed_probability(&self, word: &str) -> f64 {
        (self.frequency(word) as f64 + 1.0) / (self.total as f64 + self.len() as f64)
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    /// Words whose char length lies in `[min, max]`, in (length, lexicographic) order.
    pub fn words_with_len(&self, min: usize, max: usize) -> impl Iterator<Item = &str> {
        self.by_len
            .range(min..=max)
            .flat_map(|(_, bucket)| bucket.iter().map(String::as_str))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words_with_len(0, usize::MAX)
    }
}
