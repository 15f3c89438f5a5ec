//! Text sanitation: cleaning, run compression, normalization and spelling,
//! always applied in that order.

mod clean;
mod compress;
mod dictionary;
mod normalize;
mod spell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{clean, tokenize};
pub use compress::{compress_token, MAX_SEARCH_WINDOWS};
pub use dictionary::Dictionary;
pub use normalize::{normalize_tokens, NormalizationMap};
pub use spell::{best_correction, consonant_skeleton, damerau_levenshtein, spell_correct};

use crate::post::RawPost;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no tokens left after cleaning")]
    EmptyAfterCleaning,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid normalization entry: {0}")]
    InvalidMapping(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Cleaning,
    Compression,
    Normalization,
    Spelling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedPost {
    pub source_id: String,
    pub tokens: Vec<String>,
    pub stage_log: Vec<StageRecord>,
}

impl SanitizedPost {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Runs the four preprocessing stages over a post.
pub fn sanitize(
    post: &RawPost,
    dict: &Dictionary,
    map: &NormalizationMap,
) -> Result<SanitizedPost, PreprocessError> {
    sanitize_text(&post.id, &post.text, dict, map)
}

pub fn sanitize_text(
    source_id: &str,
    text: &str,
    dict: &Dictionary,
    map: &NormalizationMap,
) -> Result<SanitizedPost, PreprocessError> {
    let cleaned = clean(text);
    let tokens = tokenize(&cleaned);
    if tokens.is_empty() {
        return Err(PreprocessError::EmptyAfterCleaning);
    }
    let mut stage_log = Vec::with_capacity(4);
    stage_log.push(StageRecord {
        stage: Stage::Cleaning,
        before: text.to_string(),
        after: cleaned,
    });

    let compressed: Vec<String> = tokens.iter().map(|t| compress_token(t, dict)).collect();
    stage_log.push(StageRecord {
        stage: Stage::Compression,
        before: tokens.join(" "),
        after: compressed.join(" "),
    });

    let normalized = normalize_tokens(&compressed, map, dict);
    stage_log.push(StageRecord {
        stage: Stage::Normalization,
        before: compressed.join(" "),
        after: normalized.join(" "),
    });

    let spelled = spell_correct(&normalized, dict);
    stage_log.push(StageRecord {
        stage: Stage::Spelling,
        before: normalized.join(" "),
        after: spelled.join(" "),
    });

    Ok(SanitizedPost {
        source_id: source_id.to_string(),
        tokens: spelled,
        stage_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Utc};

    fn ts() -> DateTime<Utc> {
        "2016-05-01T10:00:00Z".parse().unwrap()
    }

    fn fixture() -> (Dictionary, NormalizationMap) {
        let dict = Dictionary::from_pairs([
            ("help", 562_000u64),
            ("fire", 200_000),
            ("at", 3_000_000),
            ("powai", 2_000),
            ("lake", 67_600),
            ("lucene", 2_000),
            ("building", 195_000),
            ("floor", 87_100),
            ("for", 10_200_000),
        ]);
        let map =
            NormalizationMap::from_entries([("bldng", "building", 29u64), ("hlp", "help", 31)])
                .unwrap();
        (dict, map)
    }

    #[test]
    fn table_one_post_end_to_end() {
        let (dict, map) = fixture();
        let post = RawPost::new(
            "t1",
            "@user heellllllppp!!! Firrreee at powai, lake lucene bldng 4th flor, hlp! #fire",
            ts(),
        );
        let s = sanitize(&post, &dict, &map).unwrap();
        let want = [
            "help", "fire", "at", "powai", ",", "lake", "lucene", "building", "4th", "floor", ",",
            "help",
        ];
        assert_eq!(s.tokens, want);
        assert_eq!(s.source_id, "t1");
        assert_eq!(s.stage_log.len(), 4);
        assert_eq!(
            s.stage_log[0].after,
            "heellllllppp Firrreee at powai , lake lucene bldng 4th flor , hlp"
        );
        assert_eq!(
            s.stage_log[1].after,
            "help fire at powai , lake lucene bldng 4th flor , hlp"
        );
        assert_eq!(
            s.stage_log[2].after,
            "help fire at powai , lake lucene building 4th flor , help"
        );
        assert_eq!(s.text(), want.join(" "));
    }

    #[test]
    fn hashtag_only_post_is_empty() {
        let (dict, map) = fixture();
        let post = RawPost::new("t2", "#fire", ts());
        assert!(matches!(
            sanitize(&post, &dict, &map),
            Err(PreprocessError::EmptyAfterCleaning)
        ));
    }

    #[test]
    fn plain_word_is_identity() {
        let (dict, map) = fixture();
        let s = sanitize(&RawPost::new("t3", "fire", ts()), &dict, &map).unwrap();
        assert_eq!(s.tokens, ["fire"]);
        assert!(s.stage_log.iter().skip(1).all(|r| r.before == r.after));
    }

    #[test]
    fn deterministic() {
        let (dict, map) = fixture();
        let post = RawPost::new("t4", "hlp!! fiiiire in bldng nr powai", ts());
        let a = sanitize(&post, &dict, &map).unwrap();
        let b = sanitize(&post, &dict, &map).unwrap();
        assert_eq!(a, b);
    }
}
