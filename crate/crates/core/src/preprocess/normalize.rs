use std::collections::BTreeMap;
use std::path::Path;

use super::{Dictionary, PreprocessError};

/// Chat-form phrase → weighted standard-English candidates.
#[derive(Debug, Clone, Default)]
pub struct NormalizationMap {
    pairs: BTreeMap<String, Vec<(String, u64)>>,
    max_key_words: usize,
}

impl NormalizationMap {
    pub fn from_entries<I, A, B>(entries: I) -> Result<Self, PreprocessError>
    where
        I: IntoIterator<Item = (A, B, u64)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut pairs: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
        for (source, target, count) in entries {
            let source = normalize_phrase(source.as_ref());
            let target = normalize_phrase(target.as_ref());
            if source.is_empty() || target.is_empty() {
                return Err(PreprocessError::InvalidMapping(format!(
                    "empty phrase in {source:?} -> {target:?}"
                )));
            }
            if count == 0 {
                return Err(PreprocessError::InvalidMapping(format!(
                    "zero count for {source:?} -> {target:?}"
                )));
            }
            let cands = pairs.entry(source).or_default();
            match cands.iter_mut().find(|(t, _)| *t == target) {
                Some((_, c)) => *c += count,
                None => cands.push((target, count)),
            }
        }
        for (source, cands) in &pairs {
            if cands.iter().all(|(t, _)| t == source) {
                return Err(PreprocessError::InvalidMapping(format!(
                    "{source:?} only maps to itself"
                )));
            }
        }
        let max_key_words = pairs
            .keys()
            .map(|k| k.split(' ').count())
            .max()
            .unwrap_or(0);
        Ok(Self {
            pairs,
            max_key_words,
        })
    }

    /// Parses `source<TAB>target<TAB>count` lines.
    pub fn parse(text: &str) -> Result<Self, PreprocessError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [source, target, count] = fields[..] else {
                return Err(PreprocessError::Parse {
                    line: i + 1,
                    message: "expected source<TAB>target<TAB>count".into(),
                });
            };
            let count: u64 = count.trim().parse().map_err(|_| PreprocessError::Parse {
                line: i + 1,
                message: format!("bad count {count:?}"),
            })?;
            entries.push((source.to_string(), target.to_string(), count));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PreprocessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, phrase: &str) -> Option<&[(String, u64)]> {
        self.pairs.get(phrase).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max_key_words(&self) -> usize {
        self.max_key_words
    }

    /// Picks the candidate maximizing count × Π smoothed P(word); first listed wins ties.
    fn best<'a>(&self, cands: &'a [(String, u64)], dict: &Dictionary) -> &'a str {
        let mut best: Option<(&str, f64)> = None;
        for (target, count) in cands {
            let score = (*count as f64).ln()
                + target
                    .split(' ')
                    .map(|w| dict.smoothed_probability(w).ln())
                    .sum::<f64>();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((target, score));
            }
        }
        best.map(|(t, _)| t).unwrap_or_default()
    }
}

fn normalize_phrase(p: &str) -> String {
    p.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Greedy longest-match phrase replacement.
///
/// A span is only rewritten when at least one of its tokens is missing from
/// the dictionary, so in-dictionary tokens on their own never change.
pub fn normalize_tokens(
    tokens: &[String],
    map: &NormalizationMap,
    dict: &Dictionary,
) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'scan: while i < tokens.len() {
        let longest = map.max_key_words().min(tokens.len() - i);
        for len in (1..=longest).rev() {
            let span = &tokens[i..i + len];
            if span.iter().all(|t| dict.contains(t)) {
                continue;
            }
            let key = span.join(" ").to_lowercase();
            if let Some(cands) = map.get(&key) {
                out.extend(map.best(cands, dict).split(' ').map(str::to_string));
                i += len;
                continue 'scan;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    fn fixture() -> (NormalizationMap, Dictionary) {
        let map = NormalizationMap::from_entries([
            ("bldng", "building", 29u64),
            ("hlp", "help", 31),
            ("2mrw", "tomorrow", 38),
            ("ur", "your", 40),
            ("ur", "you are", 25),
            ("c u", "see you", 14),
            ("plz hlp", "please help", 12),
            ("plz", "please", 41),
        ])
        .unwrap();
        let dict = Dictionary::from_pairs([
            ("building", 195u64),
            ("help", 562),
            ("tomorrow", 100),
            ("your", 1000),
            ("you", 5000),
            ("are", 3000),
            ("see", 900),
            ("please", 300),
            ("fire", 200),
        ]);
        (map, dict)
    }

    #[test]
    fn normalization_table_example() {
        let (map, dict) = fixture();
        assert_eq!(
            normalize_tokens(&toks("bldng 4th flor , hlp"), &map, &dict),
            toks("building 4th flor , help")
        );
    }

    #[test]
    fn passthrough_and_single_entry() {
        let (map, dict) = fixture();
        assert_eq!(normalize_tokens(&toks("fire"), &map, &dict), toks("fire"));
        let single = NormalizationMap::from_entries([("2mrw", "tomorrow", 1u64)]).unwrap();
        assert_eq!(
            normalize_tokens(&toks("2mrw"), &single, &Dictionary::default()),
            toks("tomorrow")
        );
        assert!(normalize_tokens(&[], &map, &dict).is_empty());
    }

    #[test]
    fn weighted_choice_and_longest_match() {
        let (map, dict) = fixture();
        // count 40 x P(your) beats 25 x P(you) x P(are)
        assert_eq!(normalize_tokens(&toks("ur"), &map, &dict), toks("your"));
        assert_eq!(
            normalize_tokens(&toks("plz hlp now"), &map, &dict),
            toks("please help now")
        );
        assert_eq!(normalize_tokens(&toks("c u"), &map, &dict), toks("see you"));
    }

    #[test]
    fn map_validation() {
        assert!(NormalizationMap::from_entries([("a", "a", 1u64)]).is_err());
        assert!(NormalizationMap::from_entries([("a", "b", 0u64)]).is_err());
        assert!(NormalizationMap::from_entries([("a", "a", 1u64), ("a", "b", 1)]).is_ok());
        let m = NormalizationMap::parse("# c\nHLP\thelp\t3\nhlp\thelp\t2\n").unwrap();
        assert_eq!(m.get("hlp"), Some(&[("help".to_string(), 5)][..]));
        assert!(matches!(
            NormalizationMap::parse("hlp\thelp"),
            Err(PreprocessError::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn dictionary_tokens_untouched(idx in prop::collection::vec(0usize..9, 0..8)) {
            let (map, dict) = fixture();
            let words: Vec<&str> = dict.words().collect();
            let tokens: Vec<String> = idx.iter().map(|&i| words[i % words.len()].to_string()).collect();
            prop_assert_eq!(normalize_tokens(&tokens, &map, &dict), tokens);
        }
    }
}
