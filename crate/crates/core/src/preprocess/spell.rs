use std::cmp::Reverse;

use super::Dictionary;

pub const MAX_EDIT_DISTANCE: usize = 2;

/// Unrestricted Damerau-Levenshtein distance (adjacent transpositions allowed).
pub fn damerau_levenshtein(a: &[char], b: &[char]) -> usize {
    let (m, n) = (a.len(), b.len());
    let inf = m + n;
    let width = n + 2;
    let mut d = vec![0usize; (m + 2) * width];
    let at = |i: usize, j: usize| i * width + j;
    d[at(0, 0)] = inf;
    for i in 0..=m {
        d[at(i + 1, 0)] = inf;
        d[at(i + 1, 1)] = i;
    }
    for j in 0..=n {
        d[at(0, j + 1)] = inf;
        d[at(1, j + 1)] = j;
    }
    // last row (1-based) in which each character of `a` was seen
    let mut last_row: Vec<(char, usize)> = Vec::new();
    for i in 1..=m {
        let mut last_match_col = 0;
        for j in 1..=n {
            let i1 = last_row
                .iter()
                .find(|(c, _)| *c == b[j - 1])
                .map_or(0, |&(_, r)| r);
            let j1 = last_match_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_match_col = j;
                0
            } else {
                1
            };
            let best = (d[at(i, j)] + cost)
                .min(d[at(i + 1, j)] + 1)
                .min(d[at(i, j + 1)] + 1)
                .min(d[at(i1, j1)] + (i - i1 - 1) + 1 + (j - j1 - 1));
            d[at(i + 1, j + 1)] = best;
        }
        match last_row.iter_mut().find(|(c, _)| *c == a[i - 1]) {
            Some(entry) => entry.1 = i,
            None => last_row.push((a[i - 1], i)),
        }
    }
    d[at(m + 1, n + 1)]
}

/// Consonant skeleton: first letter, then non-vowels, doubled letters collapsed.
/// `flor`, `floor` and `flour` share `flr`; `for` is `fr`.
pub fn consonant_skeleton(word: &str) -> String {
    let mut out = String::new();
    for (i, c) in word.chars().flat_map(char::to_lowercase).enumerate() {
        if i > 0 && matches!(c, 'a' | 'e' | 'i' | 'o' | 'u') {
            continue;
        }
        if out.ends_with(c) {
            continue;
        }
        out.push(c);
    }
    out
}

/// Sort key of a candidate: distance, skeleton mismatch, frequency, spelling.
type Rank<'a> = (usize, bool, Reverse<u64>, &'a str);

/// Best dictionary replacement for an out-of-dictionary word, if any lies within
/// distance 2.
///
/// Ranking: smaller edit distance, then a matching consonant skeleton, then
/// higher frequency, then lexicographic order.
pub fn best_correction<'d>(word: &str, dict: &'d Dictionary) -> Option<&'d str> {
    let chars: Vec<char> = word.chars().flat_map(char::to_lowercase).collect();
    let skeleton = consonant_skeleton(word);
    let len = chars.len();
    let mut best: Option<(Rank<'_>, &str)> = None;
    let lo = len.saturating_sub(MAX_EDIT_DISTANCE);
    let mut buf = Vec::new();
    let hist = ascii_histogram(&chars);
    for cand in dict.words_with_len(lo, len + MAX_EDIT_DISTANCE) {
        if let (Some(a), Some(b)) = (&hist, ascii_histogram_str(cand)) {
            if histogram_gap(a, &b) > 2 * MAX_EDIT_DISTANCE {
                continue;
            }
        }
        buf.clear();
        buf.extend(cand.chars());
        let dist = damerau_levenshtein(&chars, &buf);
        if dist > MAX_EDIT_DISTANCE {
            continue;
        }
        let key = (
            dist,
            consonant_skeleton(cand) != skeleton,
            Reverse(dict.frequency(cand)),
            cand,
        );
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, cand));
        }
    }
    best.map(|(_, w)| w)
}

// Each edit moves the letter histogram by at most 2 in L1, so a larger gap
// rules a candidate out without running the full distance.
fn ascii_histogram(chars: &[char]) -> Option<[u8; 128]> {
    let mut h = [0u8; 128];
    for &c in chars {
        if !c.is_ascii() {
            return None;
        }
        h[c as usize] = h[c as usize].saturating_add(1);
    }
    Some(h)
}

fn ascii_histogram_str(word: &str) -> Option<[u8; 128]> {
    let mut h = [0u8; 128];
    for b in word.bytes() {
        if !b.is_ascii() {
            return None;
        }
        h[b as usize] = h[b as usize].saturating_add(1);
    }
    Some(h)
}

fn histogram_gap(a: &[u8; 128], b: &[u8; 128]) -> usize {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as usize).sum()
}

/// Replaces misspelled alphabetic tokens with their best dictionary correction.
///
/// Tokens already in the dictionary, tokens with any non-ASCII-letter character
/// and tokens without a candidate within distance 2 pass through unchanged.
pub fn spell_correct(tokens: &[String], dict: &Dictionary) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            if t.is_empty() || dict.contains(t) || !t.chars().all(|c| c.is_ascii_alphabetic()) {
                return t.clone();
            }
            best_correction(t, dict).map_or_else(|| t.clone(), str::to_string)
        })
        .collect()
}
