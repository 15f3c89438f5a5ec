use super::Dictionary;

/// Windows beyond this count skip the dictionary search (2^16 candidates).
pub const MAX_SEARCH_WINDOWS: usize = 16;

/// Maximal runs of one repeated character: `(char, run length)`.
fn runs(token: &str) -> Vec<(char, usize)> {
    let mut out: Vec<(char, usize)> = Vec::new();
    for c in token.chars() {
        match out.last_mut() {
            Some((last, n)) if *last == c => *n += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

fn render(runs: &[(char, usize)]) -> String {
    runs.iter()
        .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
        .collect()
}

/// Candidate ordering: higher frequency, then fewer letters, then lexicographic.
fn better(dict: &Dictionary, cand: &str, best: Option<&(String, u64)>) -> Option<u64> {
    let freq = dict.frequency(cand);
    match best {
        None => Some(freq),
        Some((b, bf)) => {
            let key = (std::cmp::Reverse(freq), cand.chars().count(), cand);
            let cur = (std::cmp::Reverse(*bf), b.chars().count(), b.as_str());
            (key < cur).then_some(freq)
        }
    }
}

/// Undoes stretched spellings like `fiiiirreeeeee` → `fire`.
///
/// Runs of three or more identical characters are cut to two; each of the
/// resulting double-character windows is then tried at one or two characters
/// and the best dictionary hit wins. Without a hit the run-compressed form
/// is returned.
pub fn compress_token(token: &str, dict: &Dictionary) -> String {
    if dict.contains(token) {
        return token.to_string();
    }
    let mut compressed = runs(token);
    for run in &mut compressed {
        run.1 = run.1.min(2);
    }
    let windows: Vec<usize> = compressed
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1 == 2)
        .map(|(i, _)| i)
        .collect();
    if windows.len() > MAX_SEARCH_WINDOWS {
        return render(&compressed);
    }

    let mut best: Option<(String, u64)> = None;
    let mut candidate = compressed.clone();
    for mask in 0u32..(1u32 << windows.len()) {
        for (bit, &w) in windows.iter().enumerate() {
            candidate[w].1 = if mask & (1 << bit) != 0 { 1 } else { 2 };
        }
        let text = render(&candidate);
        if !dict.contains(&text) {
            continue;
        }
        if let Some(freq) = better(dict, &text, best.as_ref()) {
            best = Some((text, freq));
        }
    }
    match best {
        Some((word, _)) => word,
        None => render(&compressed),
    }
}
