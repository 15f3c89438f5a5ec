use serde::{Deserialize, Serialize};

use crate::features::Vocabulary;

/// Features ordered by information gain, highest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRanking {
    pub label_entropy: f64,
    pub entries: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloudEntry {
    pub term: String,
    pub weight: f64,
}

/// Shannon entropy in bits of a count histogram.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// `IG(f) = H(label) − H(label | f present/absent)` over binarized occurrence.
pub fn information_gain<S: AsRef<str>>(
    docs: &[Vec<S>],
    labels: &[usize],
    n_classes: usize,
    vocab: &Vocabulary,
) -> AttributeRanking {
    let n_classes = n_classes.max(labels.iter().max().map_or(0, |m| m + 1));
    let mut class_totals = vec![0.0f64; n_classes];
    for &l in labels {
        class_totals[l] += 1.0;
    }
    let h = entropy(&class_totals);
    let n = labels.len() as f64;

    // present[feature][class]
    let mut present = vec![vec![0.0f64; n_classes]; vocab.len()];
    for (doc, &label) in docs.iter().zip(labels) {
        for &(i, _) in vocab.vectorize(doc).entries() {
            present[i][label] += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = present
        .iter()
        .enumerate()
        .map(|(i, with)| {
            let without: Vec<f64> = class_totals.iter().zip(with).map(|(t, w)| t - w).collect();
            let n_with: f64 = with.iter().sum();
            let n_without = n - n_with;
            let conditional = if n > 0.0 {
                (n_with / n) * entropy(with) + (n_without / n) * entropy(&without)
            } else {
                0.0
            };
            (i, (h - conditional).clamp(0.0, h))
        })
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    AttributeRanking {
        label_entropy: h,
        entries: entries
            .into_iter()
            .map(|(i, s)| (vocab.features()[i].clone(), s))
            .collect(),
    }
}

/// Top `top_k` terms with weights scaled by the best score into (0, 1].
///
/// Zero-score terms are left out unless every score is zero, in which case
/// all terms get weight 1. `top_k` larger than the ranking is clamped.
pub fn export_wordcloud(ranking: &AttributeRanking, top_k: usize) -> Vec<WordCloudEntry> {
    let top = &ranking.entries[..top_k.min(ranking.entries.len())];
    let max = top.iter().map(|e| e.1).fold(0.0f64, f64::max);
    top.iter()
        .filter(|e| max == 0.0 || e.1 > 0.0)
        .map(|(term, score)| WordCloudEntry {
            term: term.clone(),
            weight: if max == 0.0 { 1.0 } else { score / max },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use proptest::prelude::*;

    fn docs(xs: &[&str]) -> Vec<Vec<String>> {
        xs.iter()
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect()
    }

    fn score(r: &AttributeRanking, term: &str) -> f64 {
        r.entries.iter().find(|e| e.0 == term).unwrap().1
    }

    #[test]
    fn predictive_and_constant_features() {
        let d = docs(&["fire always", "fire always", "sale always", "calm always"]);
        let labels = [0, 0, 1, 1];
        let vocab = Vocabulary::fit(&d, FeatureConfig::unigrams()).unwrap();
        let r = information_gain(&d, &labels, 2, &vocab);
        assert!((r.label_entropy - 1.0).abs() < 1e-12);
        assert!((score(&r, "fire") - 1.0).abs() < 1e-9);
        assert_eq!(score(&r, "always"), 0.0);
        assert_eq!(r.entries[0].0, "fire");
        // "sale" in one negative doc: 1 - (1/4·0 + 3/4·H(2/3, 1/3))
        let h = -(2.0f64 / 3.0) * (2.0f64 / 3.0).log2() - (1.0f64 / 3.0) * (1.0f64 / 3.0).log2();
        assert!((score(&r, "sale") - (1.0 - 0.75 * h)).abs() < 1e-12);
    }

    #[test]
    fn absent_feature_scores_zero() {
        let d = docs(&["a b", "c d"]);
        let vocab = Vocabulary::fit(&docs(&["a b c d zzz"]), FeatureConfig::unigrams()).unwrap();
        let r = information_gain(&d, &[0, 1], 2, &vocab);
        assert_eq!(score(&r, "zzz"), 0.0);
    }

    #[test]
    fn wordcloud_export() {
        let r = AttributeRanking {
            label_entropy: 1.0,
            entries: vec![("fire".into(), 1.0), ("sale".into(), 0.0)],
        };
        assert_eq!(
            export_wordcloud(&r, 1),
            vec![WordCloudEntry { term: "fire".into(), weight: 1.0 }]
        );
        let flat = AttributeRanking {
            label_entropy: 1.0,
            entries: vec![("a".into(), 0.3), ("b".into(), 0.3)],
        };
        assert!(export_wordcloud(&flat, 2).iter().all(|e| e.weight == 1.0));
        let halves = AttributeRanking {
            label_entropy: 1.0,
            entries: vec![("a".into(), 0.4), ("b".into(), 0.2)],
        };
        assert_eq!(export_wordcloud(&halves, 10)[1].weight, 0.5);
    }

    proptest! {
        #[test]
        fn bounded_and_label_symmetric(raw in prop::collection::vec((prop::collection::vec("[a-d]", 1..4), 0usize..2), 2..12)) {
            let d: Vec<Vec<String>> = raw.iter().map(|(t, _)| t.clone()).collect();
            let labels: Vec<usize> = raw.iter().map(|(_, l)| *l).collect();
            let renamed: Vec<usize> = labels.iter().map(|l| 1 - l).collect();
            let vocab = Vocabulary::fit(&d, FeatureConfig::unigrams()).unwrap();
            let a = information_gain(&d, &labels, 2, &vocab);
            let b = information_gain(&d, &renamed, 2, &vocab);
            for (term, s) in &a.entries {
                prop_assert!(*s >= 0.0 && *s <= a.label_entropy + 1e-12);
                let other = b.entries.iter().find(|e| &e.0 == term).unwrap().1;
                prop_assert!((s - other).abs() < 1e-12);
            }
        }
    }
}
