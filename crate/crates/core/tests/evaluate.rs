mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use flarewatch_core::classify::{ClassifierSpec, MarginParams};
use flarewatch_core::dataset::stage1_classes;
use flarewatch_core::evaluate::{
    cross_validate, export_wordcloud, generate_synthetic_corpus, information_gain, make_folds, CvConfig,
    FoldView, SynthSpec,
};
use flarewatch_core::features::FeatureConfig;
use flarewatch_core::Vocabulary;

fn specs() -> [ClassifierSpec; 2] {
    [
        ClassifierSpec::MaxMargin(MarginParams::default()),
        ClassifierSpec::NaiveBayes { alpha: 1.0 },
    ]
}

#[test]
fn template_words_survive_preprocessing() {
    let (dict, map) = common::bundled_tables();
    let d = generate_synthetic_corpus(&SynthSpec::default()).unwrap();
    let corpus = d.tokenize(&dict, &map);
    for (e, tokens) in d.examples.iter().zip(&corpus.docs) {
        let raw: Vec<&str> = e.text.split_whitespace().collect();
        assert_eq!(tokens, &raw, "{}", e.text);
    }
}

#[test]
fn noisy_text_is_mostly_recovered() {
    let (dict, map) = common::bundled_tables();
    let clean = generate_synthetic_corpus(&SynthSpec::default().with_size(400, 160)).unwrap();
    let noisy = generate_synthetic_corpus(&SynthSpec::default().with_size(400, 160).with_noise(0.5)).unwrap();
    let a = clean.tokenize(&dict, &map);
    let b = noisy.tokenize(&dict, &map);
    let changed = clean.examples.iter().zip(&noisy.examples).filter(|(x, y)| x.text != y.text).count();
    let recovered = a.docs.iter().zip(&b.docs).zip(clean.examples.iter().zip(&noisy.examples))
        .filter(|(_, (x, y))| x.text != y.text)
        .filter(|((p, q), _)| p == q)
        .count();
    assert!(changed > 100, "{changed}");
    assert!(recovered as f64 / changed as f64 > 0.6, "{recovered}/{changed}");
}

#[test]
fn noise_free_stage1_is_perfect() {
    let (dict, map) = common::bundled_tables();
    let d = generate_synthetic_corpus(&SynthSpec::default()).unwrap();
    let corpus = d.tokenize(&dict, &map);
    let plan = make_folds(&corpus.stage1, 2, 10, 42).unwrap();
    for spec in specs() {
        let started = Instant::now();
        let cfg = CvConfig { features: FeatureConfig::unigrams(), classifier: spec };
        let r = cross_validate(&corpus.docs, &corpus.stage1, &stage1_classes(), &cfg, &plan, None).unwrap();
        eprintln!("{spec:?}: f1 {} in {:?}", r.f1, started.elapsed());
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.confusion[0].iter().sum::<u64>(), 1313);
        assert_eq!(r.confusion[1].iter().sum::<u64>(), 1887);
    }
}

#[test]
fn noise_free_stage2_is_perfect() {
    let (dict, map) = common::bundled_tables();
    let spec = SynthSpec::default();
    let d = generate_synthetic_corpus(&spec).unwrap();
    let categories = spec.category_names();
    let (docs, labels) = d.tokenize(&dict, &map).stage2(&categories).unwrap();
    let plan = make_folds(&labels, categories.len(), 10, 42).unwrap();
    for classifier in specs() {
        let cfg = CvConfig { features: FeatureConfig::trigrams(), classifier };
        let r = cross_validate(&docs, &labels, &categories, &cfg, &plan, None).unwrap();
        assert_eq!(r.f1, 1.0, "{classifier:?}");
        assert_eq!(r.per_class.len(), categories.len());
    }
}

#[test]
fn label_noise_lowers_f1_into_band() {
    let (dict, map) = common::bundled_tables();
    let d = generate_synthetic_corpus(&SynthSpec::default().with_noise(0.2)).unwrap();
    let corpus = d.tokenize(&dict, &map);
    let plan = make_folds(&corpus.stage1, 2, 10, 42).unwrap();
    for spec in specs() {
        let cfg = CvConfig { features: FeatureConfig::unigrams(), classifier: spec };
        let r = cross_validate(&corpus.docs, &corpus.stage1, &stage1_classes(), &cfg, &plan, None).unwrap();
        eprintln!("{spec:?}: noisy f1 {}", r.f1);
        assert!((0.70..=0.95).contains(&r.f1), "{spec:?}: {}", r.f1);
    }
}

#[test]
fn no_fold_vocabulary_sees_its_held_out_sentinel() {
    let (dict, map) = common::bundled_tables();
    let d = generate_synthetic_corpus(&SynthSpec::default().with_size(600, 250)).unwrap();
    let mut corpus = d.tokenize(&dict, &map);
    let plan = make_folds(&corpus.stage1, 2, 10, 5).unwrap();
    for (i, doc) in corpus.docs.iter_mut().enumerate() {
        doc.push(format!("sentinel{}", plan.assignments[i]));
    }
    let checked = AtomicUsize::new(0);
    let probe = |view: &FoldView<'_>| {
        assert!(view.vocab.get(&format!("sentinel{}", view.fold)).is_none());
        checked.fetch_add(1, Ordering::Relaxed);
    };
    let cfg = CvConfig {
        features: FeatureConfig::unigrams(),
        classifier: ClassifierSpec::NaiveBayes { alpha: 1.0 },
    };
    cross_validate(&corpus.docs, &corpus.stage1, &stage1_classes(), &cfg, &plan, Some(&probe)).unwrap();
    assert_eq!(checked.into_inner(), 10);
}

#[test]
fn top_ranked_term_separates_classes() {
    let (dict, map) = common::bundled_tables();
    let spec = SynthSpec::default().with_size(800, 400);
    let d = generate_synthetic_corpus(&spec).unwrap();
    let corpus = d.tokenize(&dict, &map);
    let vocab = Vocabulary::fit(&corpus.docs, FeatureConfig::unigrams()).unwrap();
    let ranking = information_gain(&corpus.docs, &corpus.stage1, 2, &vocab);
    // The best single term appears much more often in one class than the other.
    let top = &ranking.entries[0].0;
    let rate = |class: usize| {
        let docs: Vec<_> = corpus.docs.iter().zip(&corpus.stage1).filter(|(_, &l)| l == class).collect();
        docs.iter().filter(|(d, _)| d.contains(top)).count() as f64 / docs.len() as f64
    };
    assert!((rate(0) - rate(1)).abs() > 0.3, "{top}: {} vs {}", rate(0), rate(1));
    assert!(ranking.entries[0].1 <= ranking.label_entropy + 1e-12);
    let cloud = export_wordcloud(&ranking, 10);
    assert_eq!(cloud[0].weight, 1.0);
    assert!(cloud.windows(2).all(|w| w[0].weight >= w[1].weight));
}

#[test]
fn report_serializes_with_expected_keys() {
    let (dict, map) = common::bundled_tables();
    let d = generate_synthetic_corpus(&SynthSpec::default().with_size(200, 80)).unwrap();
    let corpus = d.tokenize(&dict, &map);
    let plan = make_folds(&corpus.stage1, 2, 5, 1).unwrap();
    let cfg = CvConfig {
        features: FeatureConfig::unigrams(),
        classifier: ClassifierSpec::NaiveBayes { alpha: 1.0 },
    };
    let r = cross_validate(&corpus.docs, &corpus.stage1, &stage1_classes(), &cfg, &plan, None).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    for key in ["precision", "recall", "f1", "confusion", "per_fold", "per_class"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}
