//! One PASS/FAIL line per acceptance criterion. Exits non-zero on any FAIL.

mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Cursor, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use common::*;
use flarewatch_core::classify::{train_nb, ClassifierSpec, MarginParams};
use flarewatch_core::dataset::stage1_classes;
use flarewatch_core::evaluate::{
    cross_validate, generate_synthetic_corpus, information_gain, make_folds, Averaging, ConfusionMatrix, CvConfig,
    FoldView, SynthSpec,
};
use flarewatch_core::features::FeatureConfig;
use flarewatch_core::pipeline::{process_post, run_stream, Clock, JsonLinesSource, DEFAULT_QUEUE_CAPACITY};
use flarewatch_core::preprocess::{clean, compress_token, normalize_tokens, spell_correct, tokenize};
use flarewatch_core::store::IncidentStore;
use flarewatch_core::{Dictionary, Incident, NormalizationMap, RawPost, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const CLEAN_BUDGET: Duration = Duration::from_millis(1);
const NB_TOLERANCE: f64 = 1e-12;
const CV_BUDGET: Duration = Duration::from_secs(30);
const NOISY_BAND: (f64, f64) = (0.70, 0.95);
const NOISE_RATE: f64 = 0.2;
const ARITHMETIC_TOLERANCE: f64 = 1e-9;
const IG_TOLERANCE: f64 = 1e-9;
const POST_BUDGET: Duration = Duration::from_millis(50);
const RANDOM_INCIDENTS: usize = 1000;

const SAMPLE_POST: &str = "@user heellllllppp!!! Firrreee at powai, lake lucene bldng 4th flor, hlp! #fire";
const SAMPLE_CLEANED: &str = "heellllllppp Firrreee at powai , lake lucene bldng 4th flor , hlp";

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn tables() -> (Dictionary, NormalizationMap) {
    let d = data_dir();
    (
        Dictionary::load(d.join("dictionary.tsv")).unwrap(),
        NormalizationMap::load(d.join("normalization.tsv")).unwrap(),
    )
}

fn cleaning_sample() -> Outcome {
    let out = clean(SAMPLE_POST);
    ensure(out == SAMPLE_CLEANED, format!("got {out:?}"))?;
    let runs = 1000;
    let started = Instant::now();
    for _ in 0..runs {
        std::hint::black_box(clean(std::hint::black_box(SAMPLE_POST)));
    }
    let per_call = started.elapsed() / runs;
    ensure(per_call < CLEAN_BUDGET, format!("{per_call:?} per call"))?;
    Ok(format!("exact match, {per_call:?} per call"))
}

fn compression_samples() -> Outcome {
    let (dict, _) = tables();
    let got: Vec<String> = ["fiiiirreeeeee", "helllllp", "sttuuuuuccckk"]
        .iter()
        .map(|t| compress_token(t, &dict))
        .collect();
    ensure(got == ["fire", "help", "stuck"], format!("got {got:?}"))?;
    Ok(got.join(" "))
}

fn normalization_sample() -> Outcome {
    let (dict, map) = tables();
    let tokens = tokenize(&clean("bldng 4th flor, hlp"));
    let normalized = normalize_tokens(&tokens, &map, &dict);
    let joined = normalized.join(" ");
    ensure(joined == "building 4th flor , help", format!("normalized {joined:?}"))?;
    let corrected = spell_correct(&normalized, &dict);
    ensure(corrected[2] == "floor", format!("corrected {corrected:?}"))?;
    Ok(format!("{joined:?} then {:?}", corrected.join(" ")))
}

/// Joint probabilities by direct multiplication, normalized over classes.
fn nb_oracle(docs: &[Vec<String>], labels: &[usize], k: usize, vocab: &[String], query: &[String]) -> Vec<f64> {
    let v = vocab.len() as f64;
    let joint: Vec<f64> = (0..k)
        .map(|c| {
            let in_class: Vec<&Vec<String>> = docs.iter().zip(labels).filter(|(_, &l)| l == c).map(|(d, _)| d).collect();
            let prior = in_class.len() as f64 / docs.len() as f64;
            let total = in_class.iter().map(|d| d.len()).sum::<usize>() as f64;
            let mut p = prior;
            for w in query.iter().filter(|w| vocab.contains(w)) {
                let count = in_class.iter().flat_map(|d| d.iter()).filter(|t| *t == w).count() as f64;
                p *= (count + 1.0) / (total + v);
            }
            p
        })
        .collect();
    let z: f64 = joint.iter().sum();
    joint.iter().map(|p| p / z).collect()
}

fn nb_oracle_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2017);
    let words = ["fire", "help", "smoke", "sale", "movie", "road"];
    let mut cases = 0;
    let mut worst = 0.0f64;
    for n_docs in 1..=5usize {
        for vocab_cap in 1..=6usize {
            for k in 2..=3usize {
                if n_docs < k {
                    continue;
                }
                for _ in 0..20 {
                    let docs: Vec<Vec<String>> = (0..n_docs)
                        .map(|_| {
                            (0..rng.random_range(1..=4))
                                .map(|_| words[rng.random_range(0..vocab_cap)].to_string())
                                .collect()
                        })
                        .collect();
                    // Every class gets at least one document.
                    let mut labels: Vec<usize> = (0..n_docs).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
                    for i in (1..labels.len()).rev() {
                        labels.swap(i, rng.random_range(0..=i));
                    }
                    let vocab = Vocabulary::fit(&docs, FeatureConfig::unigrams()).map_err(|e| e.to_string())?;
                    let classes: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
                    let examples: Vec<_> = docs.iter().zip(&labels).map(|(d, &l)| (vocab.vectorize(d), l)).collect();
                    let model = train_nb(&examples, &classes, vocab.len(), 1.0).map_err(|e| e.to_string())?;
                    let query: Vec<String> = (0..rng.random_range(0..=5))
                        .map(|_| words[rng.random_range(0..words.len())].to_string())
                        .collect();
                    let got = model.predict(&vocab.vectorize(&query)).map_err(|e| e.to_string())?.posteriors();
                    let want = nb_oracle(&docs, &labels, k, vocab.features(), &query);
                    for (g, w) in got.iter().zip(&want) {
                        worst = worst.max((g - w).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    ensure(worst <= NB_TOLERANCE, format!("max deviation {worst:e} over {cases} corpora"))?;
    Ok(format!("{cases} corpora, max deviation {worst:e}"))
}

fn classifier_specs() -> [(&'static str, ClassifierSpec); 2] {
    [
        ("svm", ClassifierSpec::MaxMargin(MarginParams::default())),
        ("nb", ClassifierSpec::NaiveBayes { alpha: 1.0 }),
    ]
}

fn synthetic_stage1(spec: &SynthSpec) -> (Vec<Vec<String>>, Vec<usize>) {
    let (dict, map) = tables();
    let corpus = generate_synthetic_corpus(spec).unwrap().tokenize(&dict, &map);
    (corpus.docs, corpus.stage1)
}

fn synthetic_clean() -> Outcome {
    let (docs, labels) = synthetic_stage1(&SynthSpec::default());
    let positives = labels.iter().filter(|&&l| l == 0).count();
    ensure(docs.len() == 3200 && positives == 1313, format!("{} docs, {positives} positive", docs.len()))?;
    let plan = make_folds(&labels, 2, 10, 42).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for (name, classifier) in classifier_specs() {
        let started = Instant::now();
        let cfg = CvConfig { features: FeatureConfig::unigrams(), classifier };
        let r = cross_validate(&docs, &labels, &stage1_classes(), &cfg, &plan, None).map_err(|e| e.to_string())?;
        let took = started.elapsed();
        ensure(r.f1 == 1.0, format!("{name} f1 {}", r.f1))?;
        ensure(took < CV_BUDGET, format!("{name} took {took:?}"))?;
        notes.push(format!("{name} f1 {} in {:.1?}", r.f1, took));
    }
    Ok(notes.join(", "))
}

fn synthetic_noisy() -> Outcome {
    let (docs, labels) = synthetic_stage1(&SynthSpec::default().with_noise(NOISE_RATE));
    let plan = make_folds(&labels, 2, 10, 42).map_err(|e| e.to_string())?;
    let mut scores = BTreeMap::new();
    for (name, classifier) in classifier_specs() {
        let cfg = CvConfig { features: FeatureConfig::unigrams(), classifier };
        let r = cross_validate(&docs, &labels, &stage1_classes(), &cfg, &plan, None).map_err(|e| e.to_string())?;
        ensure(
            (NOISY_BAND.0..=NOISY_BAND.1).contains(&r.f1),
            format!("{name} f1 {:.4} outside {NOISY_BAND:?}", r.f1),
        )?;
        scores.insert(name, r.f1);
    }
    let order = if scores["svm"] >= scores["nb"] { "svm >= nb" } else { "nb > svm" };
    Ok(format!("svm {:.4}, nb {:.4}, ordering {order}", scores["svm"], scores["nb"]))
}

fn leakage_probe() -> Outcome {
    let (mut docs, labels) = synthetic_stage1(&SynthSpec::default());
    let plan = make_folds(&labels, 2, 10, 42).map_err(|e| e.to_string())?;
    for (i, doc) in docs.iter_mut().enumerate() {
        doc.push(format!("heldout{}", plan.assignments[i]));
    }
    let clean_folds = AtomicUsize::new(0);
    let probe = |view: &FoldView<'_>| {
        if view.vocab.get(&format!("heldout{}", view.fold)).is_none() {
            clean_folds.fetch_add(1, Ordering::Relaxed);
        }
    };
    for (name, classifier) in classifier_specs() {
        clean_folds.store(0, Ordering::Relaxed);
        let cfg = CvConfig { features: FeatureConfig::unigrams(), classifier };
        cross_validate(&docs, &labels, &stage1_classes(), &cfg, &plan, Some(&probe)).map_err(|e| e.to_string())?;
        let n = clean_folds.load(Ordering::Relaxed);
        ensure(n == 10, format!("{name}: {n}/10 folds free of held-out vocabulary"))?;
    }
    Ok("10/10 folds for both classifiers".into())
}

fn f1_arithmetic() -> Outcome {
    let mut m = ConfusionMatrix::new(vec!["emergency".into(), "non-emergency".into()]);
    for (actual, predicted, n) in [(0, 0, 8), (1, 0, 2), (0, 1, 2), (1, 1, 8)] {
        for _ in 0..n {
            m.record(actual, predicted);
        }
    }
    let s = m.scores(Averaging::Positive);
    for (name, v) in [("precision", s.precision), ("recall", s.recall), ("f1", s.f1)] {
        ensure((v - 0.8).abs() <= ARITHMETIC_TOLERANCE, format!("{name} {v}"))?;
    }
    Ok(format!("P={:.6} R={:.6} F1={:.6}", s.precision, s.recall, s.f1))
}

fn information_gain_bits() -> Outcome {
    let docs: Vec<Vec<&str>> = (0..8)
        .map(|i| if i % 2 == 0 { vec!["signal", "always"] } else { vec!["always"] })
        .collect();
    let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
    let vocab = Vocabulary::fit(&docs, FeatureConfig::unigrams()).map_err(|e| e.to_string())?;
    let ranking = information_gain(&docs, &labels, 2, &vocab);
    let score = |t: &str| ranking.entries.iter().find(|(f, _)| f == t).map(|e| e.1).unwrap_or(f64::NAN);
    let (signal, constant) = (score("signal"), score("always"));
    ensure((signal - 1.0).abs() <= IG_TOLERANCE, format!("predictive feature {signal}"))?;
    ensure(constant.abs() <= IG_TOLERANCE, format!("constant feature {constant}"))?;
    ensure((ranking.label_entropy - 1.0).abs() <= IG_TOLERANCE, format!("H(label) {}", ranking.label_entropy))?;
    Ok(format!("predictive {signal}, constant {constant}"))
}

fn bundled_context() -> flarewatch_core::PipelineContext {
    let env = test_env(DEFAULT_QUEUE_CAPACITY);
    let contacts = flarewatch_server::Contacts::load(data_dir().join("contacts.toml")).unwrap();
    env.cfg.pipeline_context(&contacts).unwrap()
}

fn end_to_end() -> Outcome {
    let ctx = bundled_context().with_clock(Clock::PostTime);
    let fixture = std::fs::read_to_string(data_dir().join("fixtures/stream.jsonl")).unwrap();
    let golden = std::fs::read_to_string(data_dir().join("fixtures/golden_incidents.jsonl")).unwrap();
    let mut out: Vec<Incident> = Vec::new();
    let summary = run_stream(JsonLinesSource::new(Cursor::new(fixture.clone())), &ctx, &mut out, DEFAULT_QUEUE_CAPACITY)
        .map_err(|e| e.to_string())?;
    let produced: String = out.iter().map(|i| serde_json::to_string(i).unwrap() + "\n").collect();
    ensure(produced == golden, format!("output differs from golden:\n{produced}"))?;
    ensure(summary.is_conserved(), format!("not conserved: {summary:?}"))?;
    ensure(summary.ingested == 20, format!("ingested {}", summary.ingested))?;
    let posts: Vec<RawPost> = fixture.lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
    let mut worst = Duration::ZERO;
    for p in &posts {
        let started = Instant::now();
        let _ = process_post(p, &ctx);
        worst = worst.max(started.elapsed());
    }
    ensure(worst < POST_BUDGET, format!("slowest post {worst:?}"))?;
    Ok(format!(
        "{} incidents match golden, slowest post {worst:.2?}, conserved over {} posts",
        out.len(),
        summary.ingested
    ))
}

fn crash_recovery() -> Outcome {
    let env = test_env(DEFAULT_QUEUE_CAPACITY);
    let stream = env.dir.path().join("stream.jsonl");
    let mut file = std::fs::File::create(&stream).unwrap();
    for copy in 0..4 {
        for mut p in fixture_posts() {
            p.id = format!("{}-{copy}", p.id);
            writeln!(file, "{}", serde_json::to_string(&p).unwrap()).unwrap();
        }
    }
    drop(file);
    let log = env.dir.path().join("incidents.log");
    let mut child = Command::new(env!("CARGO_BIN_EXE_flarewatch"))
        .arg("--config")
        .arg(&env.config_path)
        .args(["replay", "--rate", "40", "--file"])
        .arg(&stream)
        .arg("--store")
        .arg(&log)
        .env("RUST_LOG", "error")
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut acked = Vec::new();
    for line in BufReader::new(child.stdout.take().unwrap()).lines() {
        if let Some(id) = line.map_err(|e| e.to_string())?.strip_prefix("ack ") {
            acked.push(id.to_string());
        }
        if acked.len() == 4 {
            break;
        }
    }
    child.kill().map_err(|e| e.to_string())?;
    child.wait().map_err(|e| e.to_string())?;
    ensure(acked.len() == 4, format!("only {} acks before exit", acked.len()))?;
    std::fs::OpenOptions::new()
        .append(true)
        .open(&log)
        .and_then(|mut f| f.write_all(b"{\"id\":\"torn"))
        .map_err(|e| e.to_string())?;
    let (store, report) = IncidentStore::open(&log).map_err(|e| e.to_string())?;
    let recovered = acked.iter().filter(|id| store.get(id).is_some()).count();
    ensure(recovered == acked.len(), format!("{recovered}/{} acked incidents recovered", acked.len()))?;
    ensure(report.torn_discarded == 1, format!("torn records discarded: {}", report.torn_discarded))?;
    Ok(format!("{recovered}/{} acked recovered, torn tail discarded", acked.len()))
}

async fn api_contract() -> Outcome {
    let env = test_env(DEFAULT_QUEUE_CAPACITY);
    let server = start(&env).await;
    let base = base(&server);
    let client = reqwest::Client::new();

    // Live delivery: N matching incidents, N events.
    let mut sse = SseClient::connect(&client, &format!("{base}/api/stream"), None).await;
    let accepted = post_all(&client, &base, &fixture_posts()).await;
    let expected = golden_incidents().len();
    let events = sse.collect(expected, Duration::from_secs(30)).await;
    let extra = sse.next(Duration::from_millis(700)).await;
    ensure(events.len() == expected && extra.is_none(), format!("{} events for {expected} incidents", events.len()))?;
    wait_ingested(&client, &base, accepted).await;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let categories = server.state.contacts.categories.clone();
    for _ in 0..RANDOM_INCIDENTS {
        server.state.store.append(&random_incident(&mut rng, &categories)).map_err(|e| e.to_string())?;
    }
    let total = RANDOM_INCIDENTS + expected;
    let mut failures = Vec::new();
    let mut check = |def: &str, body: &Value| {
        let errors = schema_errors(&schema_for(def), body);
        if !errors.is_empty() {
            failures.push(format!("{def}: {errors:?}"));
        }
    };
    let get = |path: String| {
        let client = client.clone();
        async move { client.get(path).send().await.unwrap().json::<Value>().await.unwrap() }
    };
    let list = get(format!("{base}/api/incidents?limit={total}")).await;
    ensure(list.as_array().map(Vec::len) == Some(total), "incident list length")?;
    check("IncidentList", &list);
    for item in list.as_array().unwrap().iter().step_by(50) {
        check("Incident", &get(format!("{base}/api/incidents/{}", item["id"].as_str().unwrap())).await);
    }
    for e in &events {
        check("IncidentEvent", &e.json());
    }
    check("ContactList", &get(format!("{base}/api/contacts")).await);
    check("ContactList", &get(format!("{base}/api/contacts?category=fire")).await);
    check("Categories", &get(format!("{base}/api/categories")).await);
    check("Preferences", &get(format!("{base}/api/preferences/acceptance")).await);
    check("Health", &get(format!("{base}/healthz")).await);
    check("Error", &get(format!("{base}/api/incidents/unknown")).await);
    server.stop().await;
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(format!("{total} incidents valid, {} live events for {expected} incidents", events.len()))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let took = started.elapsed();
    match result {
        Ok(detail) => {
            println!("PASS {name}: {detail} ({took:.2?})");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail} ({took:.2?})");
            false
        }
    }
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let results = [
        run("cleaning sample output", cleaning_sample),
        run("run compression samples", compression_samples),
        run("normalization and spell correction sample", normalization_sample),
        run("naive bayes enumeration oracle", nb_oracle_suite),
        run("synthetic cv noise-free", synthetic_clean),
        run("synthetic cv with label noise", synthetic_noisy),
        run("cv leakage probe", leakage_probe),
        run("f-score arithmetic", f1_arithmetic),
        run("information gain bits", information_gain_bits),
        run("end-to-end fixture replay", end_to_end),
        run("store crash recovery", crash_recovery),
        run("api contract", || runtime.block_on(api_contract())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
