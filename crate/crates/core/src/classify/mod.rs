//! Text classifiers and the two-stage emergency → category decision.

mod margin;
mod nb;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use margin::{train_margin, train_one_vs_rest, MarginParams, MaxMarginModel, OneVsRestModel};
pub use nb::{train_nb, NaiveBayesModel};

use crate::features::{FeatureConfig, FeatureVector, Vocabulary};

pub const EMERGENCY: &str = "emergency";
pub const NON_EMERGENCY: &str = "non-emergency";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("class {0:?} has no training examples")]
    MissingClass(String),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("vector dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model was trained on vocabulary {model} but vocabulary {vocab} was supplied")]
    VocabMismatch { model: String, vocab: String },
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dimension(expected: usize, x: &FeatureVector) -> Result<(), ClassifyError> {
    if x.dimension() != expected {
        return Err(ClassifyError::DimensionMismatch {
            expected,
            got: x.dimension(),
        });
    }
    Ok(())
}

/// Winning label plus the per-class score it was chosen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub label_index: usize,
    pub scores: Vec<(String, f64)>,
}

impl Prediction {
    /// Argmax with ties resolved toward the earlier class.
    pub fn from_scores(classes: &[String], scores: Vec<f64>) -> Self {
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        Self {
            label: classes[best].clone(),
            label_index: best,
            scores: classes.iter().cloned().zip(scores).collect(),
        }
    }

    pub fn score_of(&self, class: &str) -> Option<f64> {
        self.scores.iter().find(|(c, _)| c == class).map(|(_, s)| *s)
    }

    /// Class names paired with [`Prediction::posteriors`].
    pub fn posteriors_by_class(&self) -> Vec<(String, f64)> {
        self.scores.iter().map(|(c, _)| c.clone()).zip(self.posteriors()).collect()
    }

    /// Softmax of the scores; for Naive Bayes these are class posteriors.
    pub fn posteriors(&self) -> Vec<f64> {
        let max = self
            .scores
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.scores.iter().map(|(_, s)| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierFamily {
    NaiveBayes,
    MaxMargin,
}

impl std::str::FromStr for ClassifierFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nb" | "naive_bayes" => Ok(Self::NaiveBayes),
            "svm" | "margin" | "max_margin" => Ok(Self::MaxMargin),
            other => Err(format!("unknown classifier {other:?} (expected nb or svm)")),
        }
    }
}

/// Classifier choice with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierSpec {
    NaiveBayes { alpha: f64 },
    MaxMargin(MarginParams),
}

impl ClassifierSpec {
    pub fn default_for(family: ClassifierFamily) -> Self {
        match family {
            ClassifierFamily::NaiveBayes => Self::NaiveBayes { alpha: 1.0 },
            ClassifierFamily::MaxMargin => Self::MaxMargin(MarginParams::default()),
        }
    }

    pub fn family(&self) -> ClassifierFamily {
        match self {
            Self::NaiveBayes { .. } => ClassifierFamily::NaiveBayes,
            Self::MaxMargin(_) => ClassifierFamily::MaxMargin,
        }
    }

    /// Binary class lists get a single max-margin model, longer ones one-vs-rest.
    pub fn train(
        &self,
        examples: &[(FeatureVector, usize)],
        classes: &[String],
        vocab_size: usize,
    ) -> Result<ClassifierModel, ClassifyError> {
        Ok(match *self {
            Self::NaiveBayes { alpha } => {
                ClassifierModel::NaiveBayes(train_nb(examples, classes, vocab_size, alpha)?)
            }
            Self::MaxMargin(params) if classes.len() == 2 => {
                ClassifierModel::MaxMargin(train_margin(examples, classes, vocab_size, params)?)
            }
            Self::MaxMargin(params) => {
                ClassifierModel::OneVsRest(train_one_vs_rest(examples, classes, vocab_size, params)?)
            }
        })
    }
}

/// Any trained classifier, immutable after training.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    NaiveBayes(NaiveBayesModel),
    MaxMargin(MaxMarginModel),
    OneVsRest(OneVsRestModel),
}

impl ClassifierModel {
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, ClassifyError> {
        match self {
            Self::NaiveBayes(m) => m.predict(x),
            Self::MaxMargin(m) => m.predict(x),
            Self::OneVsRest(m) => m.predict(x),
        }
    }

    pub fn classes(&self) -> &[String] {
        match self {
            Self::NaiveBayes(m) => &m.classes,
            Self::MaxMargin(m) => &m.classes,
            Self::OneVsRest(m) => &m.classes,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Self::NaiveBayes(m) => m.vocab_size,
            Self::MaxMargin(m) => m.weights.len(),
            Self::OneVsRest(m) => m.members.first().map_or(0, |m| m.weights.len()),
        }
    }

    pub fn vocab_hash(&self) -> &str {
        match self {
            Self::NaiveBayes(m) => &m.vocab_hash,
            Self::MaxMargin(m) => &m.vocab_hash,
            Self::OneVsRest(m) => &m.vocab_hash,
        }
    }

    pub fn set_vocab_hash(&mut self, hash: String) {
        match self {
            Self::NaiveBayes(m) => m.vocab_hash = hash,
            Self::MaxMargin(m) => m.vocab_hash = hash,
            Self::OneVsRest(m) => m.vocab_hash = hash,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::NaiveBayes(_) => "naive_bayes",
            Self::MaxMargin(_) => "max_margin",
            Self::OneVsRest(_) => "one_vs_rest",
        }
    }

    /// Header lines (format version, family, classes, vocab hash and
    /// hyperparameters) followed by parameter lines. Fields are tab separated
    /// and floats use their shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "flarewatch-model\t{MODEL_FORMAT_VERSION}");
        let _ = writeln!(out, "family\t{}", self.family_name());
        let _ = writeln!(out, "classes\t{}", self.classes().join("\t"));
        let _ = writeln!(out, "vocab_hash\t{}", self.vocab_hash());
        let _ = writeln!(out, "vocab_size\t{}", self.vocab_size());
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        match self {
            Self::NaiveBayes(m) => {
                let _ = writeln!(out, "alpha\t{}", m.alpha);
                let _ = writeln!(out, "log_prior\t{}", join(&m.log_prior));
                for (c, ll) in m.log_likelihood.iter().enumerate() {
                    let _ = writeln!(out, "log_likelihood\t{c}\t{}", join(ll));
                }
            }
            Self::MaxMargin(m) => {
                write_params(&mut out, m.params);
                let _ = writeln!(out, "bias\t{}", m.bias);
                let _ = writeln!(out, "weights\t{}", join(&m.weights));
            }
            Self::OneVsRest(m) => {
                write_params(&mut out, m.members.first().map(|m| m.params).unwrap_or_default());
                for (c, member) in m.members.iter().enumerate() {
                    let _ = writeln!(out, "member_bias\t{c}\t{}", member.bias);
                    let _ = writeln!(out, "member_weights\t{c}\t{}", join(&member.weights));
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ClassifyError> {
        ModelReader::new(text).read()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn write_params(out: &mut String, p: MarginParams) {
    let _ = writeln!(out, "reg\t{}", p.reg);
    let _ = writeln!(out, "epochs\t{}", p.epochs);
    let _ = writeln!(out, "seed\t{}", p.seed);
}

struct ModelReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> ModelReader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> ClassifyError {
        ClassifyError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    /// Next line whose first field is `key`; returns the remaining fields.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>, ClassifyError> {
        let (i, line) = self
            .lines
            .next()
            .ok_or_else(|| self.err(format!("missing {key:?}")))?;
        self.line = i + 1;
        let mut parts = line.split('\t');
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            other => Err(self.err(format!("expected {key:?}, found {other:?}"))),
        }
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ClassifyError> {
        let fields = self.field(key)?;
        match fields[..] {
            [v] => v.parse().map_err(|_| self.err(format!("bad {key} value {v:?}"))),
            _ => Err(self.err(format!("{key} takes one value"))),
        }
    }

    fn floats(&self, s: &str, n: usize) -> Result<Vec<f64>, ClassifyError> {
        let v: Vec<f64> = s
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| self.err(format!("bad float {t:?}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn indexed(&mut self, key: &str, index: usize, n: usize) -> Result<Vec<f64>, ClassifyError> {
        let fields = self.field(key)?;
        match fields[..] {
            [i, values] if i.parse() == Ok(index) => self.floats(values, n),
            [_, _] => Err(self.err(format!("{key} out of order"))),
            // an empty vocabulary leaves no value field
            [i] if n == 0 && i.parse() == Ok(index) => Ok(Vec::new()),
            _ => Err(self.err(format!("malformed {key}"))),
        }
    }

    fn params(&mut self) -> Result<MarginParams, ClassifyError> {
        Ok(MarginParams {
            reg: self.single("reg")?,
            epochs: self.single("epochs")?,
            seed: self.single("seed")?,
        })
    }

    fn read(mut self) -> Result<ClassifierModel, ClassifyError> {
        let version: u32 = self.single("flarewatch-model")?;
        if version != MODEL_FORMAT_VERSION {
            return Err(self.err(format!("unsupported model format version {version}")));
        }
        let family: String = self.single("family")?;
        let classes: Vec<String> = self.field("classes")?.into_iter().map(String::from).collect();
        if classes.is_empty() || classes.iter().any(String::is_empty) {
            return Err(self.err("empty class list"));
        }
        let vocab_hash: String = self
            .field("vocab_hash")?
            .first()
            .map(|s| s.to_string())
            .unwrap_or_default();
        let n: usize = self.single("vocab_size")?;
        let k = classes.len();
        let model = match family.as_str() {
            "naive_bayes" => {
                let alpha = self.single("alpha")?;
                let prior_field = self.field("log_prior")?;
                let log_prior = match prior_field[..] {
                    [v] => self.floats(v, k)?,
                    _ => return Err(self.err("malformed log_prior")),
                };
                let log_likelihood = (0..k)
                    .map(|c| self.indexed("log_likelihood", c, n))
                    .collect::<Result<_, _>>()?;
                ClassifierModel::NaiveBayes(NaiveBayesModel {
                    classes,
                    log_prior,
                    log_likelihood,
                    alpha,
                    vocab_size: n,
                    vocab_hash,
                })
            }
            "max_margin" => {
                if k != 2 {
                    return Err(self.err("max_margin needs two classes"));
                }
                let params = self.params()?;
                let bias = self.single("bias")?;
                let weights = match self.field("weights")?[..] {
                    [v] => self.floats(v, n)?,
                    [] if n == 0 => Vec::new(),
                    _ => return Err(self.err("malformed weights")),
                };
                ClassifierModel::MaxMargin(MaxMarginModel {
                    classes,
                    weights,
                    bias,
                    params,
                    vocab_hash,
                })
            }
            "one_vs_rest" => {
                let params = self.params()?;
                let mut members = Vec::with_capacity(k);
                for (c, name) in classes.iter().enumerate() {
                    let bias = match self.field("member_bias")?[..] {
                        [i, b] if i.parse() == Ok(c) => {
                            b.parse().map_err(|_| self.err(format!("bad bias {b:?}")))?
                        }
                        _ => return Err(self.err("malformed member_bias")),
                    };
                    let weights = self.indexed("member_weights", c, n)?;
                    members.push(MaxMarginModel {
                        classes: vec![name.clone(), format!("not-{name}")],
                        weights,
                        bias,
                        params,
                        vocab_hash: String::new(),
                    });
                }
                ClassifierModel::OneVsRest(OneVsRestModel {
                    classes,
                    members,
                    vocab_hash,
                })
            }
            other => return Err(self.err(format!("unknown family {other:?}"))),
        };
        Ok(model)
    }
}

/// A vocabulary and the model trained on vectors from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedStage {
    vocab: Vocabulary,
    model: ClassifierModel,
}

impl TrainedStage {
    /// Pairs a model with its vocabulary, refusing mismatched hashes or sizes.
    pub fn new(vocab: Vocabulary, model: ClassifierModel) -> Result<Self, ClassifyError> {
        let hash = vocab.hash();
        if model.vocab_hash() != hash {
            return Err(ClassifyError::VocabMismatch {
                model: model.vocab_hash().to_string(),
                vocab: hash,
            });
        }
        if model.vocab_size() != vocab.len() {
            return Err(ClassifyError::DimensionMismatch {
                expected: vocab.len(),
                got: model.vocab_size(),
            });
        }
        Ok(Self { vocab, model })
    }

    /// Fits the vocabulary on `docs` and trains `spec` on the resulting vectors.
    pub fn train<S: AsRef<str>>(
        docs: &[Vec<S>],
        labels: &[usize],
        classes: &[String],
        features: FeatureConfig,
        spec: &ClassifierSpec,
    ) -> Result<Self, ClassifyError> {
        if docs.len() != labels.len() {
            return Err(ClassifyError::InvalidParameter(format!(
                "{} documents but {} labels",
                docs.len(),
                labels.len()
            )));
        }
        let vocab = Vocabulary::fit(docs, features)?;
        let examples: Vec<(FeatureVector, usize)> = docs
            .iter()
            .zip(labels)
            .map(|(d, &l)| (vocab.vectorize(d), l))
            .collect();
        let mut model = spec.train(&examples, classes, vocab.len())?;
        model.set_vocab_hash(vocab.hash());
        Ok(Self { vocab, model })
    }

    pub fn classify<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Prediction, ClassifyError> {
        self.model.predict(&self.vocab.vectorize(tokens))
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{name}.vocab")), dir.join(format!("{name}.model")))
    }

    /// Writes `<name>.vocab` and `<name>.model` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, name: &str) -> Result<(), ClassifyError> {
        let (vocab_path, model_path) = Self::paths(dir.as_ref(), name);
        self.vocab.save(vocab_path)?;
        self.model.save(model_path)
    }

    pub fn load(dir: impl AsRef<Path>, name: &str) -> Result<Self, ClassifyError> {
        let (vocab_path, model_path) = Self::paths(dir.as_ref(), name);
        Self::new(Vocabulary::load(vocab_path)?, ClassifierModel::load(model_path)?)
    }
}

/// Both stage predictions behind a detected emergency.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutcome {
    pub category: String,
    pub stage1: Prediction,
    pub stage2: Prediction,
}

/// Stage 1 filters emergencies; only those reach the stage 2 category model.
pub fn two_stage_classify<S: AsRef<str>>(
    tokens: &[S],
    stage1: &TrainedStage,
    stage2: &TrainedStage,
) -> Result<Option<TwoStageOutcome>, ClassifyError> {
    let first = stage1.classify(tokens)?;
    if first.label != EMERGENCY {
        return Ok(None);
    }
    let second = stage2.classify(tokens)?;
    Ok(Some(TwoStageOutcome {
        category: second.label.clone(),
        stage1: first,
        stage2: second,
    }))
}
