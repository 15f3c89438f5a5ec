use crate::features::FeatureVector;

use super::{check_dimension, ClassifyError, Prediction};

/// Multinomial Naive Bayes over term counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    pub(crate) classes: Vec<String>,
    pub(crate) log_prior: Vec<f64>,
    /// `[class][feature]`
    pub(crate) log_likelihood: Vec<Vec<f64>>,
    pub(crate) alpha: f64,
    pub(crate) vocab_size: usize,
    pub(crate) vocab_hash: String,
}

/// Trains with smoothed likelihoods
/// `P(f|c) = (count(f,c) + alpha) / (total(c) + alpha * |V|)` and document
/// fraction priors. `examples` carry indices into `classes`.
pub fn train_nb(
    examples: &[(FeatureVector, usize)],
    classes: &[String],
    vocab_size: usize,
    alpha: f64,
) -> Result<NaiveBayesModel, ClassifyError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ClassifyError::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    if classes.is_empty() {
        return Err(ClassifyError::InvalidParameter("no classes declared".into()));
    }
    let k = classes.len();
    let mut doc_counts = vec![0usize; k];
    let mut feature_counts = vec![vec![0.0f64; vocab_size]; k];
    for (x, label) in examples {
        check_dimension(vocab_size, x)?;
        let label = *label;
        if label >= k {
            return Err(ClassifyError::InvalidParameter(format!("label index {label} ≥ {k}")));
        }
        doc_counts[label] += 1;
        for &(i, v) in x.entries() {
            feature_counts[label][i] += v;
        }
    }
    if let Some(c) = doc_counts.iter().position(|&n| n == 0) {
        return Err(ClassifyError::MissingClass(classes[c].clone()));
    }

    let n = examples.len() as f64;
    let log_prior = doc_counts.iter().map(|&c| (c as f64 / n).ln()).collect();
    let log_likelihood = feature_counts
        .iter()
        .map(|counts| {
            let denom = counts.iter().sum::<f64>() + alpha * vocab_size as f64;
            counts.iter().map(|&c| ((c + alpha) / denom).ln()).collect()
        })
        .collect();
    Ok(NaiveBayesModel {
        classes: classes.to_vec(),
        log_prior,
        log_likelihood,
        alpha,
        vocab_size,
        vocab_hash: String::new(),
    })
}

impl NaiveBayesModel {
    /// Scores are unnormalized log posteriors: `log P(c) + Σ count · log P(f|c)`.
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, ClassifyError> {
        check_dimension(self.vocab_size, x)?;
        let scores = self
            .log_prior
            .iter()
            .zip(&self.log_likelihood)
            .map(|(prior, ll)| prior + x.dot(ll))
            .collect();
        Ok(Prediction::from_scores(&self.classes, scores))
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn log_likelihood(&self, class: usize, feature: usize) -> f64 {
        self.log_likelihood[class][feature]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }
}
