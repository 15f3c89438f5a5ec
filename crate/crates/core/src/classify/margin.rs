use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureVector;

use super::{check_dimension, ClassifyError, Prediction};

/// Training settings for the linear max-margin classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginParams {
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MarginParams {
    fn default() -> Self {
        Self {
            reg: 1e-3,
            epochs: 20,
            seed: 17,
        }
    }
}

/// Binary linear classifier `score = w·x + b`; class 0 is the positive side.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxMarginModel {
    pub(crate) classes: Vec<String>,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: f64,
    pub(crate) params: MarginParams,
    pub(crate) vocab_hash: String,
}

/// L2-regularized hinge loss minimized by stochastic subgradient steps of size
/// `1 / (reg · t)`, visiting examples in a seeded per-epoch order. The bias is
/// learned as the weight of a constant feature.
///
/// `examples` carry indices into `classes` (length 2); index 0 is positive.
pub fn train_margin(
    examples: &[(FeatureVector, usize)],
    classes: &[String],
    vocab_size: usize,
    params: MarginParams,
) -> Result<MaxMarginModel, ClassifyError> {
    if classes.len() != 2 {
        return Err(ClassifyError::InvalidParameter(format!(
            "max-margin model needs exactly 2 classes, got {}",
            classes.len()
        )));
    }
    if !(params.reg > 0.0 && params.reg.is_finite()) {
        return Err(ClassifyError::InvalidParameter(format!("reg must be > 0, got {}", params.reg)));
    }
    if params.epochs == 0 {
        return Err(ClassifyError::InvalidParameter("epochs must be ≥ 1".into()));
    }
    let mut seen = [false; 2];
    for (x, label) in examples {
        check_dimension(vocab_size, x)?;
        if *label > 1 {
            return Err(ClassifyError::InvalidParameter(format!("label index {label} ≥ 2")));
        }
        seen[*label] = true;
    }
    if !(seen[0] && seen[1]) {
        return Err(ClassifyError::SingleClass);
    }

    // w = scale · v, so the per-step shrink is O(1)
    let mut v = vec![0.0f64; vocab_size];
    let mut v_bias = 0.0f64;
    let mut scale = 1.0f64;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let (x, label) = &examples[i];
            let y = if *label == 0 { 1.0 } else { -1.0 };
            let eta = 1.0 / (params.reg * t as f64);
            let margin = y * scale * (x.dot(&v) + v_bias);
            let shrink = 1.0 - eta * params.reg;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                v_bias = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for &(j, value) in x.entries() {
                    v[j] += step * value;
                }
                v_bias += step;
            }
        }
    }
    Ok(MaxMarginModel {
        classes: classes.to_vec(),
        weights: v.iter().map(|w| w * scale).collect(),
        bias: v_bias * scale,
        params,
        vocab_hash: String::new(),
    })
}

impl MaxMarginModel {
    pub fn from_parts(classes: Vec<String>, weights: Vec<f64>, bias: f64, params: MarginParams) -> Self {
        Self {
            classes,
            weights,
            bias,
            params,
            vocab_hash: String::new(),
        }
    }

    pub fn margin(&self, x: &FeatureVector) -> Result<f64, ClassifyError> {
        check_dimension(self.weights.len(), x)?;
        Ok(x.dot(&self.weights) + self.bias)
    }

    /// Positive (class 0) iff `w·x + b ≥ 0`. Scores are `[s, -s]`.
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, ClassifyError> {
        let s = self.margin(x)?;
        Ok(Prediction::from_scores(&self.classes, vec![s, -s]))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn params(&self) -> MarginParams {
        self.params
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }
}

/// One binary max-margin model per class; the largest margin wins.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRestModel {
    pub(crate) classes: Vec<String>,
    pub(crate) members: Vec<MaxMarginModel>,
    pub(crate) vocab_hash: String,
}

pub fn train_one_vs_rest(
    examples: &[(FeatureVector, usize)],
    classes: &[String],
    vocab_size: usize,
    params: MarginParams,
) -> Result<OneVsRestModel, ClassifyError> {
    let mut counts = vec![0usize; classes.len()];
    for (_, label) in examples {
        if *label >= classes.len() {
            return Err(ClassifyError::InvalidParameter(format!("label index {label} out of range")));
        }
        counts[*label] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(ClassifyError::MissingClass(classes[c].clone()));
    }
    let mut members = Vec::with_capacity(classes.len());
    for (c, name) in classes.iter().enumerate() {
        let binary: Vec<(FeatureVector, usize)> = examples
            .iter()
            .map(|(x, l)| (x.clone(), usize::from(*l != c)))
            .collect();
        let pair = vec![name.clone(), format!("not-{name}")];
        members.push(train_margin(&binary, &pair, vocab_size, params)?);
    }
    Ok(OneVsRestModel {
        classes: classes.to_vec(),
        members,
        vocab_hash: String::new(),
    })
}

impl OneVsRestModel {
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction, ClassifyError> {
        let scores = self
            .members
            .iter()
            .map(|m| m.margin(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Prediction::from_scores(&self.classes, scores))
    }

    pub fn members(&self) -> &[MaxMarginModel] {
        &self.members
    }
}
