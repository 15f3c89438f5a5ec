use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierSpec, TrainedStage};
use crate::features::{FeatureConfig, Vocabulary};

use super::folds::FoldPlan;
use super::metrics::{Averaging, ConfusionMatrix, Scores};
use super::EvalError;

/// Features and classifier evaluated together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub features: FeatureConfig,
    pub classifier: ClassifierSpec,
}

/// What a fold trained on, exposed to leakage probes.
pub struct FoldView<'a> {
    pub fold: usize,
    pub train: &'a [usize],
    pub test: &'a [usize],
    pub vocab: &'a Vocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub vocab_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Vec<Vec<u64>>,
}

/// Pooled cross-validation result; aggregate scores come from the summed
/// confusion matrix, not from averaging fold scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: String,
    pub ngram_order: usize,
    pub classes: Vec<String>,
    pub averaging: Averaging,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: Vec<Vec<u64>>,
    pub per_fold: Vec<FoldReport>,
}

impl EvalReport {
    pub fn from_folds(
        classifier: String,
        ngram_order: usize,
        classes: &[String],
        folds: Vec<(FoldReport, ConfusionMatrix)>,
    ) -> Self {
        let averaging = Averaging::for_classes(classes.len());
        let mut pooled = ConfusionMatrix::new(classes.to_vec());
        let mut per_fold = Vec::with_capacity(folds.len());
        for (report, matrix) in folds {
            pooled.merge(&matrix);
            per_fold.push(report);
        }
        per_fold.sort_by_key(|f| f.fold);
        let Scores { precision, recall, f1 } = pooled.scores(averaging);
        let per_class = (0..classes.len())
            .map(|c| ClassScores {
                class: classes[c].clone(),
                precision: pooled.precision(c),
                recall: pooled.recall(c),
                f1: pooled.f1(c),
                support: pooled.support(c),
            })
            .collect();
        Self {
            classifier,
            ngram_order,
            classes: classes.to_vec(),
            averaging,
            k: per_fold.len(),
            precision,
            recall,
            f1,
            accuracy: pooled.accuracy(),
            per_class,
            confusion: pooled.counts,
            per_fold,
        }
    }
}

/// Trains on k−1 folds and predicts the held-out one, for every fold.
///
/// Vocabulary and model are fitted on training indices only. `probe`, when
/// given, sees each fold's split and vocabulary before prediction.
pub fn cross_validate<S>(
    docs: &[Vec<S>],
    labels: &[usize],
    classes: &[String],
    config: &CvConfig,
    plan: &FoldPlan,
    probe: Option<&(dyn Fn(&FoldView<'_>) + Sync)>,
) -> Result<EvalReport, EvalError>
where
    S: AsRef<str> + Clone + Sync,
{
    if docs.len() != labels.len() || plan.len() != docs.len() {
        return Err(EvalError::SizeMismatch {
            docs: docs.len(),
            labels: labels.len(),
            plan: plan.len(),
        });
    }
    let averaging = Averaging::for_classes(classes.len());
    let folds: Vec<(FoldReport, ConfusionMatrix)> = (0..plan.k)
        .into_par_iter()
        .map(|fold| -> Result<_, EvalError> {
            let (train, test) = plan.split(fold);
            let train_docs: Vec<Vec<S>> = train.iter().map(|&i| docs[i].clone()).collect();
            let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let stage = TrainedStage::train(
                &train_docs,
                &train_labels,
                classes,
                config.features,
                &config.classifier,
            )?;
            if let Some(probe) = probe {
                probe(&FoldView {
                    fold,
                    train: &train,
                    test: &test,
                    vocab: stage.vocab(),
                });
            }
            let mut matrix = ConfusionMatrix::new(classes.to_vec());
            for &i in &test {
                let p = stage.classify(&docs[i])?;
                matrix.record(labels[i], p.label_index);
            }
            let s = matrix.scores(averaging);
            Ok((
                FoldReport {
                    fold,
                    train_size: train.len(),
                    test_size: test.len(),
                    vocab_size: stage.vocab().len(),
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    confusion: matrix.counts.clone(),
                },
                matrix,
            ))
        })
        .collect::<Result<_, _>>()?;
    let name = match config.classifier {
        ClassifierSpec::NaiveBayes { .. } => "naive_bayes",
        ClassifierSpec::MaxMargin(_) => "max_margin",
    };
    Ok(EvalReport::from_folds(name.into(), config.features.order, classes, folds))
}
