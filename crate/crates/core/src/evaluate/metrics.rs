use serde::{Deserialize, Serialize};

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.counts[class][class], self.predicted(class))
    }

    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.counts[class][class], self.support(class))
    }

    pub fn f1(&self, class: usize) -> f64 {
        f1(self.precision(class), self.recall(class))
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes.len()).map(|c| self.counts[c][c]).sum();
        ratio(diag, self.total())
    }

    pub fn scores(&self, averaging: Averaging) -> Scores {
        let k = self.classes.len();
        match averaging {
            Averaging::Positive => Scores {
                precision: self.precision(0),
                recall: self.recall(0),
                f1: self.f1(0),
            },
            Averaging::Macro => {
                let mean = |f: &dyn Fn(usize) -> f64| (0..k).map(f).sum::<f64>() / k as f64;
                Scores {
                    precision: mean(&|c| self.precision(c)),
                    recall: mean(&|c| self.recall(c)),
                    f1: mean(&|c| self.f1(c)),
                }
            }
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// How per-class scores collapse into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Scores of class 0 (the positive class of a binary task).
    Positive,
    /// Unweighted mean over classes.
    Macro,
}

impl Averaging {
    pub fn for_classes(n: usize) -> Self {
        if n == 2 {
            Self::Positive
        } else {
            Self::Macro
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix {
            classes: vec!["pos".into(), "neg".into()],
            counts: vec![vec![tp, fn_], vec![fp, tn]],
        }
    }

    #[test]
    fn fixture_eight_two_two_eight() {
        let s = binary(8, 2, 2, 8).scores(Averaging::Positive);
        assert!((s.precision - 0.8).abs() < 1e-9);
        assert!((s.recall - 0.8).abs() < 1e-9);
        assert!((s.f1 - 0.8).abs() < 1e-9);
    }

    #[test]
    fn all_negative_predictions() {
        let s = binary(0, 0, 10, 10).scores(Averaging::Positive);
        assert_eq!(s.f1, 0.0);
        assert_eq!(s.precision, 0.0);
    }

    #[test]
    fn macro_average() {
        let m = ConfusionMatrix {
            classes: vec!["a".into(), "b".into(), "c".into()],
            counts: vec![vec![2, 0, 0], vec![0, 1, 1], vec![0, 0, 2]],
        };
        let s = m.scores(Averaging::Macro);
        let expect_f1 = (1.0 + f1(1.0, 0.5) + f1(2.0 / 3.0, 1.0)) / 3.0;
        assert!((s.f1 - expect_f1).abs() < 1e-12);
        assert!((m.accuracy() - 5.0 / 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pooled_f1_matches_formula(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let s = binary(tp, fp, fn_, tn).scores(Averaging::Positive);
            let expect = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            prop_assert!((s.f1 - expect).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&s.precision) && (0.0..=1.0).contains(&s.recall));
        }
    }
}
