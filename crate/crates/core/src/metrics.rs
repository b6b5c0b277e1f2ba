//! Confusion matrix and the scores derived from it.

use std::fmt;

use crate::error::{Error, Result};

/// Counts indexed by `[true class][predicted class]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<i32>,
    counts: Vec<Vec<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    pub class: i32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    /// Builds the matrix over `classes`. Labels outside `classes` are an
    /// error.
    pub fn from_predictions(classes: &[i32], truth: &[i32], predicted: &[i32]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dimension(
                format!("{} predictions", truth.len()),
                format!("{} predictions", predicted.len()),
            ));
        }
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        let index = |c: i32| {
            classes.iter().position(|&x| x == c).ok_or_else(|| {
                Error::InvalidParameter(format!("label {c} not among classes {classes:?}"))
            })
        };
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[index(t)?][index(p)?] += 1;
        }
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts,
        })
    }

    pub fn from_counts(classes: Vec<i32>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(Error::dimension(
                format!("{k}x{k} counts"),
                "ragged or mis-sized counts",
            ));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> &[i32] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::InvalidParameter(
                "accuracy of an empty confusion matrix".into(),
            ));
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Scores of the class at position `i`. Zero denominators give 0.
    pub fn scores_at(&self, i: usize) -> ClassScores {
        let tp = self.counts[i][i];
        let precision = ratio(tp, self.col_sum(i));
        let recall = ratio(tp, self.row_sum(i));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            class: self.classes[i],
            precision,
            recall,
            f1,
            support: self.row_sum(i),
        }
    }

    pub fn class_scores(&self) -> Vec<ClassScores> {
        (0..self.classes.len()).map(|i| self.scores_at(i)).collect()
    }

    pub fn f1(&self, class: i32) -> Option<f64> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .map(|i| self.scores_at(i).f1)
    }

    /// Unweighted mean of the per-class F1 scores.
    pub fn macro_f1(&self) -> f64 {
        let k = self.classes.len();
        if k == 0 {
            return 0.0;
        }
        self.class_scores().iter().map(|s| s.f1).sum::<f64>() / k as f64
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>8}", "true\\pred")?;
        for c in &self.classes {
            write!(f, " {c:>8}")?;
        }
        writeln!(f)?;
        for (c, row) in self.classes.iter().zip(&self.counts) {
            write!(f, "{c:>9}")?;
            for v in row {
                write!(f, " {v:>8}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        let diag = ConfusionMatrix::from_counts(
            vec![0, 1, 2],
            vec![vec![3, 0, 0], vec![0, 1, 0], vec![0, 0, 7]],
        )
        .unwrap();
        assert_eq!(diag.accuracy().unwrap(), 1.0);
        assert_eq!(diag.macro_f1(), 1.0);
        let even = ConfusionMatrix::from_counts(vec![0, 1], vec![vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(even.accuracy().unwrap(), 0.5);
        let empty = ConfusionMatrix::from_counts(vec![0, 1], vec![vec![0, 0], vec![0, 0]]).unwrap();
        assert!(empty.accuracy().is_err());
    }

    #[test]
    fn constant_predictor() {
        let cm = ConfusionMatrix::from_counts(vec![0, 1], vec![vec![5, 0], vec![5, 0]]).unwrap();
        assert!((cm.f1(0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.f1(1).unwrap(), 0.0);
        assert!((cm.macro_f1() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_binary() {
        let cm = ConfusionMatrix::from_counts(vec![0, 1], vec![vec![3, 1], vec![2, 4]]).unwrap();
        let s = cm.class_scores();
        assert!((s[0].precision - 0.6).abs() < 1e-15);
        assert!((s[0].recall - 0.75).abs() < 1e-15);
        assert!((s[1].precision - 0.8).abs() < 1e-15);
        assert!((s[1].recall - 2.0 / 3.0).abs() < 1e-15);
        // (2/3 + 8/11) / 2 = 23/33
        assert!((cm.macro_f1() - 23.0 / 33.0).abs() < 1e-12);
    }

    #[test]
    fn from_predictions_counts() {
        let cm =
            ConfusionMatrix::from_predictions(&[-1, 1], &[1, 1, -1, -1], &[1, -1, -1, -1]).unwrap();
        assert_eq!(cm.counts(), &[vec![2, 0], vec![1, 1]]);
        assert_eq!(cm.total(), 4);
        assert!(ConfusionMatrix::from_predictions(&[0, 1], &[0], &[2]).is_err());
        assert!(ConfusionMatrix::from_predictions(&[0, 1], &[0, 1], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn macro_f1_in_unit_interval(counts in proptest::collection::vec(0u64..20, 9)) {
            let rows: Vec<Vec<u64>> = counts.chunks(3).map(|c| c.to_vec()).collect();
            let cm = ConfusionMatrix::from_counts(vec![0, 1, 2], rows).unwrap();
            let m = cm.macro_f1();
            prop_assert!((0.0..=1.0).contains(&m));
        }

        #[test]
        fn accuracy_invariant_under_class_permutation(counts in proptest::collection::vec(0u64..20, 9)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let rows: Vec<Vec<u64>> = counts.chunks(3).map(|c| c.to_vec()).collect();
            let perm = [2usize, 0, 1];
            let permuted: Vec<Vec<u64>> = (0..3)
                .map(|i| (0..3).map(|j| rows[perm[i]][perm[j]]).collect())
                .collect();
            let a = ConfusionMatrix::from_counts(vec![0, 1, 2], rows).unwrap();
            let b = ConfusionMatrix::from_counts(vec![0, 1, 2], permuted).unwrap();
            prop_assert_eq!(a.accuracy().unwrap(), b.accuracy().unwrap());
        }
    }
}
