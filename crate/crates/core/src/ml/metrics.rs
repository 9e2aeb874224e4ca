use serde::{Deserialize, Serialize};

use crate::{RouteId, NUM_ROUTES};

/// Rows are true routes, columns predicted routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_ROUTES]; NUM_ROUTES],
}

impl ConfusionMatrix {
    pub fn from_pairs(y_true: &[RouteId], y_pred: &[RouteId]) -> Self {
        assert_eq!(y_true.len(), y_pred.len());
        let mut m = Self::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            m.counts[t as usize][p as usize] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn predicted(&self, c: usize) -> u64 {
        (0..NUM_ROUTES).map(|t| self.counts[t][c]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hits: u64 = (0..NUM_ROUTES).map(|c| self.counts[c][c]).sum();
        ratio(hits, self.total())
    }

    /// Recall of class `c`, `None` when the class never occurs.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let s = self.support(c);
        (s > 0).then(|| ratio(self.counts[c][c], s))
    }

    /// Precision of class `c`; zero when it is never predicted.
    pub fn precision(&self, c: usize) -> f64 {
        ratio(self.counts[c][c], self.predicted(c))
    }

    /// Mean recall over the classes that occur.
    pub fn macro_recall(&self) -> f64 {
        let r: Vec<f64> = (0..NUM_ROUTES).filter_map(|c| self.recall(c)).collect();
        mean(&r)
    }

    /// Mean precision over the classes that occur or are predicted.
    pub fn macro_precision(&self) -> f64 {
        let p: Vec<f64> = (0..NUM_ROUTES)
            .filter(|&c| self.support(c) > 0 || self.predicted(c) > 0)
            .map(|c| self.precision(c))
            .collect();
        mean(&p)
    }

    pub fn weighted_recall(&self) -> f64 {
        self.weighted(|c| self.recall(c).unwrap_or(0.0))
    }

    pub fn weighted_precision(&self) -> f64 {
        self.weighted(|c| self.precision(c))
    }

    fn weighted<F: Fn(usize) -> f64>(&self, per_class: F) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        (0..NUM_ROUTES)
            .map(|c| per_class(c) * self.support(c) as f64 / n as f64)
            .sum()
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Unweighted mean of per-class recalls, counted straight from the label
/// vectors over the classes present in `y_true`.
pub fn balanced_accuracy(y_true: &[RouteId], y_pred: &[RouteId]) -> f64 {
    let mut recalls = Vec::new();
    for c in 0..NUM_ROUTES as RouteId {
        let (mut hit, mut n) = (0usize, 0usize);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t == c {
                n += 1;
                hit += usize::from(p == c);
            }
        }
        if n > 0 {
            recalls.push(hit as f64 / n as f64);
        }
    }
    mean(&recalls)
}

/// Training/test scores of one classifier. `rs` and `ps` are macro
/// averages; the weighted variants are reported alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub tss: f64,
    pub tess: f64,
    pub bas: f64,
    pub rs: f64,
    pub ps: f64,
    pub rs_weighted: f64,
    pub ps_weighted: f64,
}

pub const METRICS_HEADER: &str = "model,tss,tess,bas,rs,ps,rs_weighted,ps_weighted";

impl ClassifierMetrics {
    pub fn from_predictions(
        train_true: &[RouteId],
        train_pred: &[RouteId],
        test_true: &[RouteId],
        test_pred: &[RouteId],
    ) -> Self {
        let train = ConfusionMatrix::from_pairs(train_true, train_pred);
        let test = ConfusionMatrix::from_pairs(test_true, test_pred);
        Self {
            tss: train.accuracy(),
            tess: test.accuracy(),
            bas: balanced_accuracy(test_true, test_pred),
            rs: test.macro_recall(),
            ps: test.macro_precision(),
            rs_weighted: test.weighted_recall(),
            ps_weighted: test.weighted_precision(),
        }
    }

    pub fn csv_row(&self, model: &str) -> String {
        format!(
            "{model},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.tss, self.tess, self.bas, self.rs, self.ps, self.rs_weighted, self.ps_weighted
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictor_scores_one() {
        let y = [0, 1, 2, 2, 1, 0];
        let m = ClassifierMetrics::from_predictions(&y, &y, &y, &y);
        for v in [m.tss, m.tess, m.bas, m.rs, m.ps, m.rs_weighted, m.ps_weighted] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        // confusion matrix has a single non-zero column: recall (1, 0, 0),
        // precision of class 0 is 1/3 and the others are never predicted
        let y = [0, 0, 1, 1, 2, 2];
        let p = [0; 6];
        let m = ClassifierMetrics::from_predictions(&y, &p, &y, &p);
        assert!((m.tess - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.bas - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.ps - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_division_is_zero() {
        let m = ConfusionMatrix::from_pairs(&[0, 0], &[1, 1]);
        assert_eq!(m.precision(0), 0.0);
        assert_eq!(m.recall(2), None);
        assert_eq!(m.accuracy(), 0.0);
    }

    proptest! {
        #[test]
        fn balanced_accuracy_agrees_with_confusion_matrix(
            pairs in proptest::collection::vec((0u8..3, 0u8..3), 1..200)
        ) {
            let (t, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let m = ConfusionMatrix::from_pairs(&t, &p);
            prop_assert!((balanced_accuracy(&t, &p) - m.macro_recall()).abs() < 1e-12);
            for v in [m.accuracy(), m.macro_recall(), m.macro_precision(), m.weighted_recall(), m.weighted_precision()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            // weighted recall is plain accuracy
            prop_assert!((m.weighted_recall() - m.accuracy()).abs() < 1e-12);
        }
    }
}
