//! Confusion matrices and support-weighted classification metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Result<Self> {
        if classes.is_empty() {
            return Err(invalid!("confusion matrix needs at least one class"));
        }
        let c = classes.len();
        Ok(Self {
            classes,
            counts: vec![0; c * c],
        })
    }

    /// Tallies `(truth[i], pred[i])` pairs over `num_classes` anonymous classes.
    pub fn from_labels(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<Self> {
        let names = (0..num_classes).map(|i| format!("{i}")).collect();
        let mut cm = Self::new(names)?;
        if truth.len() != pred.len() {
            return Err(invalid!(
                "{} true labels but {} predictions",
                truth.len(),
                pred.len()
            ));
        }
        for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
            cm.record(t, p).map_err(|_| {
                invalid!("label pair ({t}, {p}) at index {i} outside [0, {num_classes})")
            })?;
        }
        Ok(cm)
    }

    pub fn from_rows(classes: Vec<String>, rows: &[Vec<u64>]) -> Result<Self> {
        let c = classes.len();
        if rows.len() != c || rows.iter().any(|r| r.len() != c) {
            return Err(invalid!("confusion rows must form a {c}x{c} matrix"));
        }
        Ok(Self {
            classes,
            counts: rows.concat(),
        })
    }

    pub fn with_class_names(mut self, classes: Vec<String>) -> Result<Self> {
        if classes.len() != self.classes.len() {
            return Err(invalid!(
                "{} names for {} classes",
                classes.len(),
                self.classes.len()
            ));
        }
        self.classes = classes;
        Ok(self)
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        let c = self.classes.len();
        if truth >= c || pred >= c {
            return Err(invalid!("label pair ({truth}, {pred}) outside [0, {c})"));
        }
        self.counts[truth * c + pred] += 1;
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes.len() + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.get(i, i)).sum()
    }

    /// Row sum: samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.classes.len()).map(|p| self.get(c, p)).sum()
    }

    /// Column sum: samples predicted as `c`.
    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.classes.len()).map(|t| self.get(t, c)).sum()
    }

    /// Relabels classes so that old class `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let c = self.classes.len();
        let mut seen = vec![false; c];
        if perm.len() != c
            || perm
                .iter()
                .any(|&p| p >= c || core::mem::replace(&mut seen[p], true))
        {
            return Err(invalid!("not a permutation of {c} classes"));
        }
        let mut out = Self {
            classes: vec![String::new(); c],
            counts: vec![0; c * c],
        };
        for i in 0..c {
            out.classes[perm[i]] = self.classes[i].clone();
            for j in 0..c {
                out.counts[perm[i] * c + perm[j]] = self.get(i, j);
            }
        }
        Ok(out)
    }

    /// CSV with class names as header row and first column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for name in &self.classes {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (t, name) in self.classes.iter().enumerate() {
            s.push_str(name);
            for p in 0..self.classes.len() {
                let _ = write!(s, ",{}", self.get(t, p));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub weighted: Averages,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class, macro and support-weighted precision/recall/F1.
///
/// Undefined ratios (zero denominators) are 0. Each per-class metric is an
/// integer ratio `num/den`; the weighted average is evaluated as
/// `sum_c(support_c * num_c / den_c) / N`, which keeps weighted recall equal to
/// `trace / N` in floating point.
pub fn aggregate_metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let n = cm.total();
    if n == 0 {
        return Err(invalid!("cannot aggregate an empty confusion matrix"));
    }
    let c = cm.num_classes();
    let mut per_class = Vec::with_capacity(c);
    let mut weighted = [0.0f64; 3];
    for k in 0..c {
        let tp = cm.get(k, k);
        let support = cm.support(k);
        let predicted = cm.predicted(k);
        let fractions = [
            (tp, predicted),
            (tp, support),
            (2 * tp, support + predicted),
        ];
        for (acc, (num, den)) in weighted.iter_mut().zip(fractions) {
            if den != 0 {
                *acc += (support * num) as f64 / den as f64;
            }
        }
        per_class.push(ClassMetrics {
            class: cm.classes()[k].clone(),
            precision: ratio(fractions[0].0, fractions[0].1),
            recall: ratio(fractions[1].0, fractions[1].1),
            f1: ratio(fractions[2].0, fractions[2].1),
            support,
        });
    }
    let macro_of = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    let macro_avg = Averages {
        precision: macro_of(|m| m.precision),
        recall: macro_of(|m| m.recall),
        f1: macro_of(|m| m.f1),
    };
    let nf = n as f64;
    Ok(MetricReport {
        accuracy: cm.trace() as f64 / nf,
        weighted: Averages {
            precision: weighted[0] / nf,
            recall: weighted[1] / nf,
            f1: weighted[2] / nf,
        },
        macro_avg,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_and_swapped() {
        let cm = ConfusionMatrix::from_labels(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.trace(), 3);
        let r = aggregate_metrics(&cm).unwrap();
        assert_eq!(
            (
                r.accuracy,
                r.weighted.precision,
                r.weighted.f1,
                r.macro_avg.recall
            ),
            (1.0, 1.0, 1.0, 1.0)
        );

        let cm = ConfusionMatrix::from_labels(&[0, 1], &[1, 0], 2).unwrap();
        assert_eq!((cm.get(0, 1), cm.get(1, 0), cm.trace()), (1, 1, 0));
    }

    #[test]
    fn out_of_range_label_reports_index() {
        let err = ConfusionMatrix::from_labels(&[0, 1, 0], &[0, 2, 0], 2).unwrap_err();
        assert!(format!("{err}").contains("index 1"));
    }

    #[test]
    fn hand_computed_binary() {
        let cm = ConfusionMatrix::from_rows(names(2), &[vec![50, 10], vec![5, 35]]).unwrap();
        let r = aggregate_metrics(&cm).unwrap();
        assert!((r.accuracy - 0.85).abs() < 1e-15);
        assert!((r.per_class[0].precision - 50.0 / 55.0).abs() < 1e-15);
        assert!((r.per_class[0].recall - 50.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let cm =
            ConfusionMatrix::from_rows(vec!["a".into(), "b".into()], &[vec![1, 2], vec![3, 4]])
                .unwrap();
        assert_eq!(cm.to_csv(), "true\\predicted,a,b\na,1,2\nb,3,4\n");
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(aggregate_metrics(&ConfusionMatrix::new(names(2)).unwrap()).is_err());
    }
}
