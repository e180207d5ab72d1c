//! Per-class precision, recall, F1 and accuracy, macro averages, and the
//! per-class decision threshold search for multi-label models.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One-vs-rest confusion counts for a class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Undefined ratios (`0 / 0`) are reported as 0.
    pub fn metrics(&self) -> ClassMetrics {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            accuracy: ratio(self.tp + self.tn, self.tp + self.fp + self.fn_ + self.tn),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl ClassMetrics {
    pub const NAMES: [&'static str; 4] = ["precision", "recall", "f1", "accuracy"];

    pub fn values(&self) -> [f64; 4] {
        [self.precision, self.recall, self.f1, self.accuracy]
    }

    fn mean(items: &[ClassMetrics]) -> ClassMetrics {
        let n = items.len().max(1) as f64;
        ClassMetrics {
            precision: items.iter().map(|m| m.precision).sum::<f64>() / n,
            recall: items.iter().map(|m| m.recall).sum::<f64>() / n,
            f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
            accuracy: items.iter().map(|m| m.accuracy).sum::<f64>() / n,
        }
    }
}

/// Per-class metrics plus their unweighted (macro) mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: ClassMetrics,
}

impl MetricsReport {
    /// Scores predicted label sets against true label sets.
    pub fn from_predictions(
        predicted: &[Vec<usize>],
        actual: &[Vec<usize>],
        classes: &[String],
    ) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} records",
                predicted.len(),
                actual.len()
            )));
        }
        let mut conf = vec![Confusion::default(); classes.len()];
        for (p, a) in predicted.iter().zip(actual) {
            for (c, cm) in conf.iter_mut().enumerate() {
                cm.record(p.contains(&c), a.contains(&c));
            }
        }
        Ok(Self::from_confusions(&conf, classes))
    }

    pub fn from_confusions(conf: &[Confusion], classes: &[String]) -> Self {
        let per_class: Vec<ClassMetrics> = conf.iter().map(Confusion::metrics).collect();
        Self {
            classes: classes.to_vec(),
            macro_avg: ClassMetrics::mean(&per_class),
            per_class,
        }
    }

    /// Element-wise mean of several reports over the same classes.
    pub fn mean(reports: &[MetricsReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::invalid("no reports to average"))?;
        if reports.iter().any(|r| r.classes != first.classes) {
            return Err(Error::invalid("reports cover different classes"));
        }
        let per_class = (0..first.classes.len())
            .map(|c| ClassMetrics::mean(&reports.iter().map(|r| r.per_class[c]).collect::<Vec<_>>()))
            .collect::<Vec<_>>();
        Ok(Self {
            classes: first.classes.clone(),
            macro_avg: ClassMetrics::mean(&reports.iter().map(|r| r.macro_avg).collect::<Vec<_>>()),
            per_class,
        })
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# averages are macro (unweighted mean over classes)\n");
        let _ = writeln!(out, "{:<16}{:>10}{:>10}{:>10}{:>10}", "class", "precision", "recall", "f1", "accuracy");
        let rows = self
            .classes
            .iter()
            .map(String::as_str)
            .zip(&self.per_class)
            .chain(std::iter::once(("macro", &self.macro_avg)));
        for (name, m) in rows {
            let _ = writeln!(
                out,
                "{:<16}{:>10.4}{:>10.4}{:>10.4}{:>10.4}",
                name, m.precision, m.recall, m.f1, m.accuracy
            );
        }
        out
    }

    /// Lines of the machine-readable metrics file, `fold,class,metric,value`,
    /// including a `macro` pseudo-class.
    pub fn csv_lines(&self, fold: &str) -> Vec<String> {
        let rows = self
            .classes
            .iter()
            .map(String::as_str)
            .zip(&self.per_class)
            .chain(std::iter::once(("macro", &self.macro_avg)));
        let mut out = Vec::new();
        for (name, m) in rows {
            for (metric, v) in ClassMetrics::NAMES.iter().zip(m.values()) {
                out.push(format!("{fold},{name},{metric},{v:.6}"));
            }
        }
        out
    }
}

/// The 19 candidate thresholds `0.05, 0.10, ..., 0.95`.
pub fn threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// F1 of one class when predicting `prob >= threshold`.
pub fn f1_at(probs: &[Vec<f64>], labels: &[Vec<usize>], class: usize, threshold: f64) -> f64 {
    let mut cm = Confusion::default();
    for (p, l) in probs.iter().zip(labels) {
        cm.record(p[class] >= threshold, l.contains(&class));
    }
    cm.metrics().f1
}

/// Per-class threshold maximizing validation F1 over [`threshold_grid`];
/// ties go to the lowest threshold. A class with no positive validation
/// record gets 0.5 and a warning.
pub fn threshold_search(probs: &[Vec<f64>], labels: &[Vec<usize>], n_classes: usize) -> Vec<f64> {
    let grid = threshold_grid();
    (0..n_classes)
        .map(|c| {
            if !labels.iter().any(|l| l.contains(&c)) {
                log::warn!("class {c} has no positive validation records; using threshold 0.5");
                return 0.5;
            }
            let mut best = (grid[0], f1_at(probs, labels, c, grid[0]));
            for &t in &grid[1..] {
                let f = f1_at(probs, labels, c, t);
                if f > best.1 {
                    best = (t, f);
                }
            }
            best.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_reference_case() {
        let cm = Confusion { tp: 8, fp: 2, fn_: 2, tn: 88 };
        let m = cm.metrics();
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert!((m.recall - 0.8).abs() < 1e-12);
        assert!((m.f1 - 0.8).abs() < 1e-12);
        assert!((m.accuracy - 0.96).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let labels: Vec<Vec<usize>> = (0..12).map(|i| vec![i % 3]).collect();
        let classes: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let r = MetricsReport::from_predictions(&labels, &labels, &classes).unwrap();
        for m in r.per_class.iter().chain([&r.macro_avg]) {
            assert_eq!(m.values(), [1.0; 4]);
        }
        assert_eq!(r.csv_lines("0").len(), 16);
    }

    #[test]
    fn separated_class_picks_lowest_perfect_threshold() {
        let probs = vec![vec![0.9], vec![0.9], vec![0.1], vec![0.1]];
        let labels = vec![vec![0], vec![0], vec![], vec![]];
        assert_eq!(threshold_search(&probs, &labels, 1), vec![0.15]);
    }

    #[test]
    fn absent_class_defaults() {
        let probs = vec![vec![0.9, 0.2]];
        let labels = vec![vec![0]];
        assert_eq!(threshold_search(&probs, &labels, 2)[1], 0.5);
    }
}
