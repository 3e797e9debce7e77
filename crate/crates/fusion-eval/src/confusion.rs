use crate::EvalError;
use serde::{Deserialize, Serialize};

/// K x K count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::Input(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![0u64; classes * classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(EvalError::Input(format!(
                    "label pair ({t}, {p}) out of range for {classes} classes"
                )));
            }
            counts[t * classes + p] += 1;
        }
        Ok(Self { classes, counts })
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.count(truth, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.count(t, predicted)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.count(c, c)).sum()
    }

    /// Per-class accuracy in percent: diagonal over row sum.
    pub fn per_class_accuracy_pct(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = self.row_sum(c);
                if row == 0 {
                    0.0
                } else {
                    100.0 * self.count(c, c) as f64 / row as f64
                }
            })
            .collect()
    }

    /// Comma-separated counts with a header row of predicted-class indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for p in 0..self.classes {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
        for t in 0..self.classes {
            out.push_str(&t.to_string());
            for p in 0..self.classes {
                out.push_str(&format!(",{}", self.count(t, p)));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-class precision/recall/F1 plus flags for degenerate denominators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub accuracy_pct: f64,
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub f1_pct: f64,
    /// True when no sample was predicted as this class (precision forced 0).
    pub zero_prediction_support: bool,
    /// True when no true sample of this class exists (recall forced 0).
    pub zero_truth_support: bool,
}

/// Headline metrics derived from a confusion matrix: accuracy and
/// unweighted (macro) precision/recall/F1 over classes, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy_pct: f64,
    pub macro_precision_pct: f64,
    pub macro_recall_pct: f64,
    pub macro_f1_pct: f64,
    pub per_class: Vec<ClassMetrics>,
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<ConfusionMetrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Input("confusion matrix has no counts".into()));
    }
    let accuracy_pct = 100.0 * cm.trace() as f64 / total as f64;
    let mut per_class = Vec::with_capacity(cm.classes);
    for c in 0..cm.classes {
        let col = cm.col_sum(c);
        let row = cm.row_sum(c);
        let diag = cm.count(c, c) as f64;
        let precision = if col == 0 { 0.0 } else { diag / col as f64 };
        let recall = if row == 0 { 0.0 } else { diag / row as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            class: c,
            accuracy_pct: if row == 0 { 0.0 } else { 100.0 * diag / row as f64 },
            precision_pct: 100.0 * precision,
            recall_pct: 100.0 * recall,
            f1_pct: 100.0 * f1,
            zero_prediction_support: col == 0,
            zero_truth_support: row == 0,
        });
    }
    let k = cm.classes as f64;
    Ok(ConfusionMetrics {
        accuracy_pct,
        macro_precision_pct: per_class.iter().map(|m| m.precision_pct).sum::<f64>() / k,
        macro_recall_pct: per_class.iter().map(|m| m.recall_pct).sum::<f64>() / k,
        macro_f1_pct: per_class.iter().map(|m| m.f1_pct).sum::<f64>() / k,
        per_class,
    })
}
