use crate::EvalError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-antenna predictions over an aligned window set: `labels[w]` and
/// `confidences[w]` describe window `w` as seen by this antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaPrediction {
    pub antenna: usize,
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
}

impl AntennaPrediction {
    pub fn new(antenna: usize, labels: Vec<usize>, confidences: Vec<f64>) -> Result<Self, EvalError> {
        if labels.len() != confidences.len() {
            return Err(EvalError::Input(format!(
                "antenna {antenna}: {} labels but {} confidences",
                labels.len(),
                confidences.len()
            )));
        }
        if let Some(bad) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(EvalError::Input(format!(
                "antenna {antenna}: confidence {bad} outside [0,1]"
            )));
        }
        Ok(Self { antenna, labels, confidences })
    }
}

/// Plurality vote per window across antennas. Ties break to the tied label
/// with the highest mean confidence, then to the lowest class index; the
/// result is deterministic and invariant to antenna order.
pub fn majority_vote(predictions: &[AntennaPrediction]) -> Result<Vec<usize>, EvalError> {
    if predictions.len() < 2 {
        return Err(EvalError::Input(format!(
            "majority voting requires at least 2 antennas, got {}",
            predictions.len()
        )));
    }
    let windows = predictions[0].labels.len();
    for p in predictions {
        if p.labels.len() != windows {
            return Err(EvalError::Input(format!(
                "antenna {} covers {} windows, expected {windows}",
                p.antenna,
                p.labels.len()
            )));
        }
    }
    let mut fused = Vec::with_capacity(windows);
    for w in 0..windows {
        let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for p in predictions {
            let entry = tally.entry(p.labels[w]).or_insert((0, 0.0));
            entry.0 += 1;
            entry.1 += p.confidences[w];
        }
        let top_votes = tally.values().map(|(v, _)| *v).max().unwrap();
        // BTreeMap iterates labels ascending, so keeping a strictly-better
        // winner resolves exact mean-confidence ties to the lowest label.
        let mut winner = usize::MAX;
        let mut winner_mean = f64::NEG_INFINITY;
        for (&label, &(votes, conf_sum)) in &tally {
            if votes != top_votes {
                continue;
            }
            let mean = conf_sum / votes as f64;
            if mean > winner_mean {
                winner = label;
                winner_mean = mean;
            }
        }
        fused.push(winner);
    }
    Ok(fused)
}
