use crate::EvalError;
use serde::{Deserialize, Serialize};

/// One point on a ROC curve. `threshold` is `None` for the two synthetic
/// anchor points at (0,0) and (1,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: Option<f64>,
}

/// One-vs-rest ROC curve: thresholds sweep the distinct scores descending
/// (predict positive when score >= threshold). The curve starts at (0,0),
/// ends at (1,1), and is non-decreasing in both coordinates.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<Vec<RocPoint>, EvalError> {
    if scores.len() != truth.len() {
        return Err(EvalError::Input(format!(
            "{} scores but {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::Input("scores must be finite".into()));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::Degenerate(
            "ROC requires both classes present in the truth labels".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: None }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // Consume the whole tie group at this threshold.
        while i < order.len() && scores[order[i]] == t {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold: Some(t),
        });
    }
    points.push(RocPoint { fpr: 1.0, tpr: 1.0, threshold: None });
    Ok(points)
}

/// Trapezoidal area under a ROC point list; equals the probability that a
/// random positive outranks a random negative, counting ties as one half.
pub fn auc(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[1].tpr + w[0].tpr) * (w[1].fpr - w[0].fpr))
        .sum()
}

/// CSV rows `fpr,tpr,threshold`; anchors print "inf"/"-inf".
pub fn roc_csv(curve: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for (i, p) in curve.iter().enumerate() {
        let threshold = match p.threshold {
            Some(t) => t.to_string(),
            None if i == 0 => "inf".to_string(),
            None => "-inf".to_string(),
        };
        out.push_str(&format!("{},{},{threshold}\n", p.fpr, p.tpr));
    }
    out
}
