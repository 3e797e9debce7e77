//! One-vs-one decomposition: K(K-1)/2 binary machines, prediction by vote
//! count with ties broken by the largest summed absolute decision value
//! among tied classes, then the lowest class index.

use crate::kernel::Kernel;
use crate::smo::{smo_train_binary, BinarySvm};
use crate::{SvmConfig, SvmError};
use std::collections::BTreeMap;

/// Inverse-frequency class weights: weight(c) = n_total / (K * count(c)),
/// so perfectly balanced labels give every class weight 1.
pub fn compute_class_weights(labels: &[usize]) -> Result<BTreeMap<usize, f64>, SvmError> {
    if labels.is_empty() {
        return Err(SvmError::Input("cannot compute class weights of an empty label set".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let k = counts.len() as f64;
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|(c, cnt)| (c, n / (k * cnt as f64))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine {
    /// Positive class of the binary problem.
    pub class_a: usize,
    /// Negative class.
    pub class_b: usize,
    pub svm: BinarySvm,
}

/// A trained multiclass model: one machine per unordered class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub class_labels: Vec<usize>,
    pub machines: Vec<PairMachine>,
    pub kernel: Kernel,
    pub penalty: f64,
    pub dim: usize,
}

/// Prediction for one sample: winning label plus per-class vote counts
/// aligned with `SvmModel::class_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct VotePrediction {
    pub label: usize,
    pub votes: Vec<usize>,
}

pub fn train_multiclass(
    features: &[Vec<f64>],
    labels: &[usize],
    config: &SvmConfig,
) -> Result<SvmModel, SvmError> {
    if features.len() != labels.len() {
        return Err(SvmError::Input(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut class_labels: Vec<usize> = labels.to_vec();
    class_labels.sort_unstable();
    class_labels.dedup();
    if class_labels.len() < 2 {
        return Err(SvmError::Degenerate("multiclass training requires >= 2 classes".into()));
    }
    let dim = features.first().map(|f| f.len()).unwrap_or(0);
    if features.iter().any(|f| f.len() != dim) {
        return Err(SvmError::Input("ragged feature matrix".into()));
    }
    // Kernel width resolved once on the full training set and shared by all
    // pair machines.
    let gamma = config.gamma.resolve(features)?;
    let kernel = Kernel::Rbf { gamma };

    let mut machines = Vec::new();
    for (ai, &class_a) in class_labels.iter().enumerate() {
        for &class_b in &class_labels[ai + 1..] {
            let mut pair_features = Vec::new();
            let mut pair_labels = Vec::new();
            let mut pair_classes = Vec::new();
            for (f, &l) in features.iter().zip(labels) {
                if l == class_a || l == class_b {
                    pair_features.push(f.clone());
                    pair_labels.push(if l == class_a { 1.0 } else { -1.0 });
                    pair_classes.push(l);
                }
            }
            let weights = pair_weights(&pair_classes, config)?;
            let trained =
                smo_train_binary(&pair_features, &pair_labels, &weights, kernel, config)?;
            machines.push(PairMachine { class_a, class_b, svm: trained.svm });
        }
    }
    Ok(SvmModel { class_labels, machines, kernel, penalty: config.c, dim })
}

fn pair_weights(pair_classes: &[usize], config: &SvmConfig) -> Result<Vec<f64>, SvmError> {
    if config.balanced {
        let map = compute_class_weights(pair_classes)?;
        Ok(pair_classes.iter().map(|c| map[c]).collect())
    } else {
        Ok(vec![1.0; pair_classes.len()])
    }
}

impl SvmModel {
    pub fn predict_one(&self, x: &[f64]) -> Result<VotePrediction, SvmError> {
        if x.len() != self.dim {
            return Err(SvmError::Input(format!(
                "feature dimension {} does not match training dimension {}",
                x.len(),
                self.dim
            )));
        }
        let k = self.class_labels.len();
        let mut votes = vec![0usize; k];
        let mut decision_mass = vec![0.0f64; k];
        for m in &self.machines {
            let d = m.svm.decision(x);
            let winner = if d >= 0.0 { m.class_a } else { m.class_b };
            let wi = self.class_index(winner);
            votes[wi] += 1;
            decision_mass[self.class_index(m.class_a)] += d.abs();
            decision_mass[self.class_index(m.class_b)] += d.abs();
        }
        let best_votes = *votes.iter().max().unwrap();
        // Among tied classes, prefer the largest decision mass; exact mass
        // ties fall through to the lowest class index via ascending order.
        let mut best: Option<usize> = None;
        for i in (0..k).filter(|&i| votes[i] == best_votes) {
            match best {
                None => best = Some(i),
                Some(b) if decision_mass[i] > decision_mass[b] => best = Some(i),
                _ => {}
            }
        }
        let label = self.class_labels[best.expect("at least one class")];
        Ok(VotePrediction { label, votes })
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<VotePrediction>, SvmError> {
        features.iter().map(|f| self.predict_one(f)).collect()
    }

    fn class_index(&self, class: usize) -> usize {
        self.class_labels.iter().position(|&c| c == class).expect("class known to model")
    }

    pub fn support_vector_counts(&self) -> Vec<usize> {
        self.machines.iter().map(|m| m.svm.support_vectors.len()).collect()
    }
}
