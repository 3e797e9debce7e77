//! Sequential minimal optimization for the soft-margin SVM dual with
//! per-sample box constraints (class weighting folds into the caps).
//!
//! Working-pair selection: a first-violator outer loop over all samples,
//! with the partner chosen to maximize |E_i - E_j| and a fallback scan over
//! the remaining indices when that pair makes no progress. Each accepted
//! analytic pair update maximizes the dual restricted to the pair, so the
//! dual objective is non-decreasing across accepted updates.

use crate::kernel::Kernel;
use crate::{SvmConfig, SvmError};

/// A trained binary decision function f(x) = sum(coef_i K(sv_i, x)) + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

/// Solver output: the decision function plus the full dual solution for
/// certificate checks.
#[derive(Debug, Clone)]
pub struct TrainedBinary {
    pub svm: BinarySvm,
    /// One alpha per training sample, aligned with the input order.
    pub alphas: Vec<f64>,
    /// Per-sample upper bound C * w_{y_i}.
    pub caps: Vec<f64>,
    pub accepted_updates: usize,
    /// Dual objective after each accepted update; populated only when
    /// `config.record_objective` is set.
    pub objective_trace: Vec<f64>,
}

const SV_EPS: f64 = 1e-10;

struct Solver<'a> {
    gram: Vec<f64>,
    labels: &'a [f64],
    caps: &'a [f64],
    alphas: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
    tol: f64,
    n: usize,
}

impl<'a> Solver<'a> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n + j]
    }

    fn violates_kkt(&self, i: usize) -> bool {
        let r = self.errors[i] * self.labels[i]; // y_i f(x_i) - 1
        (r < -self.tol && self.alphas[i] < self.caps[i]) || (r > self.tol && self.alphas[i] > 0.0)
    }

    /// Analytic two-variable update; returns false when the pair cannot move.
    fn try_update(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let eta = self.k(i, i) + self.k(j, j) - 2.0 * self.k(i, j);
        if eta <= 1e-12 {
            return false;
        }
        let (yi, yj) = (self.labels[i], self.labels[j]);
        let (ai_old, aj_old) = (self.alphas[i], self.alphas[j]);
        let (low, high) = if (yi - yj).abs() > 0.5 {
            let gap = aj_old - ai_old;
            (gap.max(0.0), (self.caps[i] + gap).min(self.caps[j]))
        } else {
            let total = ai_old + aj_old;
            ((total - self.caps[i]).max(0.0), total.min(self.caps[j]))
        };
        if high - low < 1e-12 {
            return false;
        }
        let mut aj_new = aj_old + yj * (self.errors[i] - self.errors[j]) / eta;
        aj_new = aj_new.clamp(low, high);
        if (aj_new - aj_old).abs() < 1e-12 * (aj_new + aj_old + 1e-12) {
            return false;
        }
        let ai_new = ai_old + yi * yj * (aj_old - aj_new);
        let di = yi * (ai_new - ai_old);
        let dj = yj * (aj_new - aj_old);

        let b1 = self.bias - self.errors[i] - di * self.k(i, i) - dj * self.k(i, j);
        let b2 = self.bias - self.errors[j] - di * self.k(i, j) - dj * self.k(j, j);
        let new_bias = if ai_new > SV_EPS && ai_new < self.caps[i] - SV_EPS {
            b1
        } else if aj_new > SV_EPS && aj_new < self.caps[j] - SV_EPS {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = new_bias - self.bias;

        self.alphas[i] = ai_new;
        self.alphas[j] = aj_new;
        self.bias = new_bias;
        for k in 0..self.n {
            self.errors[k] += di * self.k(i, k) + dj * self.k(j, k) + db;
        }
        true
    }

    fn objective(&self) -> f64 {
        let mut obj: f64 = self.alphas.iter().sum();
        for i in 0..self.n {
            if self.alphas[i] == 0.0 {
                continue;
            }
            for j in 0..self.n {
                if self.alphas[j] == 0.0 {
                    continue;
                }
                obj -= 0.5 * self.alphas[i] * self.alphas[j] * self.labels[i] * self.labels[j]
                    * self.k(i, j);
            }
        }
        obj
    }
}

/// Trains a binary machine on labels in {-1,+1}. `weights` maps each sample
/// to its class weight; the effective box is [0, C * weight_i].
pub fn smo_train_binary(
    features: &[Vec<f64>],
    labels: &[f64],
    weights: &[f64],
    kernel: Kernel,
    config: &SvmConfig,
) -> Result<TrainedBinary, SvmError> {
    let n = features.len();
    if n == 0 || labels.len() != n || weights.len() != n {
        return Err(SvmError::Input(format!(
            "inconsistent problem: {n} features, {} labels, {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(SvmError::Input("binary labels must be +1 or -1".into()));
    }
    let positives = labels.iter().filter(|&&y| y > 0.0).count();
    if positives == 0 || positives == n {
        return Err(SvmError::Degenerate(
            "binary training requires both classes present".into(),
        ));
    }
    if config.c <= 0.0 {
        return Err(SvmError::Config(format!("penalty C must be > 0, got {}", config.c)));
    }

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&features[i], &features[j]);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    let caps: Vec<f64> = weights.iter().map(|w| config.c * w).collect();
    let mut solver = Solver {
        gram,
        labels,
        caps: &caps,
        alphas: vec![0.0; n],
        errors: labels.iter().map(|y| -y).collect(),
        bias: 0.0,
        tol: config.tolerance,
        n,
    };

    let mut accepted = 0usize;
    let mut trace = Vec::new();
    'outer: loop {
        let mut progressed = false;
        for i in 0..n {
            if !solver.violates_kkt(i) {
                continue;
            }
            // Partner maximizing |E_i - E_j|, then fallback over the rest.
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                let da = (solver.errors[i] - solver.errors[a]).abs();
                let db = (solver.errors[i] - solver.errors[b]).abs();
                db.partial_cmp(&da).unwrap().then(a.cmp(&b))
            });
            for j in order {
                if solver.try_update(i, j) {
                    progressed = true;
                    accepted += 1;
                    if config.record_objective {
                        trace.push(solver.objective());
                    }
                    break;
                }
            }
            if accepted >= config.max_passes {
                break 'outer;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for i in 0..n {
        if solver.alphas[i] > SV_EPS {
            support_vectors.push(features[i].clone());
            coefficients.push(solver.alphas[i] * labels[i]);
        }
    }
    Ok(TrainedBinary {
        svm: BinarySvm { support_vectors, coefficients, bias: solver.bias, kernel },
        alphas: solver.alphas,
        caps,
        accepted_updates: accepted,
        objective_trace: trace,
    })
}

/// Largest KKT violation over the training set; the optimality certificate
/// used by tests. Zero means every sample satisfies its condition exactly.
pub fn max_kkt_violation(
    trained: &TrainedBinary,
    features: &[Vec<f64>],
    labels: &[f64],
) -> f64 {
    let mut worst = 0.0f64;
    for ((x, &y), (&alpha, &cap)) in features
        .iter()
        .zip(labels)
        .zip(trained.alphas.iter().zip(&trained.caps))
    {
        let margin = y * trained.svm.decision(x);
        let violation = if alpha <= SV_EPS {
            (1.0 - margin).max(0.0)
        } else if alpha >= cap - SV_EPS {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(violation);
    }
    worst
}
