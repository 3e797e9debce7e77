use crate::SvmError;

/// Kernel functions. RBF is the production choice; the linear kernel exists
/// as a baseline for tests that demonstrate non-linearity is required.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

/// exp(-gamma * ||x - y||^2) with input validation.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::Input(format!(
            "rbf_kernel: vectors have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if gamma <= 0.0 {
        return Err(SvmError::Config(format!("rbf_kernel: gamma must be > 0, got {gamma}")));
    }
    Ok(Kernel::Rbf { gamma }.eval(x, y))
}

/// Kernel width policy: `Scale` adapts to the data as 1/(d * Var(X)) over
/// all feature entries; `Fixed` uses an explicit positive width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPolicy {
    Scale,
    Fixed(f64),
}

impl GammaPolicy {
    pub fn resolve(&self, features: &[Vec<f64>]) -> Result<f64, SvmError> {
        match *self {
            GammaPolicy::Fixed(g) => {
                if g <= 0.0 {
                    Err(SvmError::Config(format!("explicit gamma must be > 0, got {g}")))
                } else {
                    Ok(g)
                }
            }
            GammaPolicy::Scale => {
                let dim = features.first().map(|f| f.len()).unwrap_or(0);
                if dim == 0 {
                    return Err(SvmError::Input("cannot resolve gamma on empty features".into()));
                }
                let n = (features.len() * dim) as f64;
                let mean: f64 = features.iter().flatten().sum::<f64>() / n;
                let var: f64 =
                    features.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if var <= 1e-12 {
                    Ok(1.0 / dim as f64)
                } else {
                    Ok(1.0 / (dim as f64 * var))
                }
            }
        }
    }
}
