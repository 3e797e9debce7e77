//! Principal component analysis via cyclic Jacobi eigendecomposition of the
//! sample covariance matrix. Deterministic: components carry a fixed sign
//! convention (first entry of magnitude above 1e-12 is positive) and ties
//! are impossible to observe through the sorted eigenvalue order.

use crate::SvmError;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal component rows, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the covariance matrix, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|comp| comp.iter().zip(x).zip(&self.mean).map(|((c, v), m)| c * (v - m)).sum())
            .collect()
    }

    pub fn transform_batch(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.transform(x)).collect()
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let dim = self.mean.len();
        let mut out = self.mean.clone();
        for (comp, &zi) in self.components.iter().zip(z) {
            for d in 0..dim {
                out[d] += comp[d] * zi;
            }
        }
        out
    }
}

pub fn pca_fit(data: &[Vec<f64>], n_components: usize) -> Result<PcaModel, SvmError> {
    let n = data.len();
    if n < 2 {
        return Err(SvmError::Input("PCA requires at least two samples".into()));
    }
    let dim = data[0].len();
    if data.iter().any(|x| x.len() != dim) {
        return Err(SvmError::Input("ragged data matrix".into()));
    }
    if n_components == 0 || n_components > dim.min(n) {
        return Err(SvmError::Config(format!(
            "n_components {n_components} outside [1, min(samples={n}, dim={dim})]"
        )));
    }
    let mut mean = vec![0.0; dim];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // Sample covariance (divisor n-1).
    let mut cov = vec![0.0; dim * dim];
    for x in data {
        let centered: Vec<f64> = x.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[i * dim + j] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            cov[i * dim + j] /= denom;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }

    let (mut eigenvalues, mut vectors) = jacobi_eigh(cov, dim);
    // Sort descending by eigenvalue, dragging the vectors along.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap().then(a.cmp(&b)));
    eigenvalues = order.iter().map(|&i| eigenvalues[i]).collect();
    vectors = order.iter().map(|&i| vectors[i].clone()).collect();

    let mut components = Vec::with_capacity(n_components);
    for mut v in vectors.into_iter().take(n_components) {
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                for x in &mut v {
                    *x = -*x;
                }
            }
        }
        components.push(v);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: eigenvalues.into_iter().take(n_components).collect(),
    })
}

/// Cyclic Jacobi rotations on a symmetric matrix. Returns (eigenvalues,
/// eigenvectors-as-rows), unsorted.
fn jacobi_eigh(mut a: Vec<f64>, dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    let max_sweeps = 128;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..dim {
            for j in i + 1..dim {
                off += a[i * dim + j] * a[i * dim + j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = a[p * dim + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..dim).map(|i| a[i * dim + i]).collect();
    // Column k of v is the eigenvector for eigenvalue k; emit as rows.
    let vectors: Vec<Vec<f64>> =
        (0..dim).map(|k| (0..dim).map(|row| v[row * dim + k]).collect()).collect();
    (eigenvalues, vectors)
}

/// Eigenvalues of a symmetric matrix, descending. Exposed for tests that
/// certify Gram-matrix positive semidefiniteness.
pub fn symmetric_eigenvalues(matrix: &[f64], dim: usize) -> Vec<f64> {
    let (mut eig, _) = jacobi_eigh(matrix.to_vec(), dim);
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig
}
