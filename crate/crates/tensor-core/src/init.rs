//! Deterministic weight initialization. All draws come from a caller-owned
//! seeded generator so two builds from the same seed are identical.

use crate::tensor::Tensor;
use rand::Rng;

/// He-style fan-in-scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
pub fn he_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    uniform(shape, limit, rng)
}

/// Uniform init in (-1/sqrt(fan_in), +1/sqrt(fan_in)), used for recurrent
/// and attention weights.
pub fn inv_sqrt_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let limit = 1.0 / (fan_in as f64).sqrt();
    uniform(shape, limit, rng)
}

fn uniform<R: Rng>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape is well-formed")
}
