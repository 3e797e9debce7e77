//! Class-conditional Doppler signatures. Each class gets a distinct
//! time-frequency template over the 32 Doppler bins evolving across 32 time
//! steps; antennas observe a shared per-event instance through small gain
//! and phase perturbations so their errors are correlated rather than
//! independent, which is the regime where majority voting helps.

use crate::window::{DataError, Dataset, DopplerWindow, Result, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

pub const NUM_ANTENNAS: usize = 4;
pub const DEFAULT_NOISE: f64 = 0.15;
pub const SCENARIO_TAG: &str = "synthetic";

/// Peak template amplitude; keeps class structure well above the default
/// noise floor while a 10x noise increase drowns it.
const TEMPLATE_AMP: f64 = 2.0;

const ZERO_DOPPLER_BIN: f64 = 16.0;

pub const CLASS_NAMES_5: [&str; 5] = ["empty", "sitting", "walking", "running", "jumping"];
pub const CLASS_NAMES_8: [&str; 8] =
    ["empty", "sitting", "walking", "running", "jumping", "standing", "stand up", "arm gym"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Number of activity classes; 5 or 8.
    pub classes: usize,
    /// Windows generated per class per antenna.
    pub per_class: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { classes: 5, per_class: 100, noise: DEFAULT_NOISE, seed: 7 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes != 5 && self.classes != 8 {
            return Err(DataError::Config(format!(
                "class count must be one of {{5, 8}}, got {}",
                self.classes
            )));
        }
        if self.per_class == 0 {
            return Err(DataError::Config("per-class window count must be >= 1".into()));
        }
        if self.noise < 0.0 {
            return Err(DataError::Config(format!(
                "noise amplitude must be >= 0, got {}",
                self.noise
            )));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        match self.classes {
            5 => CLASS_NAMES_5.iter().map(|s| s.to_string()).collect(),
            _ => CLASS_NAMES_8.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Per-event instance parameters shared by all four antennas.
struct EventInstance {
    phase: f64,
    amp: f64,
    freq_scale: f64,
}

fn gaussian(x: f64, center: f64, width: f64) -> f64 {
    let d = (x - center) / width;
    (-0.5 * d * d).exp()
}

/// Template value for class `label` at (time step, Doppler bin).
fn template(label: usize, t: f64, bin: f64, inst: &EventInstance) -> f64 {
    let steps = DopplerWindow::TIME_STEPS as f64;
    let amp = TEMPLATE_AMP * inst.amp;
    match label {
        // Empty room: energy confined to the zero-Doppler bin.
        0 => amp * gaussian(bin, ZERO_DOPPLER_BIN, 0.5),
        // Sitting: one brief low-band transient.
        1 => {
            let envelope = gaussian(t, 10.0 + 3.0 * inst.phase.sin(), 2.5);
            let offset = 3.5 * gaussian(t, 10.0 + 3.0 * inst.phase.sin(), 3.0);
            amp * envelope * gaussian(bin, ZERO_DOPPLER_BIN + offset, 1.2)
        }
        // Walking: mid-band ridge oscillating slowly.
        2 => {
            let center = ZERO_DOPPLER_BIN
                + 5.0 * (2.0 * PI * 1.4 * inst.freq_scale * t / steps + inst.phase).sin();
            amp * gaussian(bin, center, 1.6)
        }
        // Running: wider ridge at higher oscillation frequency.
        3 => {
            let center = ZERO_DOPPLER_BIN
                + 7.0 * (2.0 * PI * 3.2 * inst.freq_scale * t / steps + inst.phase).sin();
            1.05 * amp * gaussian(bin, center, 2.4)
        }
        // Jumping: broadband bursts.
        4 => {
            let burst_phase = inst.phase.rem_euclid(2.0 * PI) / (2.0 * PI);
            let mut v = 0.0;
            for k in 0..3 {
                let tau = (4.0 + burst_phase * 6.0) + k as f64 * 10.0;
                v += gaussian(t, tau, 1.6);
            }
            0.9 * amp * v * gaussian(bin, ZERO_DOPPLER_BIN, 6.0)
        }
        // Standing: near-zero Doppler with a small sway.
        5 => {
            let center = ZERO_DOPPLER_BIN + 0.9 * (2.0 * PI * t / steps + inst.phase).sin();
            0.8 * amp * gaussian(bin, center, 1.0)
        }
        // Stand up: a single upward chirp.
        6 => {
            let onset = 8.0 + 2.0 * inst.phase.sin();
            let progress = ((t - onset) / 12.0).clamp(0.0, 1.0);
            let envelope = gaussian(t, onset + 6.0, 4.0);
            amp * envelope * gaussian(bin, ZERO_DOPPLER_BIN + 7.0 * progress, 1.5)
        }
        // Arm gym: fast symmetric narrow bursts around mid band.
        7 => {
            let swing = (2.0 * PI * 2.6 * inst.freq_scale * t / steps + inst.phase).sin();
            let side = if swing >= 0.0 { 6.0 } else { -6.0 };
            amp * swing.abs() * gaussian(bin, ZERO_DOPPLER_BIN + side, 1.0)
        }
        _ => unreachable!("label validated against class count"),
    }
}

/// Generates a dataset fully determined by `config.seed`. Split assignment
/// starts as all-train; callers apply [`crate::split_dataset`] afterwards.
pub fn generate_synthetic_dataset(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise).expect("validated noise");
    let channel_gains = [1.0f64, 0.85, 1.15];
    let mut windows =
        Vec::with_capacity(config.classes * config.per_class * NUM_ANTENNAS);

    for label in 0..config.classes {
        for _ in 0..config.per_class {
            let inst = EventInstance {
                phase: rng.gen_range(0.0..2.0 * PI),
                amp: rng.gen_range(0.8..1.2),
                freq_scale: rng.gen_range(0.9..1.1),
            };
            for _antenna in 0..NUM_ANTENNAS {
                let gain: f64 = rng.gen_range(0.75..1.25);
                let phase_shift: f64 = rng.gen_range(-0.35..0.35);
                let antenna_inst = EventInstance {
                    phase: inst.phase + phase_shift,
                    amp: inst.amp * gain,
                    freq_scale: inst.freq_scale,
                };
                let mut values = Vec::with_capacity(DopplerWindow::VOLUME);
                for t in 0..DopplerWindow::TIME_STEPS {
                    for bin in 0..DopplerWindow::BINS {
                        let base = template(label, t as f64, bin as f64, &antenna_inst);
                        for gain_c in channel_gains {
                            let v = base * gain_c + noise.sample(&mut rng);
                            values.push(v as f32);
                        }
                    }
                }
                windows.push(DopplerWindow {
                    values,
                    label,
                    antenna: _antenna,
                    scenario: SCENARIO_TAG.to_string(),
                });
            }
        }
    }

    // Interleave into event-major order: generation above is
    // class-major/event-major already, with the four antenna views of each
    // event consecutive.
    let splits = vec![Split::Train; windows.len()];
    let dataset = Dataset {
        windows,
        class_names: config.class_names(),
        splits,
        seed: config.seed,
        antennas: NUM_ANTENNAS,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Separability certificate: mean pairwise L2 distance between class means,
/// and mean in-class standard deviation, over flattened windows.
pub fn separability(dataset: &Dataset) -> (f64, f64) {
    let k = dataset.class_count();
    let dim = DopplerWindow::VOLUME;
    let mut means = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for w in &dataset.windows {
        counts[w.label] += 1;
        for (m, &v) in means[w.label].iter_mut().zip(&w.values) {
            *m += v as f64;
        }
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= c as f64;
        }
    }
    let mut pair_dist = 0.0;
    let mut pairs = 0;
    for a in 0..k {
        for b in a + 1..k {
            let d2: f64 =
                means[a].iter().zip(&means[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            pair_dist += d2.sqrt();
            pairs += 1;
        }
    }
    pair_dist /= pairs as f64;

    let mut within = 0.0;
    for label in 0..k {
        let mut sq = 0.0;
        for w in dataset.windows.iter().filter(|w| w.label == label) {
            sq += w
                .values
                .iter()
                .zip(&means[label])
                .map(|(&v, m)| (v as f64 - m) * (v as f64 - m))
                .sum::<f64>();
        }
        within += (sq / counts[label] as f64).sqrt();
    }
    within /= k as f64;
    (pair_dist, within)
}
