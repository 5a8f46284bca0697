//! Synthetic binaural feature data with a known target map.
//!
//! Each sample draws an SNR (dB), a listener (with per-ear audiograms) and an
//! inter-channel signal coherence `rho`. Features for layer `l`, frame `f`:
//!
//! ```text
//! left(l, f)  = A · c_l · g · (m_l + u(f)) / sqrt(2)                          + noise
//! right(l, f) = A · c_l · g · (m_l + rho·u(f) + sqrt(1 - rho²)·w(f)) / sqrt(2) + noise
//! ```
//!
//! with `A` the signal amplitude, `g = 1 / (1 + 10^(-snr/20))`, `c_l = (l + 1) / L`, `m_l` a fixed
//! per-layer template shared by the whole dataset, `u`, `w` independent
//! unit-variance AR(1) sequences and unit-variance white noise. The target is
//!
//! ```text
//! clamp(100·σ(slope·(snr − audiogram_weight·mean_audiogram + binaural_weight·rho))
//!       + target_noise·N(0,1), 0, 100)
//! ```
//!
//! where `mean_audiogram` averages both ears' thresholds. SNR is visible in
//! every channel's signal-to-noise balance; `rho` only in the relation
//! between channels.

use serde::{Deserialize, Serialize};

use crate::data::{Audiogram, Dataset, Sample, AUDIOGRAM_FREQUENCIES_HZ};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_samples: usize,
    pub num_layers: usize,
    pub feature_dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub snr_min: f64,
    pub snr_max: f64,
    #[serde(default)]
    pub rho_min: f64,
    #[serde(default = "one")]
    pub rho_max: f64,
    pub target_noise: f64,
    #[serde(default = "defaults::slope")]
    pub slope: f64,
    #[serde(default = "defaults::audiogram_weight")]
    pub audiogram_weight: f64,
    #[serde(default = "defaults::binaural_weight")]
    pub binaural_weight: f64,
    #[serde(default = "defaults::signal_amplitude")]
    pub signal_amplitude: f64,
    /// AR(1) coefficient of the signal fluctuations.
    #[serde(default = "defaults::smoothness")]
    pub smoothness: f64,
    #[serde(default = "defaults::listeners")]
    pub listeners: usize,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

mod defaults {
    pub fn slope() -> f64 {
        0.2
    }
    pub fn audiogram_weight() -> f64 {
        0.25
    }
    pub fn binaural_weight() -> f64 {
        3.0
    }
    pub fn signal_amplitude() -> f64 {
        2.0
    }
    pub fn smoothness() -> f64 {
        0.95
    }
    pub fn listeners() -> usize {
        40
    }
}

impl SyntheticConfig {
    /// 200 small samples (L=4, d=32) for smoke tests.
    pub fn tiny(seed: u64) -> Self {
        SyntheticConfig {
            num_samples: 200,
            num_layers: 4,
            feature_dim: 32,
            min_frames: 20,
            max_frames: 60,
            snr_min: -10.0,
            snr_max: 10.0,
            rho_min: 0.0,
            rho_max: 1.0,
            target_noise: 2.0,
            slope: defaults::slope(),
            audiogram_weight: defaults::audiogram_weight(),
            binaural_weight: defaults::binaural_weight(),
            signal_amplitude: defaults::signal_amplitude(),
            smoothness: defaults::smoothness(),
            listeners: defaults::listeners(),
            seed,
        }
    }

    /// 2000 small samples for CPU-scale training runs.
    pub fn desk(seed: u64) -> Self {
        SyntheticConfig {
            num_samples: 2000,
            ..Self::tiny(seed)
        }
    }

    /// 1200 desk-sized samples whose targets depend mostly on the
    /// interaural correlation: a narrow SNR band, a weak audiogram effect and
    /// a strong binaural term.
    pub fn binaural(seed: u64) -> Self {
        SyntheticConfig {
            num_samples: 1200,
            snr_min: -6.0,
            snr_max: -4.0,
            slope: 0.4,
            audiogram_weight: 0.02,
            binaural_weight: 10.0,
            signal_amplitude: 5.0,
            ..Self::tiny(seed)
        }
    }

    /// Dimensions of a large speech model (L=25, d=1024).
    pub fn paper(seed: u64) -> Self {
        SyntheticConfig {
            num_samples: 2000,
            num_layers: 25,
            feature_dim: 1024,
            max_frames: 300,
            ..Self::tiny(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_samples == 0 || self.num_layers == 0 || self.feature_dim == 0 || self.listeners == 0 {
            return fail("num_samples, num_layers, feature_dim and listeners must be positive".into());
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return fail(format!(
                "frame range [{}, {}] invalid",
                self.min_frames, self.max_frames
            ));
        }
        if !(self.snr_min <= self.snr_max) || !self.snr_min.is_finite() || !self.snr_max.is_finite() {
            return fail(format!("snr range [{}, {}] invalid", self.snr_min, self.snr_max));
        }
        if !(0.0 <= self.rho_min && self.rho_min <= self.rho_max && self.rho_max <= 1.0) {
            return fail(format!("rho range [{}, {}] invalid", self.rho_min, self.rho_max));
        }
        if !(self.target_noise >= 0.0) {
            return fail("target_noise must be non-negative".into());
        }
        if !(self.signal_amplitude > 0.0 && self.signal_amplitude.is_finite()) {
            return fail("signal_amplitude must be positive".into());
        }
        if !(0.0..1.0).contains(&self.smoothness) {
            return fail("smoothness must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Latent factors behind one synthetic sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTruth {
    pub snr: f64,
    pub rho: f64,
    pub mean_audiogram: f64,
    /// Target before observation noise.
    pub clean_target: f64,
}

pub struct SyntheticDataset<T> {
    pub dataset: Dataset<T>,
    pub truth: Vec<SyntheticTruth>,
}

/// Fraction of signal amplitude at a given SNR, `10^(snr/20) / (1 + 10^(snr/20))`.
pub fn signal_gain(snr_db: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(-snr_db / 20.0))
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Noise-free target for the given latent factors.
pub fn synthetic_target(snr: f64, mean_audiogram: f64, rho: f64, config: &SyntheticConfig) -> f64 {
    let z = config.slope
        * (snr - config.audiogram_weight * mean_audiogram + config.binaural_weight * rho);
    (100.0 * logistic(z)).clamp(0.0, 100.0)
}

fn draw_audiograms(rng: &mut RngStream) -> (Audiogram, Audiogram) {
    let base = rng.uniform_in(0.0, 40.0);
    let slope = rng.uniform_in(0.0, 8.0);
    let left: Vec<f64> = (0..AUDIOGRAM_FREQUENCIES_HZ.len())
        .map(|k| (base + slope * k as f64 + 3.0 * rng.normal()).clamp(0.0, 90.0))
        .collect();
    let right: Vec<f64> = left
        .iter()
        .map(|&v| (v + 5.0 * rng.normal()).clamp(0.0, 90.0))
        .collect();
    (
        Audiogram::new(&left).expect("valid thresholds"),
        Audiogram::new(&right).expect("valid thresholds"),
    )
}

/// `frames × dim` AR(1) sequence with unit stationary variance.
fn ar1(rng: &mut RngStream, frames: usize, dim: usize, a: f64) -> Vec<f64> {
    let innovation = (1.0 - a * a).sqrt();
    let mut out = Vec::with_capacity(frames * dim);
    out.extend((0..dim).map(|_| rng.normal()));
    for f in 1..frames {
        for k in 0..dim {
            let prev = out[(f - 1) * dim + k];
            out.push(a * prev + innovation * rng.normal());
        }
    }
    out
}

pub fn generate_synthetic<T: Scalar>(config: &SyntheticConfig) -> Result<SyntheticDataset<T>> {
    config.validate()?;
    let mut rng = RngStream::new(config.seed);
    let (layers, dim) = (config.num_layers, config.feature_dim);
    let listeners: Vec<(Audiogram, Audiogram)> =
        (0..config.listeners).map(|_| draw_audiograms(&mut rng)).collect();
    let templates: Vec<f64> = (0..layers * dim).map(|_| rng.normal()).collect();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;

    let mut samples = Vec::with_capacity(config.num_samples);
    let mut truth = Vec::with_capacity(config.num_samples);
    for i in 0..config.num_samples {
        let listener = rng.int_in(0, config.listeners - 1);
        let system = rng.int_in(0, 4);
        let snr = rng.uniform_in(config.snr_min, config.snr_max);
        let rho = rng.uniform_in(config.rho_min, config.rho_max);
        let frames = rng.int_in(config.min_frames, config.max_frames);
        let (aud_l, aud_r) = listeners[listener];
        let mean_audiogram = (aud_l.mean() + aud_r.mean()) / 2.0;
        let clean_target = synthetic_target(snr, mean_audiogram, rho, config);
        let observed = (clean_target + config.target_noise * rng.normal()).clamp(0.0, 100.0);

        let u = ar1(&mut rng, frames, dim, config.smoothness);
        let w = ar1(&mut rng, frames, dim, config.smoothness);
        let g = signal_gain(snr);
        let side = (1.0 - rho * rho).max(0.0).sqrt();
        let mut left = Vec::with_capacity(layers * frames * dim);
        let mut right = Vec::with_capacity(layers * frames * dim);
        for l in 0..layers {
            let scale = config.signal_amplitude * g * (l + 1) as f64 / layers as f64 * inv_sqrt2;
            let template = &templates[l * dim..(l + 1) * dim];
            for f in 0..frames {
                for k in 0..dim {
                    let uf = u[f * dim + k];
                    let wf = w[f * dim + k];
                    left.push(T::lit(scale * (template[k] + uf) + rng.normal()));
                    right.push(T::lit(
                        scale * (template[k] + rho * uf + side * wf) + rng.normal(),
                    ));
                }
            }
        }
        samples.push(Sample {
            id: format!("syn{i:05}"),
            left: Tensor::new(vec![layers, frames, dim], left)?,
            right: Tensor::new(vec![layers, frames, dim], right)?,
            audiogram_left: aud_l,
            audiogram_right: aud_r,
            correctness: observed,
            scene: format!("S{i:05}"),
            listener: format!("L{listener:03}"),
            system: format!("E{system:02}"),
            partition: None,
            split: None,
            difficulty: None,
        });
        truth.push(SyntheticTruth {
            snr,
            rho,
            mean_audiogram,
            clean_target,
        });
    }
    Ok(SyntheticDataset {
        dataset: Dataset::new(samples)?,
        truth,
    })
}
