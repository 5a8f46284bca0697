use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::steps")]
    pub steps: u64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::peak_lr")]
    pub peak_lr: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "defaults::warmup_steps")]
    pub warmup_steps: u64,
    #[serde(default)]
    pub min_lr: f64,
    /// Huber threshold on the `[0, 1]` target scale.
    #[serde(default = "defaults::huber_delta")]
    pub huber_delta: f64,
    #[serde(default = "defaults::dropout_p")]
    pub dropout_p: f64,
    #[serde(default)]
    pub seed: u64,
    /// Dev evaluation interval in steps; 0 evaluates only after the last step.
    #[serde(default = "defaults::dev_eval_every")]
    pub dev_eval_every: u64,
    /// Directory receiving `best.ckpt`, `final.ckpt` and `history.jsonl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<PathBuf>,
}

mod defaults {
    pub fn steps() -> u64 {
        60_000
    }
    pub fn batch_size() -> usize {
        160
    }
    pub fn peak_lr() -> f64 {
        3e-5
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.98
    }
    pub fn adam_eps() -> f64 {
        1e-8
    }
    pub fn warmup_steps() -> u64 {
        2000
    }
    pub fn huber_delta() -> f64 {
        1.0
    }
    pub fn dropout_p() -> f64 {
        0.1
    }
    pub fn dev_eval_every() -> u64 {
        1000
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper(0)
    }
}

impl TrainConfig {
    /// 60k steps of batch 160 at peak rate 3e-5 with 2000 warmup steps.
    pub fn paper(seed: u64) -> Self {
        TrainConfig {
            steps: defaults::steps(),
            batch_size: defaults::batch_size(),
            peak_lr: defaults::peak_lr(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            adam_eps: defaults::adam_eps(),
            warmup_steps: defaults::warmup_steps(),
            min_lr: 0.0,
            huber_delta: defaults::huber_delta(),
            dropout_p: defaults::dropout_p(),
            seed,
            dev_eval_every: defaults::dev_eval_every(),
            checkpoint_path: None,
        }
    }

    /// 3000 steps of batch 16 with 100 warmup steps for CPU runs. The narrow
    /// desk head trains from scratch in this budget only with a larger peak
    /// rate.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            steps: 3000,
            batch_size: 16,
            warmup_steps: 100,
            peak_lr: 1e-3,
            dev_eval_every: 250,
            ..Self::paper(seed)
        }
    }

    /// A few hundred steps for smoke tests.
    pub fn tiny(seed: u64) -> Self {
        TrainConfig {
            steps: 500,
            batch_size: 8,
            warmup_steps: 20,
            peak_lr: 1e-3,
            dev_eval_every: 100,
            ..Self::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.steps > 0 && self.warmup_steps >= self.steps {
            return fail(format!(
                "warmup_steps {} must be below steps {}",
                self.warmup_steps, self.steps
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return fail(format!("peak_lr must be positive, got {}", self.peak_lr));
        }
        if !(0.0..=self.peak_lr).contains(&self.min_lr) {
            return fail(format!("min_lr {} must be in [0, peak_lr]", self.min_lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps must be positive".into());
        }
        if !(self.huber_delta > 0.0) {
            return fail("huber_delta must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout_p must be in [0, 1), got {}", self.dropout_p));
        }
        Ok(())
    }
}
