use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::optim::TrainConfig;

/// Learning rate after `step` updates: linear warmup from 0 to `peak_lr`,
/// then cosine decay to `min_lr` at `steps`.
pub fn lr_at(step: u64, config: &TrainConfig) -> Result<f64> {
    if step > config.steps {
        return Err(Error::Usage(format!(
            "step {step} outside schedule [0, {}]",
            config.steps
        )));
    }
    let (peak, min) = (config.peak_lr, config.min_lr);
    if step < config.warmup_steps {
        return Ok(peak * step as f64 / config.warmup_steps as f64);
    }
    let span = (config.steps - config.warmup_steps) as f64;
    if span == 0.0 {
        return Ok(peak);
    }
    let progress = (step - config.warmup_steps) as f64 / span;
    Ok(min + 0.5 * (peak - min) * (1.0 + (PI * progress).cos()))
}
