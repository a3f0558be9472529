//! Optimizer settings shared by the detector and generator training stages.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub epsilon: f64,
    pub initial_lr: f64,
    pub schedule: LrSchedule,
    pub weight_decay: f64,
    pub epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            optimizer: Optimizer::Adam,
            epsilon: 1e-8,
            initial_lr: 1e-5,
            schedule: LrSchedule::Cosine,
            weight_decay: 0.05,
            epochs: 20,
        }
    }
}

impl TrainingConfig {
    /// Learning rate at `step` of `total_steps` under the configured schedule.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        match self.schedule {
            LrSchedule::Cosine => cosine_lr(self.initial_lr, step, total_steps),
        }
    }
}

/// Cosine annealing from `initial` at step 0 to zero at `total`.
pub fn cosine_lr(initial: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return initial;
    }
    let t = step.min(total) as f64 / total as f64;
    0.5 * initial * (1.0 + (PI * t).cos())
}
