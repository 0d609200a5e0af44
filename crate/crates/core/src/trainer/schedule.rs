use serde::{Deserialize, Serialize};

/// `0.5 * lr0 * (1 + cos(pi * t / total))`.
pub fn cosine_lr(t: f64, total: f64, lr0: f64) -> f64 {
    if total <= 0.0 {
        return lr0;
    }
    let t = t.clamp(0.0, total);
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * t / total).cos())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Annealed per epoch over the whole run.
    #[default]
    Cosine,
}

impl LrSchedule {
    pub fn lr(&self, epoch: u32, epochs: u32, lr0: f64) -> f64 {
        match self {
            LrSchedule::Constant => lr0,
            LrSchedule::Cosine => cosine_lr(f64::from(epoch), f64::from(epochs), lr0),
        }
    }
}
