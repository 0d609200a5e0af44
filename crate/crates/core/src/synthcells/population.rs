use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which cell type a label or difficulty feature refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Rbc,
    Wbc,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbc" => Ok(Task::Rbc),
            "wbc" => Ok(Task::Wbc),
            _ => Err(Error::InvalidConfig(format!("unknown task {s:?} (rbc|wbc)"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Rbc => "rbc",
            Task::Wbc => "wbc",
        })
    }
}

/// Normal distributions of the per-video cell counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub rbc_mean: f64,
    pub rbc_std: f64,
    pub wbc_mean: f64,
    pub wbc_std: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            rbc_mean: 5000.0,
            rbc_std: 97.9,
            wbc_mean: 202.0,
            wbc_std: 95.5,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, mean, std) in [
            ("rbc", self.rbc_mean, self.rbc_std),
            ("wbc", self.wbc_mean, self.wbc_std),
        ] {
            if !(mean.is_finite() && mean > 0.0) {
                return Err(Error::InvalidConfig(format!("{name}_mean must be > 0, got {mean}")));
            }
            if !(std.is_finite() && std >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name}_std must be >= 0, got {std}")));
            }
        }
        Ok(())
    }

    pub fn mean(&self, task: Task) -> f64 {
        match task {
            Task::Rbc => self.rbc_mean,
            Task::Wbc => self.wbc_mean,
        }
    }

    pub fn std(&self, task: Task) -> f64 {
        match task {
            Task::Rbc => self.rbc_std,
            Task::Wbc => self.wbc_std,
        }
    }
}

fn draw_count<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> u32 {
    let x = if std == 0.0 {
        mean
    } else {
        Normal::new(mean, std).expect("validated").sample(rng)
    };
    x.round().max(0.0) as u32
}

/// Draw `(rbc_count, wbc_count)` from the configured normals, rounded and
/// clamped at zero.
pub fn sample_population<R: Rng + ?Sized>(rng: &mut R, spec: &PopulationSpec) -> Result<(u32, u32)> {
    spec.validate()?;
    let rbc = draw_count(rng, spec.rbc_mean, spec.rbc_std);
    let wbc = draw_count(rng, spec.wbc_mean, spec.wbc_std);
    Ok((rbc, wbc))
}

/// `(rbc_high, wbc_high)`: a count is "high" only when strictly above the mean.
pub fn label_counts(rbc_count: u32, wbc_count: u32, spec: &PopulationSpec) -> (bool, bool) {
    (
        f64::from(rbc_count) > spec.rbc_mean,
        f64::from(wbc_count) > spec.wbc_mean,
    )
}
