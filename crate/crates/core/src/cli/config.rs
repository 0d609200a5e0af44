//! Run configuration: one TOML file plus `key=value` overrides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{ClipSpec, CropSpec};
use crate::curriculum::CurriculumParams;
use crate::error::{Error, Result};
use crate::synthcells::{GenerationConfig, Task};
use crate::trainer::TrainConfig;

/// Settings whose values are conventions rather than documented choices.
pub const CONVENTIONS: &[&str] = &[
    "generation.height",
    "generation.width",
    "generation.palette",
    "generation.motion_scale",
    "generation.noise_sigma_range",
    "crop.aspect_ratio_range",
    "crop.out_size",
    "train.beta2",
    "train.eps",
    "train.weight_decay",
    "train.batch_size",
    "train.channels",
    "train.leaky_slope",
    "train.label_smoothing",
    "curriculum.alpha",
    "curriculum.beta",
    "curriculum.l_norm_scale",
    "eval.m",
    "eval.seed",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSection {
    pub enabled: bool,
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub p: f64,
    /// Curriculum length; 0 means the number of training epochs.
    pub total_epochs: u32,
    /// Count distance where `l` saturates; 0 means three standard
    /// deviations of the task's count distribution.
    pub l_norm_scale: f64,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        let d = CurriculumParams::default();
        CurriculumSection {
            enabled: false,
            alpha: d.alpha,
            beta: d.beta,
            c0: d.c0,
            p: d.p,
            total_epochs: 0,
            l_norm_scale: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Views per test sample for the multi-view methods.
    pub m: usize,
    /// Base seed of the evaluation view streams.
    pub seed: u64,
    /// Write per-sample JSONL traces.
    pub traces: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            m: 10,
            seed: 0,
            traces: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub generation: GenerationConfig,
    pub clip: ClipSpec,
    pub crop: CropSpec,
    pub train: TrainConfig,
    pub curriculum: CurriculumSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Wbc,
            seeds: vec![42, 0, 17, 9, 3],
            generation: GenerationConfig::default(),
            clip: ClipSpec::default(),
            crop: CropSpec::default(),
            train: TrainConfig::default(),
            curriculum: CurriculumSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    /// Curriculum parameters resolved against the task and epoch count.
    pub fn curriculum_params(&self) -> CurriculumParams {
        let c = &self.curriculum;
        CurriculumParams {
            alpha: c.alpha,
            beta: c.beta,
            c0: c.c0,
            p: c.p,
            total_epochs: if c.total_epochs == 0 { self.train.epochs } else { c.total_epochs },
            l_norm_scale: if c.l_norm_scale == 0.0 {
                3.0 * self.generation.population.std(self.task)
            } else {
                c.l_norm_scale
            },
        }
    }

    /// Training configuration with the curriculum section applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            curriculum: self.curriculum.enabled.then(|| self.curriculum_params()),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.crop.validate()?;
        if self.clip.clip_len == 0 || self.clip.clip_len > self.generation.n_frames {
            return Err(Error::InvalidConfig(format!(
                "clip.clip_len must lie in [1, {}], got {}",
                self.generation.n_frames, self.clip.clip_len
            )));
        }
        if !(self.train.lr0 > 0.0) {
            return Err(Error::InvalidConfig("train.lr0 must be > 0".into()));
        }
        let train = self.train_config();
        train.validate()?;
        train.arch((3 * self.clip.clip_len, self.crop.out_size, self.crop.out_size), 2)?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.eval.m == 0 {
            return Err(Error::InvalidConfig("eval.m must be >= 1".into()));
        }
        Ok(())
    }

    /// TOML snapshot with a `conventions` list naming unstated defaults.
    pub fn snapshot(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            conventions: &'a [&'a str],
            #[serde(flatten)]
            config: &'a RunConfig,
        }
        toml::to_string_pretty(&Snapshot {
            conventions: CONVENTIONS,
            config: self,
        })
        .map_err(|e| Error::Other(format!("cannot serialize config: {e}")))
    }
}

/// Parse the right-hand side of an override as a TOML value, falling back to
/// a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set a dotted key, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("malformed override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

/// Split `key=value`.
pub fn split_override(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::InvalidConfig(format!("override {s:?} is not key=value")))
}

/// Read the file (if any), apply overrides in order, deserialize and validate.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<toml::Table>().map_err(|e| {
                let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
                Error::Parse {
                    path: p.to_path_buf(),
                    line,
                    message: e.message().to_string(),
                }
            })?
        }
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}
