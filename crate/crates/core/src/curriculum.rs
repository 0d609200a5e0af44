//! Competence-based curriculum: a per-sample difficulty `d = alpha*b + beta*l`
//! (both features normalized to `[0, 1]`) and a competence schedule
//! `c(t) = min(1, (t*(1 - c0^p)/T + c0^p)^(1/p))`. At epoch `t` only samples
//! with `d <= c(t)` are trained on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthcells::degrade::MAX_BLUR_RADIUS as MAX_BLUR;
use crate::synthcells::{ManifestEntry, PopulationSpec, Task};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumParams {
    pub alpha: f64,
    pub beta: f64,
    /// Competence at `t = 0`.
    pub c0: f64,
    /// Length of the curriculum phase in epochs.
    pub total_epochs: u32,
    pub p: f64,
    /// Count distance at which `l` saturates to 1.
    pub l_norm_scale: f64,
}

impl Default for CurriculumParams {
    fn default() -> Self {
        CurriculumParams {
            alpha: 0.5,
            beta: 0.5,
            c0: 0.05,
            total_epochs: 1000,
            p: 2.0,
            l_norm_scale: 3.0 * PopulationSpec::default().wbc_std,
        }
    }
}

impl CurriculumParams {
    /// Defaults with `l` normalized by three standard deviations of the
    /// task's count distribution.
    pub fn for_task(task: Task, population: &PopulationSpec, total_epochs: u32) -> Self {
        CurriculumParams {
            total_epochs,
            l_norm_scale: 3.0 * population.std(task),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("curriculum: {m}")));
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return bad("alpha and beta must lie in [0, 1]");
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return bad("alpha + beta must equal 1");
        }
        if !(self.c0 > 0.0 && self.c0 <= 1.0) {
            return bad("c0 must lie in (0, 1]");
        }
        if self.total_epochs == 0 {
            return bad("total_epochs must be >= 1");
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return bad("p must be >= 1");
        }
        if !(self.l_norm_scale > 0.0 && self.l_norm_scale.is_finite()) {
            return bad("l_norm_scale must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleDifficulty {
    pub b_raw: f64,
    pub l_raw: f64,
    pub b_norm: f64,
    pub l_norm: f64,
    pub d: f64,
}

pub fn difficulty(b_raw: f64, l_raw: f64, params: &CurriculumParams) -> Result<SampleDifficulty> {
    if !(0.0..=f64::from(MAX_BLUR)).contains(&b_raw) {
        return Err(Error::out_of_range("blur radius b", b_raw, "[0, 10]"));
    }
    if !(l_raw >= 0.0 && l_raw.is_finite()) {
        return Err(Error::out_of_range("count distance l", l_raw, "[0, inf)"));
    }
    let b_norm = b_raw / f64::from(MAX_BLUR);
    let l_norm = (l_raw / params.l_norm_scale).min(1.0);
    Ok(SampleDifficulty {
        b_raw,
        l_raw,
        b_norm,
        l_norm,
        d: params.alpha * b_norm + params.beta * l_norm,
    })
}

pub fn competence(t: u32, params: &CurriculumParams) -> f64 {
    let c0p = params.c0.powf(params.p);
    let inner = f64::from(t) * (1.0 - c0p) / f64::from(params.total_epochs) + c0p;
    // Exact at the ends of the schedule.
    if t == 0 {
        return params.c0;
    }
    if t >= params.total_epochs {
        return 1.0;
    }
    inner.powf(1.0 / params.p).min(1.0)
}

/// Difficulty of a manifest entry for one task.
pub fn entry_difficulty(entry: &ManifestEntry, task: Task, params: &CurriculumParams) -> Result<SampleDifficulty> {
    let f = entry
        .difficulty
        .ok_or_else(|| Error::MissingDifficulty(entry.path.clone()))?;
    difficulty(f64::from(f.b), f.l(task), params)
}

/// Entries whose difficulty does not exceed the competence at epoch `t`,
/// in their original order.
pub fn eligible_set<'a>(
    entries: &[&'a ManifestEntry],
    t: u32,
    params: &CurriculumParams,
    task: Task,
) -> Result<Vec<&'a ManifestEntry>> {
    let c = competence(t, params);
    let mut out = Vec::new();
    for &e in entries {
        if entry_difficulty(e, task, params)?.d <= c {
            out.push(e);
        }
    }
    Ok(out)
}

/// Indices `i` with `d[i] <= c(t)`.
pub fn eligible_indices(difficulties: &[f64], t: u32, params: &CurriculumParams) -> Vec<usize> {
    let c = competence(t, params);
    (0..difficulties.len()).filter(|&i| difficulties[i] <= c).collect()
}

/// CSV of `(t, c(t))` for `t = 0..=t_max`.
pub fn competence_curve_csv(params: &CurriculumParams, t_max: u32) -> String {
    let mut s = String::from("t,competence\n");
    for t in 0..=t_max {
        s.push_str(&format!("{t},{}\n", competence(t, params)));
    }
    s
}

/// CSV of per-epoch eligible-set sizes.
pub fn eligible_sizes_csv(sizes: &[(u32, usize)]) -> String {
    let mut s = String::from("epoch,eligible\n");
    for (t, n) in sizes {
        s.push_str(&format!("{t},{n}\n"));
    }
    s
}
