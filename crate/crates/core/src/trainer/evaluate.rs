//! Test-time scoring: single-view baseline and both multi-view aggregators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiview::{aggregate_mvm, aggregate_mvwcos, view_prediction, Augmenter, Predictor, ViewPrediction};
use crate::rng::child_rng;

use super::data::{SourceAugmenter, ViewSource};

/// Views per predictor call, rounded up to whole samples.
const VIEW_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMethod {
    Baseline,
    Mvm,
    Mvwcos,
}

impl EvalMethod {
    pub const ALL: [EvalMethod; 3] = [EvalMethod::Baseline, EvalMethod::Mvm, EvalMethod::Mvwcos];

    pub fn name(self) -> &'static str {
        match self {
            EvalMethod::Baseline => "baseline",
            EvalMethod::Mvm => "MVM",
            EvalMethod::Mvwcos => "MVWCo-S",
        }
    }
}

impl std::str::FromStr for EvalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "baseline" => Ok(EvalMethod::Baseline),
            "mvm" => Ok(EvalMethod::Mvm),
            "mvwcos" => Ok(EvalMethod::Mvwcos),
            _ => Err(Error::InvalidConfig(format!("unknown evaluation method {s:?}"))),
        }
    }
}

/// Per-sample record of every view and each method's decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub index: usize,
    pub label: usize,
    pub views: Vec<ViewPrediction>,
    pub baseline: usize,
    pub mvm: usize,
    pub mvwcos: usize,
}

impl SampleTrace {
    pub fn prediction(&self, method: EvalMethod) -> usize {
        match method {
            EvalMethod::Baseline => self.baseline,
            EvalMethod::Mvm => self.mvm,
            EvalMethod::Mvwcos => self.mvwcos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub m: usize,
    pub baseline: f64,
    pub mvm: f64,
    pub mvwcos: f64,
    pub traces: Vec<SampleTrace>,
}

impl EvalReport {
    pub fn accuracy(&self, method: EvalMethod) -> f64 {
        match method {
            EvalMethod::Baseline => self.baseline,
            EvalMethod::Mvm => self.mvm,
            EvalMethod::Mvwcos => self.mvwcos,
        }
    }

    /// One JSON object per sample.
    pub fn traces_jsonl(&self) -> String {
        let mut s = String::new();
        for t in &self.traces {
            s.push_str(&serde_json::to_string(t).expect("trace serializes"));
            s.push('\n');
        }
        s
    }
}

/// Score every sample of `src` with `m` augmented views. Sample `i` draws its
/// views from stream `child_rng(seed, i)`; the baseline is the first view.
pub fn evaluate_all<P, S>(predictor: &P, src: &S, m: usize, seed: u64) -> Result<EvalReport>
where
    P: Predictor<Vec<f32>>,
    S: ViewSource + ?Sized,
{
    if m == 0 {
        return Err(Error::EmptyViews);
    }
    if src.is_empty() {
        return Err(Error::InvalidConfig("evaluation set is empty".into()));
    }
    let aug = SourceAugmenter(src);
    let per_chunk = VIEW_CHUNK.div_ceil(m).max(1);
    let mut traces = Vec::with_capacity(src.len());
    let mut start = 0;
    while start < src.len() {
        let end = (start + per_chunk).min(src.len());
        let mut inputs = Vec::with_capacity((end - start) * m);
        for i in start..end {
            let mut rng = child_rng(seed, i as u64);
            for _ in 0..m {
                inputs.push(aug.augment(&i, &mut rng)?);
            }
        }
        let preds = predictor.predict_batch(&inputs)?;
        for (i, chunk) in (start..end).zip(preds.chunks(m)) {
            let views: Vec<ViewPrediction> = chunk.iter().map(view_prediction).collect();
            traces.push(SampleTrace {
                index: i,
                label: src.label(i),
                baseline: views[0].class_id,
                mvm: aggregate_mvm(&views)?.final_class,
                mvwcos: aggregate_mvwcos(&views)?.final_class,
                views,
            });
        }
        start = end;
    }
    let acc = |method| traces.iter().filter(|t| t.prediction(method) == t.label).count() as f64 / traces.len() as f64;
    Ok(EvalReport {
        n: traces.len(),
        m,
        baseline: acc(EvalMethod::Baseline),
        mvm: acc(EvalMethod::Mvm),
        mvwcos: acc(EvalMethod::Mvwcos),
        traces,
    })
}

/// Accuracy of one method.
pub fn evaluate<P, S>(predictor: &P, src: &S, method: EvalMethod, m: usize, seed: u64) -> Result<f64>
where
    P: Predictor<Vec<f32>>,
    S: ViewSource + ?Sized,
{
    let m = if method == EvalMethod::Baseline { 1 } else { m };
    Ok(evaluate_all(predictor, src, m, seed)?.accuracy(method))
}

/// Mean and sample standard deviation over runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// `std` uses the `n - 1` denominator and is 0 for a single run.
pub fn summarize(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("nothing to summarize".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MeanStd { mean, std, n })
}
