//! Multi-view prediction: classify several augmented copies of one input and
//! combine the per-view answers either by majority (mode) or by summing the
//! confidences of each predicted class.
//!
//! Ties are always resolved toward the smallest class index.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a prediction vector.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Confidences are kept strictly below one.
pub const MAX_CONFIDENCE: f64 = 1.0 - 1e-9;

/// Class-probability vector: every component positive, sum one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    probs: Vec<f64>,
}

impl PredictionVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidPrediction(format!(
                "need at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidPrediction(format!(
                "component {p} is not a positive finite number"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidPrediction(format!("components sum to {sum}")));
        }
        Ok(PredictionVector { probs })
    }

    /// Softmax of raw scores. Components that underflow are lifted to the
    /// smallest positive normal value.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidPrediction("non-finite logit".into()));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Self::new(exps.iter().map(|e| (e / z).max(f64::MIN_POSITIVE)).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }
}

/// Predicted class and its confidence for one view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewPrediction {
    pub class_id: usize,
    pub confidence: f64,
    pub num_classes: usize,
}

impl ViewPrediction {
    pub fn new(class_id: usize, confidence: f64, num_classes: usize) -> Result<Self> {
        if num_classes < 2 || class_id >= num_classes {
            return Err(Error::out_of_range("class_id", class_id, "[0, K), K >= 2"));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::out_of_range("confidence", confidence, "(0, 1)"));
        }
        Ok(ViewPrediction {
            class_id,
            confidence,
            num_classes,
        })
    }
}

/// Argmax (first maximum wins) and maximum of a prediction vector.
pub fn view_prediction(h: &PredictionVector) -> ViewPrediction {
    let mut best = 0;
    for (k, &p) in h.probs.iter().enumerate().skip(1) {
        if p > h.probs[best] {
            best = k;
        }
    }
    ViewPrediction {
        class_id: best,
        confidence: h.probs[best].min(MAX_CONFIDENCE),
        num_classes: h.num_classes(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMethod {
    /// Most frequent view class.
    Mvm,
    /// Class with the largest sum of view confidences.
    Mvwcos,
}

impl std::str::FromStr for AggregationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "mvm" => Ok(AggregationMethod::Mvm),
            "mvwcos" => Ok(AggregationMethod::Mvwcos),
            _ => Err(Error::InvalidConfig(format!("unknown aggregation method {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub method: AggregationMethod,
    pub final_class: usize,
    /// Vote counts (MVM) or summed confidences (MVWCo-S), one per class.
    pub per_class: Vec<f64>,
    pub views_used: usize,
}

fn common_num_classes(views: &[ViewPrediction]) -> Result<usize> {
    let first = views.first().ok_or(Error::EmptyViews)?;
    let k = first.num_classes;
    for v in views {
        if v.num_classes != k {
            return Err(Error::InvalidPrediction(format!(
                "views disagree on class count ({} vs {k})",
                v.num_classes
            )));
        }
        if v.class_id >= k {
            return Err(Error::out_of_range("class_id", v.class_id, "[0, K)"));
        }
    }
    Ok(k)
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Mode of the view classes.
pub fn aggregate_mvm(views: &[ViewPrediction]) -> Result<AggregateResult> {
    let k = common_num_classes(views)?;
    let mut counts = vec![0.0; k];
    for v in views {
        counts[v.class_id] += 1.0;
    }
    Ok(AggregateResult {
        method: AggregationMethod::Mvm,
        final_class: first_argmax(&counts),
        per_class: counts,
        views_used: views.len(),
    })
}

/// Confidence-weighted bin count of the view classes.
pub fn aggregate_mvwcos(views: &[ViewPrediction]) -> Result<AggregateResult> {
    let k = common_num_classes(views)?;
    if let Some(v) = views
        .iter()
        .find(|v| !(v.confidence > 0.0 && v.confidence < 1.0))
    {
        return Err(Error::out_of_range("confidence", v.confidence, "(0, 1)"));
    }
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); k];
    for v in views {
        bins[v.class_id].push(v.confidence);
    }
    // Summing in sorted order makes z independent of the view order.
    let z: Vec<f64> = bins
        .into_iter()
        .map(|mut b| {
            b.sort_by(f64::total_cmp);
            b.iter().sum()
        })
        .collect();
    Ok(AggregateResult {
        method: AggregationMethod::Mvwcos,
        final_class: first_argmax(&z),
        per_class: z,
        views_used: views.len(),
    })
}

pub fn aggregate(views: &[ViewPrediction], method: AggregationMethod) -> Result<AggregateResult> {
    match method {
        AggregationMethod::Mvm => aggregate_mvm(views),
        AggregationMethod::Mvwcos => aggregate_mvwcos(views),
    }
}

/// Maps one (augmented) input to a prediction vector.
pub trait Predictor<X> {
    fn predict(&self, input: &X) -> Result<PredictionVector>;

    /// Predict many inputs at once. Failures name the offending index.
    fn predict_batch(&self, inputs: &[X]) -> Result<Vec<PredictionVector>> {
        inputs
            .iter()
            .enumerate()
            .map(|(index, x)| {
                self.predict(x).map_err(|e| Error::View {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Produces one random augmented view of a sample.
pub trait Augmenter<S> {
    type Output;

    fn augment<R: Rng + ?Sized>(&self, sample: &S, rng: &mut R) -> Result<Self::Output>;
}

/// Draw `m` augmentations of `sample`, predict each and aggregate.
pub fn multiview_predict<S, A, P, R>(
    predictor: &P,
    sample: &S,
    m: usize,
    augmenter: &A,
    method: AggregationMethod,
    rng: &mut R,
) -> Result<AggregateResult>
where
    A: Augmenter<S>,
    P: Predictor<A::Output>,
    R: Rng + ?Sized,
{
    if m == 0 {
        return Err(Error::EmptyViews);
    }
    let views = (0..m)
        .map(|index| {
            augmenter.augment(sample, rng).map_err(|e| Error::View {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let preds = predictor.predict_batch(&views)?;
    let views: Vec<ViewPrediction> = preds.iter().map(view_prediction).collect();
    aggregate(&views, method)
}
