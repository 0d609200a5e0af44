use crate::error::{Error, Result};
use crate::multiview::PredictionVector;

/// `(1 - ratio) * onehot(target) + ratio / K`.
pub fn smoothed_target(target: usize, num_classes: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::out_of_range("label smoothing ratio", ratio, "[0, 1)"));
    }
    if target >= num_classes {
        return Err(Error::out_of_range("target class", target, "[0, K)"));
    }
    let base = ratio / num_classes as f64;
    let mut q = vec![base; num_classes];
    q[target] += 1.0 - ratio;
    Ok(q)
}

/// Cross-entropy of `h` against the label-smoothed target.
pub fn cross_entropy_ls(h: &PredictionVector, target: usize, ratio: f64) -> Result<f64> {
    let q = smoothed_target(target, h.num_classes(), ratio)?;
    Ok(-q.iter().zip(h.probs()).map(|(q, p)| q * p.ln()).sum::<f64>())
}

pub fn cross_entropy(h: &PredictionVector, target: usize) -> Result<f64> {
    if target >= h.num_classes() {
        return Err(Error::out_of_range("target class", target, "[0, K)"));
    }
    Ok(-h.probs()[target].ln())
}
