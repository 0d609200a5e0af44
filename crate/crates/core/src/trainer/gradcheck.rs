//! Finite-difference verification of the analytic gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

use super::nn::Classifier;

/// Denominator floor so that near-zero gradients compare absolutely.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checks: Vec<ParamCheck>,
}

impl GradCheckReport {
    /// Largest error among parameters of one tensor.
    pub fn max_for(&self, tensor: &str) -> Option<f64> {
        self.checks
            .iter()
            .filter(|c| c.tensor == tensor)
            .map(|c| c.rel_error)
            .reduce(f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare analytic gradients of the mean smoothed cross-entropy with central
/// differences at `n_samples` random parameters (at least one per tensor,
/// all of a tensor's entries if it is smaller than its share).
pub fn gradient_check(
    model: &Classifier<f64>,
    input: &[f64],
    batch: usize,
    targets: &[usize],
    smoothing: f64,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-5..=1e-2).contains(&eps) {
        return Err(Error::out_of_range("finite-difference eps", eps, "[1e-5, 1e-2]"));
    }
    let mut grad = vec![0.0; model.num_params()];
    model.loss_and_grad(input, batch, targets, smoothing, &mut grad)?;

    let tensors = model.tensors();
    let share = n_samples.div_ceil(tensors.len()).max(1);
    let mut rng = rng_from_seed(seed);
    let mut picks = Vec::new();
    for t in tensors {
        if t.len() <= share {
            picks.extend(t.range().map(|i| (t.name.clone(), i)));
        } else {
            let chosen = rand::seq::index::sample(&mut rng, t.len(), share);
            let mut chosen: Vec<usize> = chosen.into_iter().map(|i| t.offset + i).collect();
            chosen.sort_unstable();
            picks.extend(chosen.into_iter().map(|i| (t.name.clone(), i)));
        }
    }
    // Top up to the requested count from the whole buffer if tensors were tiny.
    while picks.len() < n_samples.min(model.num_params()) {
        let i = rng.random_range(0..model.num_params());
        if !picks.iter().any(|(_, j)| *j == i) {
            let name = tensors.iter().find(|t| t.range().contains(&i)).unwrap().name.clone();
            picks.push((name, i));
        }
    }

    let mut probe = model.clone();
    let mut scratch = vec![0.0; model.num_params()];
    let mut checks = Vec::with_capacity(picks.len());
    for (tensor, index) in picks {
        let orig = probe.params()[index];
        probe.params_mut()[index] = orig + eps;
        let plus = probe.loss_and_grad(input, batch, targets, smoothing, &mut scratch)?;
        probe.params_mut()[index] = orig - eps;
        let minus = probe.loss_and_grad(input, batch, targets, smoothing, &mut scratch)?;
        probe.params_mut()[index] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        checks.push(ParamCheck {
            tensor,
            index,
            analytic: grad[index],
            numeric,
            rel_error: relative_error(grad[index], numeric),
        });
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::nn::ArchSpec;
    use rand_distr::{Distribution, StandardNormal};

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn head_only_model() {
        let arch = ArchSpec {
            channels: vec![],
            ..ArchSpec::small_cnn(5, 4, 3)
        };
        let model = Classifier::<f64>::init(arch, 1).unwrap();
        let mut model = model;
        // Random head so the gradient is not trivially symmetric.
        let w = random_input(model.num_params(), 7);
        model.params_mut().copy_from_slice(&w);
        let x = random_input(2 * 5 * 16, 3);
        let r = gradient_check(&model, &x, 2, &[0, 2], 0.1, 1e-4, 100, 5).unwrap();
        assert_eq!(r.checks.len(), model.num_params().min(100).max(r.checks.len()));
        assert!(r.max_rel_error <= 1e-6, "{}", r.max_rel_error);
    }

    #[test]
    fn full_cnn() {
        let arch = ArchSpec {
            channels: vec![4, 6, 8],
            ..ArchSpec::small_cnn(3, 8, 2)
        };
        let model = Classifier::<f64>::init(arch, 4).unwrap();
        let mut model = model;
        // Nonzero biases exercise every branch of the backward pass.
        for t in model.tensors().to_vec() {
            if t.name.ends_with("bias") {
                for p in &mut model.params_mut()[t.range()] {
                    *p = 0.05;
                }
            }
        }
        let x = random_input(2 * 3 * 64, 9);
        let r = gradient_check(&model, &x, 2, &[1, 0], 0.2, 1e-4, 120, 1).unwrap();
        assert!(r.checks.len() >= 100);
        for t in model.tensors() {
            assert!(r.max_for(&t.name).is_some(), "{} unchecked", t.name);
        }
        assert!(r.max_rel_error <= 1e-3, "{}", r.max_rel_error);
    }

    #[test]
    fn zero_input_conv_biases() {
        let arch = ArchSpec {
            channels: vec![4, 4],
            ..ArchSpec::small_cnn(3, 4, 2)
        };
        let mut model = Classifier::<f64>::init(arch, 2).unwrap();
        for (j, t) in model.tensors().to_vec().into_iter().enumerate() {
            if t.name.ends_with("bias") {
                for (k, p) in model.params_mut()[t.range()].iter_mut().enumerate() {
                    *p = 0.1 * (k as f64 + 1.0) * if j % 4 == 1 { 1.0 } else { -0.5 };
                }
            }
        }
        let x = vec![0.0; 3 * 16];
        let r = gradient_check(&model, &x, 1, &[1], 0.0, 1e-4, 100, 3).unwrap();
        for name in ["conv0.bias", "conv1.bias"] {
            let e = r.max_for(name).unwrap();
            assert!(e <= 1e-3, "{name}: {e}");
        }
        assert!(r.max_rel_error <= 1e-3, "{}", r.max_rel_error);
    }

    #[test]
    fn eps_out_of_range() {
        let model = Classifier::<f64>::init(ArchSpec::small_cnn(1, 8, 2), 0).unwrap();
        let x = vec![0.0; 64];
        assert!(gradient_check(&model, &x, 1, &[0], 0.0, 1e-6, 100, 0).is_err());
        assert!(gradient_check(&model, &x, 1, &[0], 0.0, 0.1, 100, 0).is_err());
    }
}
