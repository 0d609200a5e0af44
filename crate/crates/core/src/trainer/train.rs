//! Minibatch Adam training with optional curriculum gating.

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::curriculum::{eligible_indices, CurriculumParams};
use crate::error::{Error, Result};
use crate::multiview::view_prediction;
use crate::rng::{child_rng, derive_seed, rng_from_seed};

use super::data::{source_difficulties, ViewSource};
use super::loss::cross_entropy;
use super::nn::{ArchSpec, Classifier};
use super::optim::Adam;
use super::schedule::LrSchedule;

/// Samples per forward pass when scoring without gradients.
const EVAL_CHUNK: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: u32,
    pub lr_schedule: LrSchedule,
    pub label_smoothing: f64,
    /// Curriculum gating; `None` trains on every sample each epoch.
    pub curriculum: Option<CurriculumParams>,
    /// Fraction of the easiest samples used when the eligible set is empty.
    pub fallback_fraction: f64,
    pub channels: Vec<usize>,
    pub leaky_slope: f64,
    /// Return the parameters with the lowest validation loss rather than
    /// the final ones.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            batch_size: 32,
            epochs: 400,
            lr_schedule: LrSchedule::Cosine,
            label_smoothing: 0.0,
            curriculum: None,
            fallback_fraction: 0.01,
            channels: vec![32, 64, 128],
            leaky_slope: 0.01,
            keep_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return bad(format!("lr0 must be finite and >= 0, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("Adam eps must be > 0".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing must lie in [0, 1), got {}", self.label_smoothing));
        }
        if !(self.fallback_fraction > 0.0 && self.fallback_fraction <= 1.0) {
            return bad("fallback_fraction must lie in (0, 1]".into());
        }
        if let Some(c) = &self.curriculum {
            c.validate()?;
        }
        Ok(())
    }

    /// Architecture matching views of shape `(c, h, w)`.
    pub fn arch(&self, view_shape: (usize, usize, usize), num_classes: usize) -> Result<ArchSpec> {
        let (c, h, w) = view_shape;
        if h != w {
            return Err(Error::InvalidConfig(format!("views must be square, got {h}x{w}")));
        }
        let arch = ArchSpec {
            in_channels: c,
            input_size: h,
            channels: self.channels.clone(),
            num_classes,
            leaky_slope: self.leaky_slope,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    /// Samples trained on this epoch.
    pub eligible: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: Option<u32>,
    pub best_val_loss: Option<f64>,
}

impl RunMetrics {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from("epoch,train_loss,val_loss,val_acc,lr,eligible\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                opt(e.val_loss),
                opt(e.val_acc),
                e.lr,
                e.eligible
            ));
        }
        s
    }

    pub fn eligible_sizes(&self) -> Vec<(u32, usize)> {
        self.epochs.iter().map(|e| (e.epoch, e.eligible)).collect()
    }
}

/// Mean plain cross-entropy and accuracy on one view per sample. Views come
/// from a stream seeded by `seed`, so repeated calls score identical inputs.
pub fn score<S: ViewSource + ?Sized>(model: &Classifier<f32>, src: &S, seed: u64) -> Result<(f64, f64)> {
    if src.is_empty() {
        return Err(Error::InvalidConfig("cannot score an empty set".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut buf = Vec::new();
    let mut start = 0;
    while start < src.len() {
        let end = (start + EVAL_CHUNK).min(src.len());
        buf.clear();
        for i in start..end {
            src.draw_view(i, &mut rng, &mut buf)?;
        }
        let preds = model.forward(&buf, end - start)?;
        for (i, h) in (start..end).zip(&preds) {
            let y = src.label(i);
            loss += cross_entropy(h, y)?;
            correct += (view_prediction(h).class_id == y) as usize;
        }
        start = end;
    }
    let n = src.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Indices of the `ceil(fraction * n)` easiest samples (at least one).
fn easiest(difficulties: &[f64], fraction: f64) -> Vec<usize> {
    let k = ((fraction * difficulties.len() as f64).ceil() as usize).clamp(1, difficulties.len());
    let mut idx: Vec<usize> = (0..difficulties.len()).collect();
    idx.sort_by(|&a, &b| difficulties[a].total_cmp(&difficulties[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Train a fresh classifier on `train_src`. `seed` fixes initialization,
/// shuffling and augmentation; `val_src` is scored once per epoch.
pub fn train<S, V>(config: &TrainConfig, seed: u64, train_src: &S, val_src: Option<&V>) -> Result<(Classifier<f32>, RunMetrics)>
where
    S: ViewSource + ?Sized,
    V: ViewSource + ?Sized,
{
    config.validate()?;
    if train_src.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let arch = config.arch(train_src.view_shape(), train_src.num_classes())?;
    if let Some(v) = val_src {
        if v.view_shape() != train_src.view_shape() || v.num_classes() != train_src.num_classes() {
            return Err(Error::InvalidConfig("validation views do not match training views".into()));
        }
    }
    let difficulties = match &config.curriculum {
        Some(c) => Some(source_difficulties(train_src, c)?),
        None => None,
    };

    let mut model = Classifier::<f32>::init(arch.clone(), derive_seed(seed, 0))?;
    let mut adam = Adam::new(model.num_params(), config.beta1, config.beta2, config.eps, config.weight_decay);
    let mut rng = child_rng(seed, 1);
    let val_seed = derive_seed(seed, 2);
    let mut grad = vec![0f32; model.num_params()];
    let mut input = Vec::with_capacity(config.batch_size * arch.input_len());
    let mut targets = Vec::with_capacity(config.batch_size);
    let mut metrics = RunMetrics {
        seed,
        ..Default::default()
    };
    let mut best: Option<Vec<f32>> = None;

    for epoch in 0..config.epochs {
        let mut order = match (&config.curriculum, &difficulties) {
            (Some(c), Some(d)) => {
                let set = eligible_indices(d, epoch, c);
                if set.is_empty() {
                    warn!("epoch {epoch}: eligible set empty, using the easiest samples");
                    easiest(d, config.fallback_fraction)
                } else {
                    set
                }
            }
            _ => (0..train_src.len()).collect(),
        };
        order.shuffle(&mut rng);
        let lr = config.lr_schedule.lr(epoch, config.epochs, config.lr0);

        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            input.clear();
            targets.clear();
            for &i in chunk {
                train_src.draw_view(i, &mut rng, &mut input)?;
                targets.push(train_src.label(i));
            }
            let loss = model.loss_and_grad(&input, chunk.len(), &targets, config.label_smoothing, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Other(format!("non-finite training loss at epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
            adam.step(model.params_mut(), &grad, lr);
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Other(format!("non-finite parameters after epoch {epoch}")));
        }

        let (val_loss, val_acc) = match val_src {
            Some(v) => {
                let (l, a) = score(&model, v, val_seed)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        if let Some(l) = val_loss {
            if metrics.best_val_loss.is_none_or(|b| l < b) {
                metrics.best_val_loss = Some(l);
                metrics.best_epoch = Some(epoch);
                if config.keep_best {
                    best = Some(model.params().to_vec());
                }
            }
        }
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: total / order.len() as f64,
            val_loss,
            val_acc,
            eligible: order.len(),
        };
        info!(
            "seed {seed} epoch {epoch}: n={} train_loss={:.4} val_loss={:?} val_acc={:?}",
            m.eligible, m.train_loss, m.val_loss, m.val_acc
        );
        metrics.epochs.push(m);
    }

    if let Some(p) = best {
        model = Classifier::from_params(arch, p)?;
    }
    Ok((model, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two classes told apart by the sign of a constant image.
    struct Signs {
        labels: Vec<usize>,
        difficulty: Vec<(f64, f64)>,
    }

    impl ViewSource for Signs {
        fn len(&self) -> usize {
            self.labels.len()
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn label(&self, i: usize) -> usize {
            self.labels[i]
        }
        fn view_shape(&self) -> (usize, usize, usize) {
            (1, 4, 4)
        }
        fn draw_view(&self, i: usize, rng: &mut dyn rand::RngCore, out: &mut Vec<f32>) -> Result<()> {
            let jitter = (rng.next_u32() % 100) as f32 / 1000.0;
            let v = if self.labels[i] == 1 { 0.5 } else { -0.5 } + jitter;
            out.extend(std::iter::repeat_n(v, 16));
            Ok(())
        }
        fn difficulty_features(&self, i: usize) -> Option<(f64, f64)> {
            Some(self.difficulty[i])
        }
    }

    fn signs(n: usize) -> Signs {
        Signs {
            labels: (0..n).map(|i| i % 2).collect(),
            difficulty: (0..n).map(|i| ((i % 11) as f64, (i % 7) as f64 * 10.0)).collect(),
        }
    }

    fn config() -> TrainConfig {
        TrainConfig {
            epochs: 15,
            batch_size: 8,
            lr0: 0.01,
            channels: vec![4],
            ..Default::default()
        }
    }

    #[test]
    fn learns_separable_task() {
        let src = signs(64);
        let (model, m) = train(&config(), 3, &src, Some(&src)).unwrap();
        assert_eq!(m.epochs.len(), 15);
        let (_, acc) = score(&model, &src, 9).unwrap();
        assert_eq!(acc, 1.0);
        assert!(m.epochs.last().unwrap().train_loss < m.epochs[0].train_loss);
    }

    /// Fixed random images with arbitrary labels: only memorization helps.
    struct Memorize {
        images: Vec<Vec<f32>>,
        labels: Vec<usize>,
    }

    impl ViewSource for Memorize {
        fn len(&self) -> usize {
            self.labels.len()
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn label(&self, i: usize) -> usize {
            self.labels[i]
        }
        fn view_shape(&self) -> (usize, usize, usize) {
            (3, 8, 8)
        }
        fn draw_view(&self, i: usize, _: &mut dyn rand::RngCore, out: &mut Vec<f32>) -> Result<()> {
            out.extend_from_slice(&self.images[i]);
            Ok(())
        }
    }

    #[test]
    fn overfits_single_batch() {
        use rand::Rng;
        let mut rng = rng_from_seed(77);
        let src = Memorize {
            images: (0..8).map(|_| (0..192).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            labels: vec![0, 1, 1, 0, 1, 0, 0, 1],
        };
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            channels: vec![8, 16],
            lr_schedule: LrSchedule::Constant,
            keep_best: false,
            ..Default::default()
        };
        let (model, m) = train(&cfg, 42, &src, None::<&Memorize>).unwrap();
        assert!(m.epochs.iter().all(|e| e.train_loss.is_finite()));
        let (_, acc) = score(&model, &src, 0).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let src = signs(32);
        let (a, ma) = train(&config(), 5, &src, Some(&src)).unwrap();
        let (b, mb) = train(&config(), 5, &src, Some(&src)).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ma, mb);
        let (c, _) = train(&config(), 6, &src, Some(&src)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let src = signs(16);
        let cfg = TrainConfig {
            lr0: 0.0,
            epochs: 2,
            keep_best: false,
            ..config()
        };
        let (model, _) = train(&cfg, 1, &src, None::<&Signs>).unwrap();
        let init = Classifier::<f32>::init(cfg.arch((1, 4, 4), 2).unwrap(), derive_seed(1, 0)).unwrap();
        assert_eq!(model.params(), init.params());
    }

    #[test]
    fn curriculum_grows_training_set() {
        let src = signs(200);
        let cfg = TrainConfig {
            epochs: 6,
            curriculum: Some(CurriculumParams {
                total_epochs: 5,
                c0: 0.3,
                l_norm_scale: 60.0,
                ..Default::default()
            }),
            ..config()
        };
        let (_, m) = train(&cfg, 2, &src, None::<&Signs>).unwrap();
        let sizes: Vec<usize> = m.epochs.iter().map(|e| e.eligible).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");
        assert!(sizes[0] < 200);
        assert_eq!(*sizes.last().unwrap(), 200);
    }

    #[test]
    fn empty_eligible_set_falls_back() {
        let mut src = signs(300);
        src.difficulty.iter_mut().for_each(|d| *d = (10.0, 100.0));
        src.difficulty[7] = (5.0, 0.0);
        let cfg = TrainConfig {
            epochs: 1,
            curriculum: Some(CurriculumParams {
                total_epochs: 10,
                c0: 0.01,
                ..Default::default()
            }),
            ..config()
        };
        let (_, m) = train(&cfg, 2, &src, None::<&Signs>).unwrap();
        assert_eq!(m.epochs[0].eligible, 3);
        assert_eq!(easiest(&[0.5, 0.1, 0.9], 0.01), vec![1]);
    }

    #[test]
    fn rejects_bad_configs() {
        let src = signs(8);
        for cfg in [
            TrainConfig { batch_size: 0, ..config() },
            TrainConfig { epochs: 0, ..config() },
            TrainConfig { label_smoothing: 1.0, ..config() },
            TrainConfig { lr0: f64::NAN, ..config() },
        ] {
            assert!(train(&cfg, 0, &src, None::<&Signs>).is_err());
        }
        let empty = signs(0);
        assert!(train(&config(), 0, &empty, None::<&Signs>).is_err());
    }

    #[test]
    fn metrics_csv_has_header_and_rows() {
        let src = signs(8);
        let cfg = TrainConfig { epochs: 2, ..config() };
        let (_, m) = train(&cfg, 0, &src, Some(&src)).unwrap();
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("epoch,train_loss,val_loss,val_acc,lr,eligible"));
    }
}
