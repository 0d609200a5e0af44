//! The small convolutional classifier and its hand-written backward pass.
//!
//! Activations flow in channel-major batch layout `[C, B, H, W]` so every
//! 3x3 convolution over the whole minibatch is one GEMM against an
//! im2col buffer. Inputs are accepted in the usual `[B, C, H, W]` order.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scalar::{gemm, Mat, Scalar};
use crate::error::{Error, Result};
use crate::multiview::PredictionVector;
use crate::rng::rng_from_seed;

/// Layer configuration of the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    /// Input channels; `3 * clip_len` for channel-stacked clips.
    pub in_channels: usize,
    /// Side of the square input.
    pub input_size: usize,
    /// Output channels of each conv block. Empty means global average pool
    /// straight into the linear head.
    pub channels: Vec<usize>,
    pub num_classes: usize,
    pub leaky_slope: f64,
}

impl ArchSpec {
    /// Three conv blocks 32 -> 64 -> 128 with leaky-ReLU 0.01.
    pub fn small_cnn(in_channels: usize, input_size: usize, num_classes: usize) -> Self {
        ArchSpec {
            in_channels,
            input_size,
            channels: vec![32, 64, 128],
            num_classes,
            leaky_slope: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::InvalidConfig("in_channels must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("num_classes must be >= 2".into()));
        }
        if self.channels.contains(&0) {
            return Err(Error::InvalidConfig("conv channels must be >= 1".into()));
        }
        let min_size = 1usize << self.channels.len();
        if self.input_size < min_size {
            return Err(Error::InvalidConfig(format!(
                "input_size {} too small for {} pooling stages",
                self.input_size,
                self.channels.len()
            )));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::InvalidConfig("leaky_slope must be in [0,1)".into()));
        }
        Ok(())
    }

    /// Number of input values per sample.
    pub fn input_len(&self) -> usize {
        self.in_channels * self.input_size * self.input_size
    }

    fn layout(&self) -> Vec<TensorInfo> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            tensors.push(TensorInfo {
                name,
                shape,
                offset,
            });
            offset += len;
        };
        let mut cin = self.in_channels;
        for (i, &cout) in self.channels.iter().enumerate() {
            push(format!("conv{i}.weight"), vec![cout, cin, 3, 3]);
            push(format!("conv{i}.bias"), vec![cout]);
            cin = cout;
        }
        push("head.weight".into(), vec![self.num_classes, cin]);
        push("head.bias".into(), vec![self.num_classes]);
        tensors
    }
}

/// Name, shape and offset of one parameter tensor in the flat buffer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug)]
pub struct Classifier<F> {
    arch: ArchSpec,
    tensors: Vec<TensorInfo>,
    params: Vec<F>,
}

struct BlockCache<F> {
    cin: usize,
    size: usize,
    cols: Vec<F>,
    act: Vec<F>,
    argmax: Vec<u32>,
}

struct ForwardCache<F> {
    blocks: Vec<BlockCache<F>>,
    /// Input to the global average pool, `[C, B, s, s]`.
    last: Vec<F>,
    last_channels: usize,
    last_size: usize,
    feats: Vec<F>,
    logits: Vec<F>,
}

impl<F: Scalar> Classifier<F> {
    /// All parameters zero.
    pub fn zeros(arch: ArchSpec) -> Result<Self> {
        arch.validate()?;
        let tensors = arch.layout();
        let n = tensors.last().map(|t| t.offset + t.len()).unwrap_or(0);
        Ok(Classifier {
            arch,
            tensors,
            params: vec![F::zero(); n],
        })
    }

    /// Kaiming fan-in initialization; biases start at zero.
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = rng_from_seed(seed);
        let gain = 2.0 / (1.0 + model.arch.leaky_slope * model.arch.leaky_slope);
        let n_blocks = model.arch.channels.len();
        for (i, t) in model.tensors.iter().enumerate() {
            if t.shape.len() < 2 {
                continue;
            }
            let fan_in: usize = t.shape[1..].iter().product();
            let is_head = i == 2 * n_blocks;
            let var = if is_head { 1.0 } else { gain } / fan_in as f64;
            let normal = Normal::new(0.0, var.sqrt()).expect("positive std");
            for p in &mut model.params[t.range()] {
                *p = F::of(normal.sample(&mut rng));
            }
        }
        Ok(model)
    }

    /// Rebuild from a flat parameter buffer, e.g. one read from a checkpoint.
    pub fn from_params(arch: ArchSpec, params: Vec<F>) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        if params.len() != model.params.len() {
            return Err(Error::Shape {
                context: "classifier parameters",
                expected: vec![model.params.len()],
                actual: vec![params.len()],
            });
        }
        model.params = params;
        Ok(model)
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Same weights in another precision.
    pub fn cast<G: Scalar>(&self) -> Classifier<G> {
        Classifier {
            arch: self.arch.clone(),
            tensors: self.tensors.clone(),
            params: self.params.iter().map(|p| G::of(p.f64())).collect(),
        }
    }

    fn check_input(&self, input: &[F], batch: usize) -> Result<()> {
        let per = self.arch.input_len();
        if batch == 0 || input.len() != batch * per {
            return Err(Error::Shape {
                context: "classifier input",
                expected: vec![
                    batch,
                    self.arch.in_channels,
                    self.arch.input_size,
                    self.arch.input_size,
                ],
                actual: vec![input.len()],
            });
        }
        Ok(())
    }

    /// Raw class scores, row-major `[batch, K]`.
    pub fn logits(&self, input: &[F], batch: usize) -> Result<Vec<F>> {
        self.check_input(input, batch)?;
        let cache = self.forward_cached(input, batch);
        let k = self.arch.num_classes;
        let mut out = vec![F::zero(); batch * k];
        for c in 0..k {
            for b in 0..batch {
                out[b * k + c] = cache.logits[c * batch + b];
            }
        }
        Ok(out)
    }

    /// One normalized prediction vector per sample.
    pub fn forward(&self, input: &[F], batch: usize) -> Result<Vec<PredictionVector>> {
        let logits = self.logits(input, batch)?;
        let k = self.arch.num_classes;
        logits
            .chunks(k)
            .map(|row| {
                let row: Vec<f64> = row.iter().map(|v| v.f64()).collect();
                PredictionVector::from_logits(&row)
            })
            .collect()
    }

    /// Mean label-smoothed cross-entropy over the batch. The gradient of that
    /// mean with respect to every parameter is written into `grad`.
    pub fn loss_and_grad(
        &self,
        input: &[F],
        batch: usize,
        targets: &[usize],
        smoothing: f64,
        grad: &mut [F],
    ) -> Result<f64> {
        self.check_input(input, batch)?;
        if targets.len() != batch {
            return Err(Error::Shape {
                context: "targets",
                expected: vec![batch],
                actual: vec![targets.len()],
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                context: "gradient buffer",
                expected: vec![self.params.len()],
                actual: vec![grad.len()],
            });
        }
        let k = self.arch.num_classes;
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::out_of_range("target class", t, "[0, K)"));
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::out_of_range("label smoothing ratio", smoothing, "[0, 1)"));
        }

        let cache = self.forward_cached(input, batch);
        let mut dlogits = vec![F::zero(); k * batch];
        let mut total = 0.0;
        let mut column = vec![0.0f64; k];
        for b in 0..batch {
            for (c, v) in column.iter_mut().enumerate() {
                *v = cache.logits[c * batch + b].f64();
            }
            let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + column.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for c in 0..k {
                let log_p = column[c] - log_z;
                let q = smoothing / k as f64
                    + if c == targets[b] { 1.0 - smoothing } else { 0.0 };
                total -= q * log_p;
                dlogits[c * batch + b] = F::of((log_p.exp() - q) / batch as f64);
            }
        }
        self.backward(&cache, batch, &dlogits, grad);
        Ok(total / batch as f64)
    }

    fn forward_cached(&self, input: &[F], batch: usize) -> ForwardCache<F> {
        let arch = &self.arch;
        let plane = arch.input_size * arch.input_size;
        // [B, C, H, W] -> [C, B, H, W]
        let mut x = vec![F::zero(); input.len()];
        for b in 0..batch {
            for c in 0..arch.in_channels {
                let src = (b * arch.in_channels + c) * plane;
                let dst = (c * batch + b) * plane;
                x[dst..dst + plane].copy_from_slice(&input[src..src + plane]);
            }
        }

        let slope = F::of(arch.leaky_slope);
        let mut blocks = Vec::with_capacity(arch.channels.len());
        let mut cin = arch.in_channels;
        let mut size = arch.input_size;
        for (i, &cout) in arch.channels.iter().enumerate() {
            let w = &self.params[self.tensors[2 * i].range()];
            let bias = &self.params[self.tensors[2 * i + 1].range()];
            let n = batch * size * size;
            let cols = im2col(&x, cin, batch, size);
            let mut act = vec![F::zero(); cout * n];
            gemm(Mat::new(w, cout, cin * 9), Mat::new(&cols, cin * 9, n), F::zero(), &mut act);
            for (row, &bv) in act.chunks_mut(n).zip(bias) {
                for v in row {
                    let pre = *v + bv;
                    *v = if pre > F::zero() { pre } else { pre * slope };
                }
            }
            let (pooled, argmax) = max_pool2(&act, cout * batch, size);
            blocks.push(BlockCache {
                cin,
                size,
                cols,
                act,
                argmax,
            });
            x = pooled;
            cin = cout;
            size /= 2;
        }

        let hw = size * size;
        let feats: Vec<F> = x
            .chunks(hw)
            .map(|p| p.iter().fold(F::zero(), |a, &v| a + v) / F::of(hw as f64))
            .collect();
        let k = arch.num_classes;
        let head_w = &self.params[self.tensors[2 * blocks.len()].range()];
        let head_b = &self.params[self.tensors[2 * blocks.len() + 1].range()];
        let mut logits = vec![F::zero(); k * batch];
        gemm(Mat::new(head_w, k, cin), Mat::new(&feats, cin, batch), F::zero(), &mut logits);
        for (row, &bv) in logits.chunks_mut(batch).zip(head_b) {
            for v in row {
                *v = *v + bv;
            }
        }
        ForwardCache {
            blocks,
            last: x,
            last_channels: cin,
            last_size: size,
            feats,
            logits,
        }
    }

    fn backward(&self, cache: &ForwardCache<F>, batch: usize, dlogits: &[F], grad: &mut [F]) {
        let k = self.arch.num_classes;
        let n_blocks = self.arch.channels.len();
        let c_last = cache.last_channels;
        let slope = F::of(self.arch.leaky_slope);

        let hw_t = &self.tensors[2 * n_blocks];
        let hb_t = &self.tensors[2 * n_blocks + 1];
        gemm(
            Mat::new(dlogits, k, batch),
            Mat::new(&cache.feats, c_last, batch).t(),
            F::zero(),
            &mut grad[hw_t.range()],
        );
        for (g, row) in grad[hb_t.range()].iter_mut().zip(dlogits.chunks(batch)) {
            *g = row.iter().fold(F::zero(), |a, &v| a + v);
        }
        let mut dfeats = vec![F::zero(); c_last * batch];
        gemm(
            Mat::new(&self.params[hw_t.range()], k, c_last).t(),
            Mat::new(dlogits, k, batch),
            F::zero(),
            &mut dfeats,
        );

        let hw = cache.last_size * cache.last_size;
        let inv_hw = F::of(1.0 / hw as f64);
        let mut dx = vec![F::zero(); cache.last.len()];
        for (chunk, &d) in dx.chunks_mut(hw).zip(&dfeats) {
            chunk.fill(d * inv_hw);
        }

        for (i, blk) in cache.blocks.iter().enumerate().rev() {
            let cout = self.arch.channels[i];
            let n = batch * blk.size * blk.size;
            let mut dact = vec![F::zero(); blk.act.len()];
            for (&idx, &d) in blk.argmax.iter().zip(&dx) {
                dact[idx as usize] = dact[idx as usize] + d;
            }
            for (d, &a) in dact.iter_mut().zip(&blk.act) {
                if a <= F::zero() {
                    *d = *d * slope;
                }
            }
            let w_t = &self.tensors[2 * i];
            let b_t = &self.tensors[2 * i + 1];
            gemm(
                Mat::new(&dact, cout, n),
                Mat::new(&blk.cols, blk.cin * 9, n).t(),
                F::zero(),
                &mut grad[w_t.range()],
            );
            for (g, row) in grad[b_t.range()].iter_mut().zip(dact.chunks(n)) {
                *g = row.iter().fold(F::zero(), |a, &v| a + v);
            }
            if i > 0 {
                let mut dcols = vec![F::zero(); blk.cin * 9 * n];
                gemm(
                    Mat::new(&self.params[w_t.range()], cout, blk.cin * 9).t(),
                    Mat::new(&dact, cout, n),
                    F::zero(),
                    &mut dcols,
                );
                dx = col2im(&dcols, blk.cin, batch, blk.size);
            }
        }
    }
}

/// 3x3, stride 1, zero padding 1. `x` is `[C, B, s, s]`; output rows are
/// `(c, ky, kx)`, columns `(b, y, x)`.
pub(crate) fn im2col<F: Scalar>(x: &[F], channels: usize, batch: usize, size: usize) -> Vec<F> {
    let plane = size * size;
    let n = batch * plane;
    let mut cols = vec![F::zero(); channels * 9 * n];
    for c in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 9) + ky * 3 + kx) * n..][..n];
                for b in 0..batch {
                    let src = &x[(c * batch + b) * plane..][..plane];
                    for y in 0..size {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= size as isize {
                            continue;
                        }
                        let src_row = &src[sy as usize * size..][..size];
                        let dst = &mut row[b * plane + y * size..][..size];
                        // dst[x] = src_row[x + kx - 1]
                        match kx {
                            0 => dst[1..].copy_from_slice(&src_row[..size - 1]),
                            1 => dst.copy_from_slice(src_row),
                            _ => dst[..size - 1].copy_from_slice(&src_row[1..]),
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im<F: Scalar>(cols: &[F], channels: usize, batch: usize, size: usize) -> Vec<F> {
    let plane = size * size;
    let n = batch * plane;
    let mut x = vec![F::zero(); channels * n];
    for c in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 9) + ky * 3 + kx) * n..][..n];
                for b in 0..batch {
                    let dst = &mut x[(c * batch + b) * plane..][..plane];
                    for y in 0..size {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= size as isize {
                            continue;
                        }
                        let src = &row[b * plane + y * size..][..size];
                        let dst_row = &mut dst[sy as usize * size..][..size];
                        let (d, s) = match kx {
                            0 => (&mut dst_row[..size - 1], &src[1..]),
                            1 => (&mut dst_row[..], &src[..]),
                            _ => (&mut dst_row[1..], &src[..size - 1]),
                        };
                        for (a, &v) in d.iter_mut().zip(s) {
                            *a = *a + v;
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2x2 max pool, stride 2, floor. Returns pooled planes and, per output
/// element, the flat index of the winning input (first maximum wins).
fn max_pool2<F: Scalar>(x: &[F], planes: usize, size: usize) -> (Vec<F>, Vec<u32>) {
    let out = size / 2;
    let mut pooled = Vec::with_capacity(planes * out * out);
    let mut argmax = Vec::with_capacity(planes * out * out);
    for p in 0..planes {
        let base = p * size * size;
        for y in 0..out {
            for xo in 0..out {
                let i0 = base + 2 * y * size + 2 * xo;
                let mut best = i0;
                for idx in [i0 + 1, i0 + size, i0 + size + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                pooled.push(x[best]);
                argmax.push(best as u32);
            }
        }
    }
    (pooled, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64) * 0.731).sin() * scale).collect()
    }

    #[test]
    fn layout_matches_architecture() {
        let model = Classifier::<f32>::zeros(ArchSpec::small_cnn(3, 32, 2)).unwrap();
        let names: Vec<&str> = model.tensors().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "conv0.weight",
                "conv0.bias",
                "conv1.weight",
                "conv1.bias",
                "conv2.weight",
                "conv2.bias",
                "head.weight",
                "head.bias"
            ]
        );
        let expected = 32 * 27 + 32 + 64 * 288 + 64 + 128 * 576 + 128 + 2 * 128 + 2;
        assert_eq!(model.num_params(), expected);
        let clip = Classifier::<f32>::zeros(ArchSpec::small_cnn(27, 32, 2)).unwrap();
        assert_eq!(clip.tensor("conv0.weight").unwrap().shape, vec![32, 27, 3, 3]);
    }

    #[test]
    fn zero_head_gives_uniform_output() {
        let mut model = Classifier::<f32>::init(ArchSpec::small_cnn(3, 16, 2), 7).unwrap();
        for name in ["head.weight", "head.bias"] {
            let r = model.tensor(name).unwrap().range();
            model.params_mut()[r].fill(0.0);
        }
        let input: Vec<f32> = ramp(2 * 3 * 256, 1.0).iter().map(|&v| v as f32).collect();
        for h in model.forward(&input, 2).unwrap() {
            assert_eq!(h.probs(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn shape_mismatch_reports_dims() {
        let model = Classifier::<f32>::zeros(ArchSpec::small_cnn(3, 16, 2)).unwrap();
        let err = model.forward(&vec![0.0; 100], 1).unwrap_err();
        match err {
            Error::Shape {
                expected, actual, ..
            } => {
                assert_eq!(expected, vec![1, 3, 16, 16]);
                assert_eq!(actual, vec![100]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arch() {
        assert!(Classifier::<f32>::zeros(ArchSpec::small_cnn(3, 4, 2)).is_err());
        assert!(Classifier::<f32>::zeros(ArchSpec::small_cnn(3, 16, 1)).is_err());
    }

    /// Straight-line reference: direct convolution loops, scalar pooling,
    /// explicit softmax. Shares nothing with the GEMM path.
    fn reference_forward(model: &Classifier<f64>, input: &[f64]) -> Vec<f64> {
        let arch = model.arch();
        let p = model.params();
        let mut c = arch.in_channels;
        let mut s = arch.input_size;
        let mut x = input.to_vec(); // [c, s, s]
        for (i, &co) in arch.channels.iter().enumerate() {
            let w = &p[model.tensors()[2 * i].range()];
            let bias = &p[model.tensors()[2 * i + 1].range()];
            let mut y = vec![0.0; co * s * s];
            for o in 0..co {
                for r in 0..s {
                    for q in 0..s {
                        let mut acc = bias[o];
                        for ci in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let rr = r as isize + ky as isize - 1;
                                    let qq = q as isize + kx as isize - 1;
                                    if rr < 0 || qq < 0 || rr >= s as isize || qq >= s as isize {
                                        continue;
                                    }
                                    acc += w[((o * c + ci) * 3 + ky) * 3 + kx]
                                        * x[(ci * s + rr as usize) * s + qq as usize];
                                }
                            }
                        }
                        y[(o * s + r) * s + q] = if acc > 0.0 { acc } else { acc * arch.leaky_slope };
                    }
                }
            }
            let h = s / 2;
            let mut pooled = vec![0.0; co * h * h];
            for o in 0..co {
                for r in 0..h {
                    for q in 0..h {
                        let mut m = f64::NEG_INFINITY;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                m = m.max(y[(o * s + 2 * r + dy) * s + 2 * q + dx]);
                            }
                        }
                        pooled[(o * h + r) * h + q] = m;
                    }
                }
            }
            x = pooled;
            c = co;
            s = h;
        }
        let feats: Vec<f64> = (0..c)
            .map(|ci| x[ci * s * s..(ci + 1) * s * s].iter().sum::<f64>() / (s * s) as f64)
            .collect();
        let hw = &p[model.tensors()[2 * arch.channels.len()].range()];
        let hb = &p[model.tensors()[2 * arch.channels.len() + 1].range()];
        let logits: Vec<f64> = (0..arch.num_classes)
            .map(|k| hb[k] + (0..c).map(|ci| hw[k * c + ci] * feats[ci]).sum::<f64>())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        logits.iter().map(|l| l.exp() / z).collect()
    }

    #[test]
    fn forward_matches_reference_computation() {
        let arch = ArchSpec {
            in_channels: 3,
            input_size: 12,
            channels: vec![4, 6],
            num_classes: 3,
            leaky_slope: 0.01,
        };
        let mut model = Classifier::<f64>::init(arch, 3).unwrap();
        let n = model.num_params();
        let bumps = ramp(n, 0.05);
        for (p, b) in model.params_mut().iter_mut().zip(bumps) {
            *p += b;
        }
        let batch = 3;
        let input = ramp(batch * 3 * 144, 1.5);
        let got = model.forward(&input, batch).unwrap();
        for (b, h) in got.iter().enumerate() {
            let want = reference_forward(&model, &input[b * 432..(b + 1) * 432]);
            for (x, y) in h.probs().iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, b, s) = (2, 2, 5);
        let x = ramp(c * b * s * s, 1.0);
        let y = ramp(c * 9 * b * s * s, 2.0)
            .iter()
            .map(|v| v + 0.3)
            .collect::<Vec<_>>();
        let lhs: f64 = im2col(&x, c, b, s).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = col2im(&y, c, b, s).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn outputs_sum_to_one() {
        let model = Classifier::<f32>::init(ArchSpec::small_cnn(3, 16, 4), 11).unwrap();
        let input: Vec<f32> = ramp(5 * 3 * 256, 3.0).iter().map(|&v| v as f32).collect();
        for h in model.forward(&input, 5).unwrap() {
            let s: f64 = h.probs().iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
            assert!(h.probs().iter().all(|&p| p > 0.0));
        }
    }
}
