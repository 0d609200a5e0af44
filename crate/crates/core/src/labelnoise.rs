//! Asymmetric label corruption, CIFAR-10 binary ingestion, and a synthetic
//! two-class still-image set used when CIFAR-10 is not available.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{child_rng, rng_from_seed};
use crate::synthcells::video::sample_scene;
use crate::synthcells::{render_frame, GenerationConfig, Task};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_IMAGE_BYTES: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD_BYTES: usize = 1 + CIFAR_IMAGE_BYTES;
pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Provenance {
    Clean,
    Noisy { rate: f64 },
}

/// Images `[N, 3, H, W]` (8-bit) with one class label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    pub images: Vec<u8>,
    pub labels: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        3 * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }
}

/// Parse concatenated CIFAR-10 records: one label byte followed by 1024
/// red, 1024 green and 1024 blue bytes, each plane row-major.
pub fn parse_cifar10(bytes: &[u8], path: &Path) -> Result<LabeledImageSet> {
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.is_empty() {
        return Err(fail(0, "no records".into()));
    }
    let whole = bytes.len() / CIFAR_RECORD_BYTES;
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let offset = whole * CIFAR_RECORD_BYTES;
        return Err(fail(
            offset,
            format!(
                "truncated record: expected {CIFAR_RECORD_BYTES} bytes, found {}",
                bytes.len() - offset
            ),
        ));
    }
    let mut images = Vec::with_capacity(whole * CIFAR_IMAGE_BYTES);
    let mut labels = Vec::with_capacity(whole);
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(fail(r * CIFAR_RECORD_BYTES, format!("label {label} out of range")));
        }
        labels.push(label);
        images.extend_from_slice(&rec[1..]);
    }
    Ok(LabeledImageSet {
        images,
        labels,
        height: CIFAR_SIDE,
        width: CIFAR_SIDE,
        num_classes: CIFAR_CLASSES,
        provenance: Provenance::Clean,
    })
}

fn read_batches(dir: &Path, files: &[&str]) -> Result<LabeledImageSet> {
    let mut all: Option<LabeledImageSet> = None;
    for f in files {
        let path = dir.join(f);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let part = parse_cifar10(&bytes, &path)?;
        match &mut all {
            None => all = Some(part),
            Some(a) => {
                a.images.extend_from_slice(&part.images);
                a.labels.extend_from_slice(&part.labels);
            }
        }
    }
    all.ok_or_else(|| Error::InvalidConfig("no CIFAR-10 batch files given".into()))
}

/// Locate the binary batches in `path` or its `cifar-10-batches-bin` child.
pub fn find_cifar10(path: &Path) -> Option<PathBuf> {
    [path.to_path_buf(), path.join("cifar-10-batches-bin")]
        .into_iter()
        .find(|p| p.join(CIFAR_TEST_FILE).is_file() && p.join(CIFAR_TRAIN_FILES[0]).is_file())
}

/// Load the standard CIFAR-10 binary release: `(train, test)`.
pub fn cifar10_load(path: &Path) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let dir = find_cifar10(path).ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "CIFAR-10 binary batches not found"),
        )
    })?;
    Ok((read_batches(&dir, &CIFAR_TRAIN_FILES)?, read_batches(&dir, &[CIFAR_TEST_FILE])?))
}

/// Per-class flip targets and the per-sample flip probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rate: f64,
    /// `transition_map[k]` is the label a flipped class-`k` sample receives.
    pub transition_map: Vec<usize>,
    pub seed: u64,
}

/// The pairwise CIFAR-10 map common in the noisy-label literature:
/// truck -> automobile, bird -> airplane, deer -> horse, cat <-> dog.
/// A convention, configurable through [`NoiseSpec::transition_map`].
pub fn cifar10_pair_map() -> Vec<usize> {
    let mut map: Vec<usize> = (0..CIFAR_CLASSES).collect();
    map[9] = 1;
    map[2] = 0;
    map[4] = 7;
    map[3] = 5;
    map[5] = 3;
    map
}

/// Two-class map that turns "high" (1) into "low" (0).
pub fn two_class_map() -> Vec<usize> {
    vec![0, 0]
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::out_of_range("noise rate", self.rate, "[0, 1)"));
        }
        let k = self.transition_map.len();
        if k < 2 {
            return Err(Error::InvalidConfig("transition map needs at least 2 classes".into()));
        }
        if let Some(&t) = self.transition_map.iter().find(|&&t| t >= k) {
            return Err(Error::out_of_range("transition target", t, "[0, K)"));
        }
        Ok(())
    }

    /// Expected fraction of labels changed for the given clean labels.
    pub fn expected_flip_fraction(&self, labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let movable = labels.iter().filter(|&&l| self.transition_map[l] != l).count();
        self.rate * movable as f64 / labels.len() as f64
    }

    /// [`asymmetric_flip`] driven by `self.seed`.
    pub fn apply(&self, labels: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        asymmetric_flip(labels, self, &mut rng_from_seed(self.seed))
    }
}

/// Each sample independently, with probability `rate`, takes the label
/// `transition_map[label]`. Returns the new labels and the indices that
/// changed. One uniform draw is consumed per sample.
pub fn asymmetric_flip<R: Rng + ?Sized>(
    labels: &[usize],
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let k = spec.transition_map.len();
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::out_of_range("label", l, "[0, K)"));
    }
    let mut out = labels.to_vec();
    let mut mask = Vec::new();
    for (i, label) in out.iter_mut().enumerate() {
        let u: f64 = rng.random();
        let target = spec.transition_map[*label];
        if u < spec.rate && target != *label {
            *label = target;
            mask.push(i);
        }
    }
    Ok((out, mask))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub index: usize,
    pub old_label: usize,
    pub new_label: usize,
}

/// Audit trail of a corruption, serialized as a JSON array.
pub fn flip_audit_json(old: &[usize], new: &[usize], mask: &[usize]) -> String {
    let records: Vec<FlipRecord> = mask
        .iter()
        .map(|&i| FlipRecord {
            index: i,
            old_label: old[i],
            new_label: new[i],
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("records serialize")
}

/// Still frames of the synthetic cell scenes, area-downsampled to
/// `side x side`, labelled high/low for `task`. Image `i` comes from seed
/// `derive_seed(seed, i)`.
pub fn synthetic_two_class(n: usize, side: usize, task: Task, seed: u64, gen: &GenerationConfig) -> Result<LabeledImageSet> {
    gen.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("synthetic set needs at least one image".into()));
    }
    if side == 0 || gen.height % side != 0 || gen.width % side != 0 || gen.height != gen.width {
        return Err(Error::InvalidConfig(format!(
            "frame {}x{} cannot be area-downsampled to {side}x{side}",
            gen.height, gen.width
        )));
    }
    let factor = gen.height / side;
    let items = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i as u64);
            let scene = sample_scene(&mut rng, gen)?;
            let frame = render_frame(&scene.cells, gen.width, gen.height, &gen.palette);
            let frame = scene.degradation.apply(&frame, &mut rng)?;
            let mean = match task {
                Task::Rbc => gen.population.rbc_mean,
                Task::Wbc => gen.population.wbc_mean,
            };
            let count = match task {
                Task::Rbc => scene.rbc_count,
                Task::Wbc => scene.wbc_count,
            };
            let label = (f64::from(count) > mean) as usize;
            Ok((downsample(&frame.data, gen.height, factor), label))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut images = Vec::with_capacity(n * 3 * side * side);
    let mut labels = Vec::with_capacity(n);
    for (img, label) in items {
        images.extend_from_slice(&img);
        labels.push(label);
    }
    Ok(LabeledImageSet {
        images,
        labels,
        height: side,
        width: side,
        num_classes: 2,
        provenance: Provenance::Clean,
    })
}

/// Mean over `factor x factor` blocks of a square 3-channel image, rounded.
fn downsample(data: &[u8], size: usize, factor: usize) -> Vec<u8> {
    let out = size / factor;
    let n = (factor * factor) as u32;
    let mut res = Vec::with_capacity(3 * out * out);
    for plane in data.chunks(size * size) {
        for y in 0..out {
            for x in 0..out {
                let mut s = 0u32;
                for dy in 0..factor {
                    let row = &plane[(y * factor + dy) * size + x * factor..][..factor];
                    s += row.iter().map(|&v| u32::from(v)).sum::<u32>();
                }
                res.push(((2 * s + n) / (2 * n)) as u8);
            }
        }
    }
    res
}
