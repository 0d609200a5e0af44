//! On-disk dataset: one raw tensor file per video plus `manifest.json`.
//!
//! Sample file layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CSV1"
//! 4       4     u32 n_frames
//! 8       4     u32 height
//! 12      4     u32 width
//! 16      ...   u8 data, [frame, channel(3), row, col]
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::degrade::DegradationCategory;
use super::image::Video;
use super::population::Task;
use super::video::{generate_video_seeded, GenerationConfig, VideoSample};
use crate::error::{Error, Result};
use crate::rng::{child_rng, derive_seed};

pub const SAMPLE_MAGIC: &[u8; 4] = b"CSV1";
pub const SAMPLE_HEADER_LEN: usize = 16;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Index reserved for the split permutation stream.
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Train / validation / test sizes for a 0.6 / 0.2 / 0.2 split: floor for
/// the first two, remainder to test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 3 / 5;
    let val = n / 5;
    (train, val, n - train - val)
}

/// Curriculum inputs: blur radius and distance of each count from its mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyFeatures {
    pub b: u32,
    pub l_rbc: f64,
    pub l_wbc: f64,
}

impl DifficultyFeatures {
    pub fn l(&self, task: Task) -> f64 {
        match task {
            Task::Rbc => self.l_rbc,
            Task::Wbc => self.l_wbc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    /// Sample file, relative to the manifest directory.
    pub path: String,
    pub seed: u64,
    pub rbc_count: u32,
    pub wbc_count: u32,
    pub rbc_high: bool,
    pub wbc_high: bool,
    pub category: DegradationCategory,
    pub blur_radius: u32,
    pub noise_sigma: f64,
    #[serde(default)]
    pub difficulty: Option<DifficultyFeatures>,
    pub split: Split,
    /// SHA-256 of the sample file, hex.
    pub sha256: String,
}

impl ManifestEntry {
    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Rbc => self.rbc_high as usize,
            Task::Wbc => self.wbc_high as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub global_seed: u64,
    pub config: GenerationConfig,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entries_in(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    /// SHA-256 over the serialized manifest, which includes every sample digest.
    pub fn checksum(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "{}: unsupported manifest schema version {}",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Fraction of entries with a "high" label for `task`.
    pub fn high_fraction(&self, task: Task) -> f64 {
        let n = self.entries.len().max(1);
        self.entries.iter().filter(|e| e.label(task) == 1).count() as f64 / n as f64
    }
}

/// Serialize a video into the sample file format.
pub fn encode_sample(video: &Video) -> Result<Vec<u8>> {
    if video.channels != 3 {
        return Err(Error::Shape {
            context: "sample file",
            expected: vec![3],
            actual: vec![video.channels],
        });
    }
    let mut out = Vec::with_capacity(SAMPLE_HEADER_LEN + video.data.len());
    out.extend_from_slice(SAMPLE_MAGIC);
    for v in [video.n_frames, video.height, video.width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&video.data);
    Ok(out)
}

/// Parse the sample file format. `path` is only used in error messages.
pub fn decode_sample(bytes: &[u8], path: &Path) -> Result<Video> {
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < SAMPLE_HEADER_LEN {
        return Err(fail(bytes.len(), "truncated header".into()));
    }
    if &bytes[..4] != SAMPLE_MAGIC {
        return Err(fail(0, "bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (n_frames, height, width) = (word(0), word(1), word(2));
    let expected = n_frames * 3 * height * width;
    let payload = &bytes[SAMPLE_HEADER_LEN..];
    if payload.len() != expected {
        return Err(fail(
            SAMPLE_HEADER_LEN + payload.len().min(expected),
            format!("expected {expected} data bytes, found {}", payload.len()),
        ));
    }
    Ok(Video {
        n_frames,
        channels: 3,
        height,
        width,
        data: payload.to_vec(),
    })
}

pub fn write_sample(path: &Path, video: &Video) -> Result<String> {
    let bytes = encode_sample(video)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read_sample(path: &Path) -> Result<Video> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sample(&bytes, path)
}

fn sample_file_name(index: usize) -> String {
    format!("sample_{index:05}.csv1")
}

fn entry_for(index: usize, path: String, sha256: String, s: &VideoSample, cfg: &GenerationConfig) -> ManifestEntry {
    let pop = &cfg.population;
    ManifestEntry {
        index,
        path,
        seed: s.seed,
        rbc_count: s.rbc_count,
        wbc_count: s.wbc_count,
        rbc_high: s.rbc_high,
        wbc_high: s.wbc_high,
        category: s.degradation.category,
        blur_radius: s.degradation.blur_radius,
        noise_sigma: s.degradation.noise_sigma,
        difficulty: Some(DifficultyFeatures {
            b: s.degradation.blur_radius,
            l_rbc: (f64::from(s.rbc_count) - pop.rbc_mean).abs(),
            l_wbc: (f64::from(s.wbc_count) - pop.wbc_mean).abs(),
        }),
        split: Split::Train,
        sha256,
    }
}

/// Split assignment for `n` items: a seeded permutation, first 60 % train,
/// next 20 % validation, the rest test.
pub fn assign_splits(n: usize, global_seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut child_rng(global_seed, SPLIT_STREAM));
    let (train, val, _) = split_sizes(n);
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

/// Generate every video, write the sample files and `manifest.json` into
/// `out_dir`. Video `i` uses seed `derive_seed(global_seed, i)`, so the
/// result does not depend on the degree of parallelism.
pub fn generate_dataset(config: &GenerationConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = (0..config.n_videos)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(config.global_seed, index as u64);
            let sample = generate_video_seeded(seed, config)?;
            let name = sample_file_name(index);
            let digest = write_sample(&out_dir.join(&name), &sample.video)?;
            Ok(entry_for(index, name, digest, &sample, config))
        })
        .collect::<Result<Vec<_>>>()?;
    for (e, s) in entries.iter_mut().zip(assign_splits(config.n_videos, config.global_seed)) {
        e.split = s;
    }
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        global_seed: config.global_seed,
        config: config.clone(),
        entries,
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Load the videos of the given entries, resolving paths against `root`.
pub fn load_videos(root: &Path, entries: &[&ManifestEntry]) -> Result<Vec<Video>> {
    entries.iter().map(|e| read_sample(&root.join(&e.path))).collect()
}

/// Write every frame of `video` as `frame_XXX.png` into `dir`.
pub fn export_png_frames(video: &Video, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let plane = video.height * video.width;
    let mut paths = Vec::with_capacity(video.n_frames);
    for i in 0..video.n_frames {
        let frame = video.frame_data(i);
        let mut rgb = Vec::with_capacity(3 * plane);
        for p in 0..plane {
            rgb.extend_from_slice(&[frame[p], frame[plane + p], frame[2 * plane + p]]);
        }
        let path = dir.join(format!("frame_{i:03}.png"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), video.width as u32, video.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let to_io = |e: png::EncodingError| Error::io(&path, std::io::Error::other(e));
        let mut writer = enc.write_header().map_err(to_io)?;
        writer.write_image_data(&rgb).map_err(to_io)?;
        writer.finish().map_err(to_io)?;
        paths.push(path);
    }
    Ok(paths)
}
