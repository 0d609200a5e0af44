//! Sources of augmented training/evaluation views.

use rand::Rng;

use crate::augment::{resize_crop, sample_crop_rect, video_view, ClipSpec, CropSpec};
use crate::curriculum::{difficulty, CurriculumParams};
use crate::error::{Error, Result};
use crate::labelnoise::LabeledImageSet;
use crate::multiview::{Augmenter, Predictor, PredictionVector};
use crate::synthcells::{ManifestEntry, Task, Video};

use super::nn::Classifier;

/// Maps 0-255 intensities to roughly `[-1, 1]`.
#[inline]
pub fn normalize_intensity(v: f32) -> f32 {
    v / 127.5 - 1.0
}

/// A labelled collection that can produce random augmented views.
pub trait ViewSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn num_classes(&self) -> usize;

    fn label(&self, i: usize) -> usize;

    /// `(channels, height, width)` of every view.
    fn view_shape(&self) -> (usize, usize, usize);

    /// Append one normalized view of sample `i` to `out`.
    fn draw_view(&self, i: usize, rng: &mut dyn rand::RngCore, out: &mut Vec<f32>) -> Result<()>;

    /// Raw curriculum features `(b, l)` of sample `i`, if known.
    fn difficulty_features(&self, i: usize) -> Option<(f64, f64)> {
        let _ = i;
        None
    }
}

/// Curriculum difficulty of every sample in `src`.
pub fn source_difficulties<S: ViewSource + ?Sized>(src: &S, params: &CurriculumParams) -> Result<Vec<f64>> {
    (0..src.len())
        .map(|i| {
            let (b, l) = src
                .difficulty_features(i)
                .ok_or_else(|| Error::MissingDifficulty(format!("sample {i}")))?;
            Ok(difficulty(b, l, params)?.d)
        })
        .collect()
}

/// Video clips with one shared crop per clip.
pub struct VideoViews<'a> {
    videos: Vec<&'a Video>,
    labels: Vec<usize>,
    features: Vec<Option<(f64, f64)>>,
    clip: ClipSpec,
    crop: CropSpec,
}

impl<'a> VideoViews<'a> {
    /// `videos[i]` must belong to `entries[i]`.
    pub fn new(videos: Vec<&'a Video>, entries: &[&ManifestEntry], task: Task, clip: ClipSpec, crop: CropSpec) -> Result<Self> {
        if videos.len() != entries.len() {
            return Err(Error::Shape {
                context: "videos vs manifest entries",
                expected: vec![entries.len()],
                actual: vec![videos.len()],
            });
        }
        crop.validate()?;
        if videos.iter().any(|v| clip.clip_len == 0 || clip.clip_len > v.n_frames) {
            return Err(Error::out_of_range("clip_len", clip.clip_len, "[1, n_frames]"));
        }
        if let Some(v) = videos.iter().find(|v| v.channels != 3) {
            return Err(Error::Shape {
                context: "video channels",
                expected: vec![3],
                actual: vec![v.channels],
            });
        }
        Ok(VideoViews {
            videos,
            labels: entries.iter().map(|e| e.label(task)).collect(),
            features: entries
                .iter()
                .map(|e| e.difficulty.map(|f| (f64::from(f.b), f.l(task))))
                .collect(),
            clip,
            crop,
        })
    }
}

impl ViewSource for VideoViews<'_> {
    fn len(&self) -> usize {
        self.videos.len()
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn view_shape(&self) -> (usize, usize, usize) {
        (3 * self.clip.clip_len, self.crop.out_size, self.crop.out_size)
    }

    fn draw_view(&self, i: usize, rng: &mut dyn rand::RngCore, out: &mut Vec<f32>) -> Result<()> {
        let view = video_view(self.videos[i], &self.clip, &self.crop, rng)?;
        out.extend(view.data.iter().map(|&v| normalize_intensity(v)));
        Ok(())
    }

    fn difficulty_features(&self, i: usize) -> Option<(f64, f64)> {
        self.features[i]
    }
}

/// Still images with optional label override (e.g. corrupted labels).
pub struct ImageViews<'a> {
    set: &'a LabeledImageSet,
    indices: Vec<usize>,
    labels: Vec<usize>,
    crop: Option<CropSpec>,
}

impl<'a> ImageViews<'a> {
    /// Views of `set[indices]` with their stored labels. `crop = None` feeds
    /// the full image.
    pub fn new(set: &'a LabeledImageSet, indices: Vec<usize>, crop: Option<CropSpec>) -> Result<Self> {
        let labels = indices.iter().map(|&i| set.labels[i]).collect();
        Self::with_labels(set, indices, labels, crop)
    }

    pub fn with_labels(
        set: &'a LabeledImageSet,
        indices: Vec<usize>,
        labels: Vec<usize>,
        crop: Option<CropSpec>,
    ) -> Result<Self> {
        if labels.len() != indices.len() {
            return Err(Error::Shape {
                context: "label override",
                expected: vec![indices.len()],
                actual: vec![labels.len()],
            });
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= set.len()) {
            return Err(Error::out_of_range("image index", i, "[0, N)"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= set.num_classes) {
            return Err(Error::out_of_range("label", l, "[0, K)"));
        }
        if let Some(c) = &crop {
            c.validate()?;
        }
        Ok(ImageViews {
            set,
            indices,
            labels,
            crop,
        })
    }
}

impl ViewSource for ImageViews<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn num_classes(&self) -> usize {
        self.set.num_classes
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn view_shape(&self) -> (usize, usize, usize) {
        match &self.crop {
            Some(c) => (3, c.out_size, c.out_size),
            None => (3, self.set.height, self.set.width),
        }
    }

    fn draw_view(&self, i: usize, rng: &mut dyn rand::RngCore, out: &mut Vec<f32>) -> Result<()> {
        let img = self.set.image(self.indices[i]);
        let (h, w) = (self.set.height, self.set.width);
        match &self.crop {
            Some(c) => {
                let rect = sample_crop_rect(h, w, c, rng)?;
                let start = out.len();
                resize_crop(img, h, w, rect, c.out_size, out);
                out[start..].iter_mut().for_each(|v| *v = normalize_intensity(*v));
            }
            None => out.extend(img.iter().map(|&v| normalize_intensity(f32::from(v)))),
        }
        Ok(())
    }
}

/// Adapts a [`ViewSource`] to the multi-view [`Augmenter`] contract: the
/// sample is an index, the output a normalized input tensor.
pub struct SourceAugmenter<'s, S: ?Sized>(pub &'s S);

impl<S: ViewSource + ?Sized> Augmenter<usize> for SourceAugmenter<'_, S> {
    type Output = Vec<f32>;

    fn augment<R: Rng + ?Sized>(&self, sample: &usize, rng: &mut R) -> Result<Vec<f32>> {
        let mut out = Vec::new();
        let mut adapter = RngAdapter(rng);
        self.0.draw_view(*sample, &mut adapter, &mut out)?;
        Ok(out)
    }
}

/// `RngCore` view of any `Rng`, so generic callers can reach `dyn` sources.
struct RngAdapter<'r, R: ?Sized>(&'r mut R);

impl<R: Rng + ?Sized> rand::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

impl Predictor<Vec<f32>> for Classifier<f32> {
    fn predict(&self, input: &Vec<f32>) -> Result<PredictionVector> {
        Ok(self.forward(input, 1)?.remove(0))
    }

    fn predict_batch(&self, inputs: &[Vec<f32>]) -> Result<Vec<PredictionVector>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let flat: Vec<f32> = inputs.concat();
        self.forward(&flat, inputs.len())
    }
}
