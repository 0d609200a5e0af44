//! Random resized crops and consecutive-frame clip sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthcells::{Image, Video};

const CROP_ATTEMPTS: usize = 10;

/// Floating-point image, `[channel, row, col]`, values on the 0-255 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropSpec {
    /// Crop area as a fraction of the frame area.
    pub area_scale_range: [f64; 2],
    /// Width / height ratio range, sampled log-uniformly.
    pub aspect_ratio_range: [f64; 2],
    /// Side of the square output.
    pub out_size: usize,
}

impl Default for CropSpec {
    fn default() -> Self {
        CropSpec {
            area_scale_range: [0.10, 0.20],
            aspect_ratio_range: [3.0 / 4.0, 4.0 / 3.0],
            out_size: 32,
        }
    }
}

impl CropSpec {
    pub fn validate(&self) -> Result<()> {
        let [smin, smax] = self.area_scale_range;
        if !(0.0 < smin && smin <= smax && smax <= 1.0) {
            return Err(Error::InvalidConfig(
                "crop area_scale_range must satisfy 0 < min <= max <= 1".into(),
            ));
        }
        let [rmin, rmax] = self.aspect_ratio_range;
        if !(0.0 < rmin && rmin <= rmax && rmax.is_finite()) {
            return Err(Error::InvalidConfig("crop aspect_ratio_range is invalid".into()));
        }
        if self.out_size < 8 {
            return Err(Error::InvalidConfig("crop out_size must be >= 8".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl CropRect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Pick a crop rectangle whose area lies in the configured fraction of the
/// frame: up to ten random attempts, then a centred square.
pub fn sample_crop_rect<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    spec: &CropSpec,
    rng: &mut R,
) -> Result<CropRect> {
    spec.validate()?;
    if height < 8 || width < 8 {
        return Err(Error::Shape {
            context: "crop source (minimum 8x8)",
            expected: vec![8, 8],
            actual: vec![height, width],
        });
    }
    let area = (height * width) as f64;
    let [smin, smax] = spec.area_scale_range;
    let lo = (smin * area).floor().max(1.0) as usize;
    let hi = (smax * area).floor() as usize;
    let [rmin, rmax] = spec.aspect_ratio_range;
    for _ in 0..CROP_ATTEMPTS {
        let target = area * rng.random_range(smin..=smax);
        let ratio = rng.random_range(rmin.ln()..=rmax.ln()).exp();
        let w = (target * ratio).sqrt().round() as usize;
        let h = (target / ratio).sqrt().round() as usize;
        if w == 0 || h == 0 || w > width || h > height || !(lo..=hi).contains(&(w * h)) {
            continue;
        }
        return Ok(CropRect {
            top: rng.random_range(0..=height - h),
            left: rng.random_range(0..=width - w),
            height: h,
            width: w,
        });
    }
    Ok(center_crop(height, width, hi))
}

fn center_crop(height: usize, width: usize, max_area: usize) -> CropRect {
    if max_area >= height * width {
        return CropRect {
            top: 0,
            left: 0,
            height,
            width,
        };
    }
    let side = ((max_area as f64).sqrt().floor() as usize).clamp(1, height.min(width));
    CropRect {
        top: (height - side) / 2,
        left: (width - side) / 2,
        height: side,
        width: side,
    }
}

/// Bilinear resize of `rect` within each `height x width` plane of `src` to
/// `out_size x out_size`, sampling at half-pixel centres with edge clamping.
/// Appends `planes * out_size^2` values to `out`.
pub fn resize_crop(src: &[u8], height: usize, width: usize, rect: CropRect, out_size: usize, out: &mut Vec<f32>) {
    let plane = height * width;
    let axis = |start: usize, len: usize| -> Vec<(usize, usize, f32)> {
        let scale = len as f64 / out_size as f64;
        (0..out_size)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(len - 1);
                (start + i0, start + i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let ys = axis(rect.top, rect.height);
    let xs = axis(rect.left, rect.width);
    for p in src.chunks(plane) {
        for &(y0, y1, fy) in &ys {
            let r0 = &p[y0 * width..(y0 + 1) * width];
            let r1 = &p[y1 * width..(y1 + 1) * width];
            for &(x0, x1, fx) in &xs {
                let top = f32::from(r0[x0]) * (1.0 - fx) + f32::from(r0[x1]) * fx;
                let bot = f32::from(r1[x0]) * (1.0 - fx) + f32::from(r1[x1]) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
}

/// Random crop of `image`, resized to `spec.out_size` square.
pub fn random_resized_crop<R: Rng + ?Sized>(image: &Image, spec: &CropSpec, rng: &mut R) -> Result<FloatImage> {
    let rect = sample_crop_rect(image.height, image.width, spec, rng)?;
    let mut data = Vec::with_capacity(image.channels * spec.out_size * spec.out_size);
    resize_crop(&image.data, image.height, image.width, rect, spec.out_size, &mut data);
    Ok(FloatImage {
        channels: image.channels,
        height: spec.out_size,
        width: spec.out_size,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipSpec {
    pub clip_len: usize,
}

impl Default for ClipSpec {
    fn default() -> Self {
        ClipSpec { clip_len: 9 }
    }
}

/// `clip_len` consecutive frames starting at a uniform random index.
/// Returns the start index and the frames.
pub fn sample_clip<R: Rng + ?Sized>(video: &Video, spec: &ClipSpec, rng: &mut R) -> Result<(usize, Video)> {
    let start = sample_clip_start(video.n_frames, spec, rng)?;
    let n = video.frame_len();
    Ok((
        start,
        Video {
            n_frames: spec.clip_len,
            data: video.data[start * n..(start + spec.clip_len) * n].to_vec(),
            ..*video
        },
    ))
}

pub fn sample_clip_start<R: Rng + ?Sized>(n_frames: usize, spec: &ClipSpec, rng: &mut R) -> Result<usize> {
    if spec.clip_len == 0 || spec.clip_len > n_frames {
        return Err(Error::out_of_range("clip_len", spec.clip_len, "[1, n_frames]"));
    }
    Ok(rng.random_range(0..=n_frames - spec.clip_len))
}

/// One training/inference view of a video: a random clip, one crop
/// rectangle shared by all its frames, frames stacked on the channel axis.
pub fn video_view<R: Rng + ?Sized>(
    video: &Video,
    clip: &ClipSpec,
    crop: &CropSpec,
    rng: &mut R,
) -> Result<FloatImage> {
    let start = sample_clip_start(video.n_frames, clip, rng)?;
    let rect = sample_crop_rect(video.height, video.width, crop, rng)?;
    let n = video.frame_len();
    let frames = &video.data[start * n..(start + clip.clip_len) * n];
    let mut data = Vec::with_capacity(clip.clip_len * video.channels * crop.out_size * crop.out_size);
    resize_crop(frames, video.height, video.width, rect, crop.out_size, &mut data);
    Ok(FloatImage {
        channels: clip.clip_len * video.channels,
        height: crop.out_size,
        width: crop.out_size,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn gradient_image(h: usize, w: usize) -> Image {
        let mut data = Vec::new();
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data.push(((x * 7 + y * 3 + c * 40) % 256) as u8);
                }
            }
        }
        Image::from_raw(3, h, w, data).unwrap()
    }

    #[test]
    fn full_scale_square_is_identity() {
        let img = gradient_image(32, 32);
        let spec = CropSpec {
            area_scale_range: [1.0, 1.0],
            aspect_ratio_range: [1.0, 1.0],
            out_size: 32,
        };
        let out = random_resized_crop(&img, &spec, &mut rng_from_seed(0)).unwrap();
        let want: Vec<f32> = img.data.iter().map(|&v| f32::from(v)).collect();
        assert_eq!(out.data, want);
    }

    #[test]
    fn crop_area_in_range() {
        let spec = CropSpec::default();
        let mut rng = rng_from_seed(4);
        for _ in 0..2000 {
            let r = sample_crop_rect(128, 128, &spec, &mut rng).unwrap();
            assert!((1638..=3276).contains(&r.area()), "{r:?}");
            assert!(r.top + r.height <= 128 && r.left + r.width <= 128);
        }
    }

    #[test]
    fn crop_is_deterministic() {
        let spec = CropSpec::default();
        let a = sample_crop_rect(128, 128, &spec, &mut rng_from_seed(9)).unwrap();
        let b = sample_crop_rect(128, 128, &spec, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_images_rejected() {
        let img = gradient_image(7, 16);
        assert!(random_resized_crop(&img, &CropSpec::default(), &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn fallback_is_centred_and_in_range() {
        // An aspect ratio that can never fit forces the fallback.
        let spec = CropSpec {
            area_scale_range: [0.1, 0.2],
            aspect_ratio_range: [50.0, 60.0],
            out_size: 8,
        };
        let r = sample_crop_rect(64, 64, &spec, &mut rng_from_seed(1)).unwrap();
        assert_eq!(r.height, r.width);
        assert!((409..=819).contains(&r.area()));
        assert_eq!(r.top, (64 - r.height) / 2);
    }

    #[test]
    fn bilinear_constant_and_range() {
        let img = Image::filled(3, 40, 40, 77);
        let out = random_resized_crop(&img, &CropSpec::default(), &mut rng_from_seed(2)).unwrap();
        assert!(out.data.iter().all(|&v| v == 77.0));
        let img = gradient_image(50, 60);
        let out = random_resized_crop(&img, &CropSpec::default(), &mut rng_from_seed(3)).unwrap();
        assert_eq!(out.data.len(), 3 * 32 * 32);
        assert!(out.data.iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    fn numbered_video(n: usize) -> Video {
        let frames: Vec<Image> = (0..n).map(|i| Image::filled(3, 16, 16, i as u8)).collect();
        Video::from_frames(&frames).unwrap()
    }

    #[test]
    fn clip_sampling() {
        let v = numbered_video(100);
        let (start, whole) = sample_clip(&v, &ClipSpec { clip_len: 100 }, &mut rng_from_seed(0)).unwrap();
        assert_eq!(start, 0);
        assert_eq!(whole, v);
        assert!(sample_clip(&v, &ClipSpec { clip_len: 101 }, &mut rng_from_seed(0)).is_err());

        let mut rng = rng_from_seed(5);
        let mut seen = [false; 92];
        for _ in 0..10_000 {
            let (start, clip) = sample_clip(&v, &ClipSpec::default(), &mut rng).unwrap();
            assert!(start <= 91);
            seen[start] = true;
            for (k, f) in (0..9).map(|k| (k, clip.frame_data(k))) {
                assert!(f.iter().all(|&x| x as usize == start + k));
            }
        }
        assert!(seen.iter().all(|&s| s));

        let (_, single) = sample_clip(&v, &ClipSpec { clip_len: 1 }, &mut rng).unwrap();
        assert_eq!(single.shape(), [1, 3, 16, 16]);
    }

    #[test]
    fn clip_view_shares_the_crop() {
        // Frame k is a gradient offset by k, so equal crops give outputs
        // differing by exactly k everywhere.
        let frames: Vec<Image> = (0..20)
            .map(|k| {
                let mut img = gradient_image(48, 48);
                img.data.iter_mut().for_each(|v| *v = (*v % 200) + k as u8);
                img
            })
            .collect();
        let video = Video::from_frames(&frames).unwrap();
        let crop = CropSpec::default();
        let view = video_view(&video, &ClipSpec { clip_len: 4 }, &crop, &mut rng_from_seed(8)).unwrap();
        assert_eq!(view.channels, 12);
        let plane = 3 * 32 * 32;
        for k in 1..4 {
            for i in 0..plane {
                let d = view.data[k * plane + i] - view.data[i];
                assert!((d - k as f32).abs() < 1e-3);
            }
        }
    }
}
