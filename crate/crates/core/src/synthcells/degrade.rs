use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

pub const MAX_BLUR_RADIUS: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationCategory {
    Clear,
    Blurred,
    Noisy,
    BlurredNoisy,
}

impl DegradationCategory {
    pub const ALL: [DegradationCategory; 4] = [
        DegradationCategory::Clear,
        DegradationCategory::Blurred,
        DegradationCategory::Noisy,
        DegradationCategory::BlurredNoisy,
    ];

    /// Dataset proportions of clear, blurred, noisy and blurred+noisy videos.
    pub const PROPORTIONS: [f64; 4] = [0.130, 0.304, 0.217, 0.349];

    pub fn is_blurred(self) -> bool {
        matches!(self, DegradationCategory::Blurred | DegradationCategory::BlurredNoisy)
    }

    pub fn is_noisy(self) -> bool {
        matches!(self, DegradationCategory::Noisy | DegradationCategory::BlurredNoisy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub category: DegradationCategory,
    /// Box blur radius in pixels.
    pub blur_radius: u32,
    /// Standard deviation of additive Gaussian noise, 0-255 scale.
    pub noise_sigma: f64,
}

impl DegradationSpec {
    pub fn clear() -> Self {
        DegradationSpec {
            category: DegradationCategory::Clear,
            blur_radius: 0,
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let blurred = self.category.is_blurred();
        let noisy = self.category.is_noisy();
        if blurred && !(1..=MAX_BLUR_RADIUS).contains(&self.blur_radius) {
            return Err(Error::out_of_range("blur_radius", self.blur_radius, "[1, 10] when blurred"));
        }
        if !blurred && self.blur_radius != 0 {
            return Err(Error::out_of_range("blur_radius", self.blur_radius, "0 when not blurred"));
        }
        if !(0.0..=255.0).contains(&self.noise_sigma) {
            return Err(Error::out_of_range("noise_sigma", self.noise_sigma, "[0, 255]"));
        }
        if !noisy && self.noise_sigma != 0.0 {
            return Err(Error::out_of_range("noise_sigma", self.noise_sigma, "0 when not noisy"));
        }
        Ok(())
    }

    /// Blur, then noise, as configured.
    pub fn apply<R: Rng + ?Sized>(&self, image: &Image, rng: &mut R) -> Result<Image> {
        let blurred = box_blur(image, self.blur_radius)?;
        add_noise(&blurred, self.noise_sigma, rng)
    }
}

/// Draw a degradation category with the dataset proportions, a blur radius
/// uniform in `1..=10` when blurred and a noise level uniform in
/// `noise_range` when noisy.
pub fn assign_degradation<R: Rng + ?Sized>(rng: &mut R, noise_range: [f64; 2]) -> DegradationSpec {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut category = DegradationCategory::BlurredNoisy;
    for (c, p) in DegradationCategory::ALL.iter().zip(DegradationCategory::PROPORTIONS) {
        acc += p;
        if u < acc {
            category = *c;
            break;
        }
    }
    let blur_radius = if category.is_blurred() {
        rng.random_range(1..=MAX_BLUR_RADIUS)
    } else {
        0
    };
    let noise_sigma = if category.is_noisy() {
        noise_range[0] + rng.random::<f64>() * (noise_range[1] - noise_range[0])
    } else {
        0.0
    };
    DegradationSpec {
        category,
        blur_radius,
        noise_sigma,
    }
}

/// Mean over the `(2b+1) x (2b+1)` neighbourhood of every pixel, per channel,
/// with clamp-to-edge borders. The integer result rounds half up.
pub fn box_blur(image: &Image, b: u32) -> Result<Image> {
    if b > MAX_BLUR_RADIUS {
        return Err(Error::out_of_range("blur radius", b, "[0, 10]"));
    }
    if b == 0 {
        return Ok(image.clone());
    }
    let (h, w) = (image.height, image.width);
    let r = b as isize;
    let count = ((2 * b + 1) * (2 * b + 1)) as u32;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut out = Vec::with_capacity(image.data.len());
    let mut rows = vec![0u32; h * w];
    for plane in image.data.chunks(h * w) {
        // Horizontal window sums, sliding.
        for (src, dst) in plane.chunks(w).zip(rows.chunks_mut(w)) {
            let mut s: u32 = (-r..=r).map(|dx| u32::from(src[clamp(dx, w)])).sum();
            dst[0] = s;
            for col in 1..w {
                let col = col as isize;
                s += u32::from(src[clamp(col + r, w)]);
                s -= u32::from(src[clamp(col - r - 1, w)]);
                dst[col as usize] = s;
            }
        }
        // Vertical window sums of the horizontal sums.
        let mut cols: Vec<u32> = (0..w)
            .map(|col| (-r..=r).map(|dy| rows[clamp(dy, h) * w + col]).sum())
            .collect();
        let start = out.len();
        out.resize(start + h * w, 0);
        for row in 0..h {
            if row > 0 {
                let add = clamp(row as isize + r, h) * w;
                let sub = clamp(row as isize - r - 1, h) * w;
                for col in 0..w {
                    cols[col] = cols[col] + rows[add + col] - rows[sub + col];
                }
            }
            for col in 0..w {
                out[start + row * w + col] = ((2 * cols[col] + count) / (2 * count)) as u8;
            }
        }
    }
    Image::from_raw(image.channels, h, w, out)
}

/// Add i.i.d. `N(0, sigma^2)` to every value, round and clamp to `[0, 255]`.
pub fn add_noise<R: Rng + ?Sized>(image: &Image, sigma: f64, rng: &mut R) -> Result<Image> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::out_of_range("noise sigma", sigma, "[0, inf)"));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let data = image
        .data
        .iter()
        .map(|&v| (f64::from(v) + normal.sample(rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::from_raw(image.channels, image.height, image.width, data)
}
