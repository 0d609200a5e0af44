use crate::error::{Error, Result};

/// 8-bit image in `[channel, row, col]` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(channels: usize, height: usize, width: usize, value: u8) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_raw(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape {
                context: "image buffer",
                expected: vec![channels, height, width],
                actual: vec![data.len()],
            });
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> u8 {
        self.data[(c * self.height + row) * self.width + col]
    }

    /// RGB triple at one pixel (first three channels).
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        [self.get(0, row, col), self.get(1, row, col), self.get(2, row, col)]
    }
}

/// Frame stack in `[frame, channel, row, col]` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Video {
    pub n_frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Video {
    pub fn from_frames(frames: &[Image]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidConfig("video needs at least one frame".into()))?;
        let mut data = Vec::with_capacity(frames.len() * first.data.len());
        for f in frames {
            if (f.channels, f.height, f.width) != (first.channels, first.height, first.width) {
                return Err(Error::Shape {
                    context: "video frame",
                    expected: vec![first.channels, first.height, first.width],
                    actual: vec![f.channels, f.height, f.width],
                });
            }
            data.extend_from_slice(&f.data);
        }
        Ok(Video {
            n_frames: frames.len(),
            channels: first.channels,
            height: first.height,
            width: first.width,
            data,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn frame_data(&self, i: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame(&self, i: usize) -> Image {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.frame_data(i).to_vec(),
        }
    }

    /// `[n_frames, channels, height, width]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.n_frames, self.channels, self.height, self.width]
    }
}
