//! Dense `H × W × C` grids of `f64` used for frames, flow fields and weights.
//!
//! Pixel `(x, y)` sits at continuous coordinate `(x, y)`; bilinear lookups
//! treat everything outside the grid as zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{floor, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let mut data = Vec::with_capacity(width * height * value.len());
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Image {
            width,
            height,
            channels: value.len(),
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "image buffer length",
                expected,
                found: data.len(),
            });
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Bilinear lookup at continuous position `p` with zero padding.
    pub fn bilinear(&self, p: Vec2) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        for (node, w) in bilinear_stencil(p) {
            if let Some((x, y)) = self.node(node) {
                for (o, v) in out.iter_mut().zip(self.pixel(x, y)) {
                    *o += w * v;
                }
            }
        }
        out
    }

    fn node(&self, node: [i64; 2]) -> Option<(usize, usize)> {
        let [x, y] = node;
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then_some((x as usize, y as usize))
    }
}

/// The four integer nodes around `p` and their bilinear weights.
///
/// Non-finite positions yield all-zero weights.
pub fn bilinear_stencil(p: Vec2) -> [([i64; 2], f64); 4] {
    if !(p[0].is_finite() && p[1].is_finite()) {
        return [([i64::MIN, i64::MIN], 0.0); 4];
    }
    let x0 = floor(p[0]);
    let y0 = floor(p[1]);
    let fx = p[0] - x0;
    let fy = p[1] - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    [
        ([x0, y0], (1.0 - fx) * (1.0 - fy)),
        ([x0 + 1, y0], fx * (1.0 - fy)),
        ([x0, y0 + 1], (1.0 - fx) * fy),
        ([x0 + 1, y0 + 1], fx * fy),
    ]
}

/// `k` equally sized RGB frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    frames: Vec<Image>,
}

impl Video {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("video"))?;
        if first.width == 0 || first.height == 0 {
            return Err(Error::invalid("video", "frames must have non-zero size"));
        }
        for f in &frames {
            if f.channels != 3 {
                return Err(Error::DimensionMismatch {
                    what: "frame channels",
                    expected: 3,
                    found: f.channels,
                });
            }
            if f.width != first.width || f.height != first.height {
                return Err(Error::invalid("video", "frames differ in size"));
            }
        }
        Ok(Video { frames })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    /// First `k` frames.
    pub fn truncated(&self, k: usize) -> Result<Video> {
        Video::new(self.frames.iter().take(k).cloned().collect())
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }
}
