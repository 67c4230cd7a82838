//! Depth-sorted front-to-back Gaussian splatting.
//!
//! Every Gaussian in front of the camera is projected to a 2-D Gaussian,
//! sorted by camera depth (ties by index) and composited per pixel:
//!
//! ```text
//! αᵢ(u) = min(oᵢ · exp(-½ dᵀ Σ₂D⁻¹ d), 0.999),  d = u - xᵢ
//! wᵢ(u) = αᵢ(u) · Π_{j before i} (1 - αⱼ(u))
//! I(u)  = Σᵢ wᵢ(u) aᵢ + (1 - Σᵢ wᵢ(u)) · background
//! ```
//!
//! Samples beyond `cutoff_sigma` standard deviations or with α below
//! `alpha_min` contribute nothing. Pixel `(x, y)` is sampled at the continuous
//! position `(x, y)`.

mod backward;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{rot_scale_cov, Camera, Gaussian, LOW_PASS, Z_NEAR};
use crate::image::{bilinear_stencil, Image};
use crate::math::{mul3, sandwich23, transpose3, Mat2, Mat23, Mat3, Quat, Vec2, Vec3};

pub use backward::render_loss_and_gradients;

/// Per-sample opacity ceiling.
pub const ALPHA_MAX: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterConfig {
    /// Extent, in standard deviations, beyond which a Gaussian contributes nothing.
    pub cutoff_sigma: f64,
    /// Samples with α below this are skipped.
    pub alpha_min: f64,
    /// Attribute composited behind all Gaussians. Empty means all-zero.
    pub background: Vec<f64>,
    /// Split pixel rows across threads (needs the `std` feature).
    pub parallel: bool,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            cutoff_sigma: 3.0,
            alpha_min: 1.0 / 255.0,
            background: Vec::new(),
            parallel: true,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_sigma > 0.0) {
            return Err(Error::invalid("cutoff_sigma", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.alpha_min) {
            return Err(Error::invalid("alpha_min", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn with_background(mut self, background: &[f64]) -> Self {
        self.background = background.to_vec();
        self
    }

    pub(crate) fn background_for(&self, channels: usize) -> Result<Vec<f64>> {
        if self.background.is_empty() {
            Ok(vec![0.0; channels])
        } else if self.background.len() == channels {
            Ok(self.background.clone())
        } else {
            Err(Error::DimensionMismatch {
                what: "background channels",
                expected: channels,
                found: self.background.len(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterOutput {
    pub image: Image,
    /// `Σᵢ wᵢ(u)` per pixel, single channel.
    pub accum_weight: Image,
    /// Indices of the Gaussians in front of the camera, nearest first.
    pub depth_order: Vec<usize>,
}

/// A projected Gaussian plus the intermediates its backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct Splat {
    pub index: usize,
    pub center: Vec2,
    /// Inverse image-plane covariance as `(a, b, c)` = `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub cov2d: Mat2,
    pub opacity: f64,
    pub depth: f64,
    pub cam_point: Vec3,
    pub jacobian: Mat23,
    pub cam_cov: Mat3,
    pub rotation: Mat3,
    pub scale: Vec3,
    pub quat: Quat,
    x_range: (usize, usize),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub alpha: f64,
    pub gauss: f64,
    pub dx: f64,
    pub dy: f64,
    pub clamped: bool,
}

/// One frame's Gaussians projected, depth-sorted and binned by pixel row.
#[derive(Debug, Clone)]
pub struct ProjectedFrame {
    width: usize,
    height: usize,
    n: usize,
    cutoff2: f64,
    alpha_min: f64,
    splats: Vec<Splat>,
    /// Positions into `splats` whose footprint touches each row, in depth order.
    rows: Vec<Vec<u32>>,
}

impl ProjectedFrame {
    pub fn new(gaussians: &[Gaussian], camera: &Camera, config: &RasterConfig) -> Result<Self> {
        config.validate()?;
        let cutoff = config.cutoff_sigma;
        let (w, h) = (camera.width, camera.height);
        let wcam = &camera.rotation;
        let wcam_t = transpose3(wcam);
        let mut splats = Vec::with_capacity(gaussians.len());
        for (index, g) in gaussians.iter().enumerate() {
            let cam_point = camera.to_camera_frame(g.mean);
            if !(cam_point[2] > Z_NEAR) {
                continue;
            }
            let quat = crate::geom::normalize_quat(g.rotation)?;
            let rotation = crate::geom::quat_to_rotation(quat)?;
            let cov3 = rot_scale_cov(&rotation, g.scale);
            let cam_cov = mul3(&mul3(wcam, &cov3), &wcam_t);
            let jacobian = camera.jacobian(cam_point);
            let mut cov2d = sandwich23(&jacobian, &cam_cov);
            cov2d[0][0] += LOW_PASS;
            cov2d[1][1] += LOW_PASS;
            let off = 0.5 * (cov2d[0][1] + cov2d[1][0]);
            cov2d[0][1] = off;
            cov2d[1][0] = off;
            let det = cov2d[0][0] * cov2d[1][1] - off * off;
            if !(det > 0.0) {
                continue;
            }
            let conic = [cov2d[1][1] / det, -off / det, cov2d[0][0] / det];
            let center = camera.project_camera_point(cam_point);
            let rx = cutoff * crate::math::sqrt(cov2d[0][0]);
            let ry = cutoff * crate::math::sqrt(cov2d[1][1]);
            let Some(x_range) = pixel_span(center[0] - rx, center[0] + rx, w) else {
                continue;
            };
            let Some(y_range) = pixel_span(center[1] - ry, center[1] + ry, h) else {
                continue;
            };
            splats.push((
                y_range,
                Splat {
                    index,
                    center,
                    conic,
                    cov2d,
                    opacity: g.opacity,
                    depth: cam_point[2],
                    cam_point,
                    jacobian,
                    cam_cov,
                    rotation,
                    scale: g.scale,
                    quat,
                    x_range,
                },
            ));
        }
        splats.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.1.index.cmp(&b.1.index)));
        let mut rows = vec![Vec::new(); h];
        for (pos, (y_range, _)) in splats.iter().enumerate() {
            for row in &mut rows[y_range.0..=y_range.1] {
                row.push(pos as u32);
            }
        }
        Ok(ProjectedFrame {
            width: w,
            height: h,
            n: gaussians.len(),
            cutoff2: cutoff * cutoff,
            alpha_min: config.alpha_min,
            splats: splats.into_iter().map(|(_, s)| s).collect(),
            rows,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of Gaussians the frame was built from (including culled ones).
    pub fn gaussian_count(&self) -> usize {
        self.n
    }

    /// Indices of the rendered Gaussians, nearest first.
    pub fn depth_order(&self) -> Vec<usize> {
        self.splats.iter().map(|s| s.index).collect()
    }

    pub(crate) fn splats(&self) -> &[Splat] {
        &self.splats
    }

    pub(crate) fn row(&self, y: usize) -> &[u32] {
        &self.rows[y]
    }

    #[inline]
    pub(crate) fn sample(&self, s: &Splat, px: f64, py: f64) -> Option<Sample> {
        let x = px as usize;
        if x < s.x_range.0 || x > s.x_range.1 {
            return None;
        }
        let dx = px - s.center[0];
        let dy = py - s.center[1];
        let [a, b, c] = s.conic;
        let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        if !(q <= self.cutoff2) {
            return None;
        }
        let gauss = crate::math::exp(-0.5 * q);
        let raw = s.opacity * gauss;
        if raw < self.alpha_min {
            return None;
        }
        Some(Sample {
            alpha: raw.min(ALPHA_MAX),
            gauss,
            dx,
            dy,
            clamped: raw > ALPHA_MAX,
        })
    }

    /// Splats an `n × m` row-major attribute matrix.
    pub fn rasterize(&self, attributes: &[f64], channels: usize, config: &RasterConfig) -> Result<RasterOutput> {
        if attributes.len() != self.n * channels {
            return Err(Error::DimensionMismatch {
                what: "attribute matrix size",
                expected: self.n * channels,
                found: attributes.len(),
            });
        }
        let background = config.background_for(channels)?;
        let mut image = Image::new(self.width, self.height, channels);
        let mut weight = Image::new(self.width, self.height, 1);
        let row_len = self.width * channels;
        let render_row = |y: usize, img_row: &mut [f64], w_row: &mut [f64]| {
            self.composite_row(y, attributes, channels, &background, img_row, w_row)
        };
        #[cfg(feature = "std")]
        if config.parallel {
            use rayon::prelude::*;
            image
                .data_mut()
                .par_chunks_mut(row_len)
                .zip(weight.data_mut().par_chunks_mut(self.width))
                .enumerate()
                .for_each(|(y, (img_row, w_row))| render_row(y, img_row, w_row));
            return Ok(RasterOutput {
                image,
                accum_weight: weight,
                depth_order: self.depth_order(),
            });
        }
        for (y, (img_row, w_row)) in image
            .data_mut()
            .chunks_mut(row_len)
            .zip(weight.data_mut().chunks_mut(self.width))
            .enumerate()
        {
            render_row(y, img_row, w_row);
        }
        Ok(RasterOutput {
            image,
            accum_weight: weight,
            depth_order: self.depth_order(),
        })
    }

    fn composite_row(
        &self,
        y: usize,
        attributes: &[f64],
        channels: usize,
        background: &[f64],
        img_row: &mut [f64],
        w_row: &mut [f64],
    ) {
        let row = self.row(y);
        let py = y as f64;
        for x in 0..self.width {
            let px = x as f64;
            let out = &mut img_row[x * channels..(x + 1) * channels];
            let mut transmittance = 1.0;
            let mut accum = 0.0;
            for &pos in row {
                let s = &self.splats[pos as usize];
                let Some(sample) = self.sample(s, px, py) else {
                    continue;
                };
                let w = sample.alpha * transmittance;
                let attr = &attributes[s.index * channels..(s.index + 1) * channels];
                for (o, a) in out.iter_mut().zip(attr) {
                    *o += w * a;
                }
                accum += w;
                transmittance *= 1.0 - sample.alpha;
            }
            for (o, b) in out.iter_mut().zip(background) {
                *o += transmittance * b;
            }
            w_row[x] = accum;
        }
    }

    /// Adds `scale · wᵢ(x, y)` into `out[i]` for every Gaussian.
    pub(crate) fn add_pixel_weights(&self, x: usize, y: usize, scale: f64, out: &mut [f64]) {
        let (px, py) = (x as f64, y as f64);
        let mut transmittance = 1.0;
        for &pos in self.row(y) {
            let s = &self.splats[pos as usize];
            if let Some(sample) = self.sample(s, px, py) {
                out[s.index] += scale * sample.alpha * transmittance;
                transmittance *= 1.0 - sample.alpha;
            }
        }
    }

    /// Composited weight of every Gaussian at pixel `(x, y)`.
    pub fn pixel_weights(&self, x: usize, y: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        if x < self.width && y < self.height {
            self.add_pixel_weights(x, y, 1.0, &mut out);
        }
        out
    }

    /// Bilinear interpolation at `p` of each Gaussian's composited-weight
    /// grid, zero outside the image.
    pub fn visibility_at(&self, p: Vec2) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for ([x, y], w) in bilinear_stencil(p) {
            if w == 0.0 || x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                continue;
            }
            self.add_pixel_weights(x as usize, y as usize, w, &mut out);
        }
        out
    }
}

fn pixel_span(lo: f64, hi: f64, len: usize) -> Option<(usize, usize)> {
    let lo = libm::ceil(lo).max(0.0);
    let hi = libm::floor(hi).min(len as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Rasterizes an attribute matrix (`n × channels`, row-major) over one frame.
pub fn rasterize(
    gaussians: &[Gaussian],
    camera: &Camera,
    attributes: &[f64],
    channels: usize,
    config: &RasterConfig,
) -> Result<RasterOutput> {
    ProjectedFrame::new(gaussians, camera, config)?.rasterize(attributes, channels, config)
}

/// RGB render of one frame.
pub fn render_rgb(gaussians: &[Gaussian], camera: &Camera, config: &RasterConfig) -> Result<Image> {
    let colors: Vec<f64> = gaussians.iter().flat_map(|g| g.color).collect();
    Ok(rasterize(gaussians, camera, &colors, 3, config)?.image)
}

/// Per-Gaussian composited weight at a continuous pixel position.
pub fn visibility_at(gaussians: &[Gaussian], camera: &Camera, p: Vec2, config: &RasterConfig) -> Result<Vec<f64>> {
    Ok(ProjectedFrame::new(gaussians, camera, config)?.visibility_at(p))
}
