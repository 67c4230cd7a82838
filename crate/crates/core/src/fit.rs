//! Direct per-video fitting of a Gaussian trajectory by full-batch Adam on
//! the rendering loss.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{Camera, Gaussian, GaussianTrajectory};
use crate::image::{Image, Video};
use crate::math::{log10, sqrt};
use crate::params::{FlatParams, Layout, ParamGroup};
use crate::splat::{render_loss_and_gradients, render_rgb, RasterConfig};

/// Adam step sizes per parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LearningRates {
    pub means: f64,
    pub delta_means: f64,
    pub colors: f64,
    pub delta_colors: f64,
    pub scales: f64,
    pub opacities: f64,
    pub quaternions: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            means: 2e-3,
            delta_means: 2e-3,
            colors: 1e-2,
            delta_colors: 1e-2,
            scales: 5e-3,
            opacities: 5e-2,
            quaternions: 1e-3,
        }
    }
}

impl LearningRates {
    pub fn uniform(lr: f64) -> Self {
        LearningRates {
            means: lr,
            delta_means: lr,
            colors: lr,
            delta_colors: lr,
            scales: lr,
            opacities: lr,
            quaternions: lr,
        }
    }

    pub fn for_group(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Means => self.means,
            ParamGroup::Scales => self.scales,
            ParamGroup::Quaternions => self.quaternions,
            ParamGroup::Colors => self.colors,
            ParamGroup::Opacities => self.opacities,
            ParamGroup::DeltaMeans => self.delta_means,
            ParamGroup::DeltaColors => self.delta_colors,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Gaussian count.
    pub n: usize,
    pub iters: usize,
    pub lr: LearningRates,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Camera depth of the nearest initial Gaussian; the others sit up to 1%
    /// further back.
    pub init_depth: f64,
    /// Keep every mean residual at zero.
    pub freeze_dmu: bool,
    /// Keep every color residual at zero.
    pub freeze_dr: bool,
    pub raster: RasterConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n: 256,
            iters: 2000,
            lr: LearningRates::default(),
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            init_depth: 1.0,
            freeze_dmu: false,
            freeze_dr: false,
            raster: RasterConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "need at least one Gaussian"));
        }
        let lrs = ParamGroup::ALL.map(|g| self.lr.for_group(g));
        if !lrs.iter().all(|&lr| lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid("learning rate", "must be finite and non-negative"));
        }
        if !(self.init_depth > crate::geom::Z_NEAR) {
            return Err(Error::invalid("init_depth", "must be in front of the camera"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return Err(Error::invalid("adam", "betas must lie in [0, 1) and eps must be positive"));
        }
        self.raster.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitReport {
    /// Loss of the returned trajectory.
    pub final_loss: f64,
    /// PSNR of each rendered frame against its target, in dB.
    pub psnr: Vec<f64>,
    /// Loss before each optimization step.
    pub loss_curve: Vec<f64>,
    /// Wall-clock seconds spent fitting; `None` without the `std` feature.
    pub wall_time_secs: Option<f64>,
}

/// `10 log10(1 / MSE)`; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid("psnr", "images differ in shape"));
    }
    let n = a.data().len();
    if n == 0 {
        return Err(Error::Empty("image"));
    }
    let sq: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    let mse = sq / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * log10(1.0 / mse))
}

/// Relative spread of the initial depths.
const DEPTH_SPREAD: f64 = 1e-2;
const EDGE_INSET: f64 = 1e-6;

/// Seeded initialization: `n` Gaussians at random pixels of the first frame,
/// back-projected to just behind `init_depth`, colored like their pixel,
/// sized so the projected 1σ footprint is about `width / √n` pixels.
pub fn init_trajectory(video: &Video, camera: &Camera, config: &FitConfig) -> Result<GaussianTrajectory> {
    if video.is_empty() {
        return Err(Error::Empty("video"));
    }
    config.validate()?;
    check_frame_size(video, camera)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let first = &video.frames()[0];
    let depth = config.init_depth;
    let footprint = camera.width as f64 / sqrt(config.n as f64);
    let scale = footprint * depth / camera.fx;
    let mut g0 = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let x = rng.gen_range(0..camera.width);
        let y = rng.gen_range(0..camera.height);
        let rgb = first.pixel(x, y);
        // Distinct depths, increasing with index, reproduce the index
        // tie-break of equal depths while keeping the first steps from
        // reordering the splats.
        let z = depth * (1.0 + DEPTH_SPREAD * i as f64 / config.n as f64);
        // Row/column 0 could round to just outside the image on the way back.
        let pixel = [(x as f64).max(EDGE_INSET), (y as f64).max(EDGE_INSET)];
        let mean = camera.unproject(pixel, z);
        g0.push(Gaussian::isotropic(
            mean,
            scale * z / depth,
            [rgb[0].clamp(0.0, 1.0), rgb[1].clamp(0.0, 1.0), rgb[2].clamp(0.0, 1.0)],
            0.5,
        )?);
    }
    GaussianTrajectory::stationary(g0, video.len())
}

fn check_frame_size(video: &Video, camera: &Camera) -> Result<()> {
    if video.width() != camera.width || video.height() != camera.height {
        return Err(Error::invalid("video", "frame size differs from the camera image size"));
    }
    Ok(())
}

/// Adaptive-moment state over a flat parameter vector.
struct Adam {
    lr: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
}

impl Adam {
    fn new(layout: Layout, config: &FitConfig) -> Self {
        let mut lr = vec![0.0; layout.len()];
        for g in ParamGroup::ALL {
            lr[layout.range(g)].fill(config.lr.for_group(g));
        }
        Adam {
            m: vec![0.0; lr.len()],
            v: vec![0.0; lr.len()],
            lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr[i] * m_hat / (sqrt(v_hat) + self.eps);
        }
    }
}

pub fn fit_video(video: &Video, camera: &Camera, config: &FitConfig) -> Result<(GaussianTrajectory, FitReport)> {
    fit_video_with(video, camera, config, |_, _| {})
}

/// [`fit_video`] with a callback receiving `(iteration, loss)` before each step.
pub fn fit_video_with(
    video: &Video,
    camera: &Camera,
    config: &FitConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<(GaussianTrajectory, FitReport)> {
    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let mut traj = init_trajectory(video, camera, config)?;
    let mut params = FlatParams::from_trajectory(&traj);
    let layout = params.layout();
    let mut adam = Adam::new(layout, config);
    let mut loss_curve = Vec::with_capacity(config.iters);

    for iteration in 0..config.iters {
        let (loss, grad) = render_loss_and_gradients(&traj, camera, video, &config.raster)?;
        let mut grads = grad.to_flat();
        if let Some(group) = first_non_finite(&grads, layout) {
            return Err(Error::NumericalFailure {
                group: group.name(),
                iteration,
            });
        }
        if !loss.is_finite() {
            return Err(Error::NumericalFailure {
                group: "loss",
                iteration,
            });
        }
        if config.freeze_dmu {
            grads[layout.range(ParamGroup::DeltaMeans)].fill(0.0);
        }
        if config.freeze_dr {
            grads[layout.range(ParamGroup::DeltaColors)].fill(0.0);
        }
        progress(iteration, loss);
        loss_curve.push(loss);
        adam.update(params.values_mut(), &grads);
        params.normalize_quaternions();
        if let Some(group) = first_non_finite(params.values(), layout) {
            return Err(Error::NumericalFailure {
                group: group.name(),
                iteration,
            });
        }
        traj = params.to_trajectory()?;
    }

    let (final_loss, psnr) = evaluate_fit(&traj, camera, video, &config.raster)?;
    #[cfg(feature = "std")]
    let wall_time_secs = Some(started.elapsed().as_secs_f64());
    #[cfg(not(feature = "std"))]
    let wall_time_secs = None;
    Ok((
        traj,
        FitReport {
            final_loss,
            psnr,
            loss_curve,
            wall_time_secs,
        },
    ))
}

/// Mean squared error over the whole clip and per-frame PSNR.
pub fn evaluate_fit(
    traj: &GaussianTrajectory,
    camera: &Camera,
    video: &Video,
    raster: &RasterConfig,
) -> Result<(f64, Vec<f64>)> {
    if traj.k() != video.len() {
        return Err(Error::DimensionMismatch {
            what: "video frame count",
            expected: traj.k(),
            found: video.len(),
        });
    }
    check_frame_size(video, camera)?;
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut per_frame = Vec::with_capacity(traj.k());
    for (frame, target) in traj.frames().iter().zip(video.frames()) {
        let img = render_rgb(frame, camera, raster)?;
        per_frame.push(psnr(&img, target)?);
        sq += img.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += img.data().len();
    }
    Ok((sq / count as f64, per_frame))
}

fn first_non_finite(values: &[f64], layout: Layout) -> Option<ParamGroup> {
    ParamGroup::ALL
        .into_iter()
        .find(|&g| values[layout.range(g)].iter().any(|v| !v.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_video(w: usize, h: usize, k: usize, rgb: [f64; 3]) -> Video {
        Video::new(vec![Image::filled(w, h, &rgb); k]).unwrap()
    }

    #[test]
    fn psnr_edge_cases() {
        let a = Image::filled(4, 4, &[0.0; 3]);
        let b = Image::filled(4, 4, &[1.0; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
        assert!(psnr(&a, &Image::new(4, 5, 3)).is_err());
    }

    #[test]
    fn constant_video_initializes_to_its_color() {
        let v = constant_video(16, 12, 3, [0.2, 0.4, 0.6]);
        let cam = Camera::default_for(16, 12);
        let cfg = FitConfig {
            n: 20,
            ..FitConfig::default()
        };
        let t = init_trajectory(&v, &cam, &cfg).unwrap();
        assert_eq!((t.k(), t.n()), (3, 20));
        assert!(t.g0().iter().all(|g| g.color == [0.2, 0.4, 0.6] && g.opacity == 0.5));
        assert!(t.deltas().iter().flatten().all(|d| *d == crate::GaussianDelta::ZERO));
        assert_eq!(t, init_trajectory(&v, &cam, &cfg).unwrap());
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let v = constant_video(8, 8, 2, [0.3; 3]);
        let cam = Camera::default_for(8, 8);
        let cfg = FitConfig {
            n: 4,
            iters: 0,
            ..FitConfig::default()
        };
        let (t, report) = fit_video(&v, &cam, &cfg).unwrap();
        assert_eq!(t, init_trajectory(&v, &cam, &cfg).unwrap());
        assert!(report.loss_curve.is_empty());
        assert_eq!(report.psnr.len(), 2);
    }

    #[test]
    fn nan_target_aborts_naming_a_group() {
        let mut frame = Image::filled(8, 8, &[0.3; 3]);
        frame.pixel_mut(4, 4)[0] = f64::NAN;
        let v = Video::new(vec![frame]).unwrap();
        let cam = Camera::default_for(8, 8);
        let cfg = FitConfig {
            n: 4,
            iters: 3,
            ..FitConfig::default()
        };
        match fit_video(&v, &cam, &cfg) {
            Err(Error::NumericalFailure { group, iteration }) => {
                assert_eq!(iteration, 0);
                assert_eq!(group, "means");
            }
            other => panic!("expected a numerical failure, got {other:?}"),
        }
    }
}
