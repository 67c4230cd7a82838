//! Deterministic synthetic videos with exact ground-truth tracks.
//!
//! Every blob is a single Gaussian moved by a per-frame displacement script,
//! so the generating trajectory is exact. A blob center is visible in frame
//! `t` when it projects inside the image and no nearer Gaussian has
//! composited weight above one half there.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::GroundTruthTrack;
use crate::geom::{project_point, Camera, Gaussian, GaussianDelta, GaussianTrajectory, Z_NEAR};
use crate::image::Video;
use crate::math::{Quat, Vec3};
use crate::splat::{render_rgb, ProjectedFrame, RasterConfig};

/// Composited weight above which a nearer Gaussian hides a blob center.
pub const OCCLUSION_WEIGHT: f64 = 0.5;

const IDENTITY_QUAT: Quat = [1.0, 0.0, 0.0, 0.0];

#[cfg(feature = "serde")]
fn identity_quat() -> Quat {
    IDENTITY_QUAT
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlobSpec {
    /// World position in frame 0.
    pub position: Vec3,
    pub scale: Vec3,
    #[cfg_attr(feature = "serde", serde(default = "identity_quat"))]
    pub rotation: Quat,
    pub color: Vec3,
    pub opacity: f64,
    /// World displacement from frame `t` to `t + 1`; empty for a static blob.
    #[cfg_attr(feature = "serde", serde(default))]
    pub velocity: Vec<Vec3>,
    /// Color change from frame `t` to `t + 1`; empty for a constant color.
    #[cfg_attr(feature = "serde", serde(default))]
    pub color_velocity: Vec<Vec3>,
}

/// A static grid of Gaussians behind the blobs. Not tracked.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackdropSpec {
    pub cols: usize,
    pub rows: usize,
    pub depth: f64,
    /// Isotropic world scale.
    pub scale: f64,
    pub opacity: f64,
    pub color: Vec3,
    /// Half-width of the seeded per-channel color jitter.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub blobs: Vec<BlobSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub background: Vec3,
    #[cfg_attr(feature = "serde", serde(default))]
    pub backdrop: Option<BackdropSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub video: Video,
    /// One track per blob, in blob order.
    pub gt_tracks: Vec<GroundTruthTrack>,
    /// Blobs first, then the backdrop.
    pub gt_trajectory: GaussianTrajectory,
    pub camera: Camera,
}

impl SceneSpec {
    pub fn camera(&self) -> Camera {
        Camera::default_for(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("scene size", "width and height must be positive"));
        }
        if self.k < 2 {
            return Err(Error::invalid("k", "a scene needs at least two frames"));
        }
        for (b, blob) in self.blobs.iter().enumerate() {
            for (name, len) in [("velocity", blob.velocity.len()), ("color_velocity", blob.color_velocity.len())] {
                if len != 0 && len != self.k - 1 {
                    return Err(Error::invalid(
                        name,
                        alloc::format!("blob {b} has {len} steps, expected 0 or {}", self.k - 1),
                    ));
                }
            }
        }
        if let Some(bd) = &self.backdrop {
            if bd.cols == 0 || bd.rows == 0 || !(bd.scale > 0.0) || !(bd.depth > Z_NEAR) {
                return Err(Error::invalid("backdrop", "needs a non-empty grid, positive scale and depth"));
            }
        }
        Ok(())
    }

    fn backdrop_gaussians(&self, camera: &Camera) -> Result<Vec<Gaussian>> {
        let Some(bd) = &self.backdrop else {
            return Ok(Vec::new());
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(bd.cols * bd.rows);
        for r in 0..bd.rows {
            for c in 0..bd.cols {
                let px = [
                    (c as f64 + 0.5) * self.width as f64 / bd.cols as f64,
                    (r as f64 + 0.5) * self.height as f64 / bd.rows as f64,
                ];
                let mut color = bd.color;
                for v in &mut color {
                    *v = (*v + rng.gen_range(-1.0..=1.0) * bd.jitter).clamp(0.0, 1.0);
                }
                out.push(Gaussian::isotropic(camera.unproject(px, bd.depth), bd.scale, color, bd.opacity)?);
            }
        }
        Ok(out)
    }

    /// The generating trajectory: blobs first, then the backdrop.
    pub fn trajectory(&self, camera: &Camera) -> Result<GaussianTrajectory> {
        self.validate()?;
        let mut g0 = Vec::with_capacity(self.blobs.len());
        for blob in &self.blobs {
            g0.push(Gaussian::new(blob.position, blob.scale, blob.rotation, blob.color, blob.opacity)?);
        }
        g0.extend(self.backdrop_gaussians(camera)?);
        let n = g0.len();
        let mut deltas = vec![vec![GaussianDelta::ZERO; n]; self.k - 1];
        for (b, blob) in self.blobs.iter().enumerate() {
            for (t, row) in deltas.iter_mut().enumerate() {
                row[b] = GaussianDelta {
                    mean: blob.velocity.get(t).copied().unwrap_or([0.0; 3]),
                    color: blob.color_velocity.get(t).copied().unwrap_or([0.0; 3]),
                };
            }
        }
        GaussianTrajectory::new(g0, deltas)
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SynthOutput> {
    generate_scene_with(spec, &spec.camera())
}

/// [`generate_scene`] through an explicit camera.
pub fn generate_scene_with(spec: &SceneSpec, camera: &Camera) -> Result<SynthOutput> {
    if camera.width != spec.width || camera.height != spec.height {
        return Err(Error::invalid("camera", "image size differs from the scene size"));
    }
    let traj = spec.trajectory(camera)?;
    let frames = traj.frames();
    for (t, gs) in frames.iter().enumerate() {
        for b in 0..spec.blobs.len() {
            if !(camera.to_camera_frame(gs[b].mean)[2] > Z_NEAR) {
                return Err(Error::BlobBehindCamera { blob: b, frame: t });
            }
        }
    }
    let raster = RasterConfig::default().with_background(&spec.background);
    let mut images = Vec::with_capacity(spec.k);
    let mut points = vec![Vec::with_capacity(spec.k); spec.blobs.len()];
    let mut visible = vec![Vec::with_capacity(spec.k); spec.blobs.len()];
    for gs in &frames {
        images.push(render_rgb(gs, camera, &raster)?);
        let projected = ProjectedFrame::new(gs, camera, &raster)?;
        for b in 0..spec.blobs.len() {
            let (x, depth) = project_point(camera, gs[b].mean)?;
            let mut vis = camera.contains(x);
            if vis {
                let weights = projected.visibility_at(x);
                vis = !gs.iter().enumerate().any(|(j, g)| {
                    j != b && weights[j] > OCCLUSION_WEIGHT && camera.to_camera_frame(g.mean)[2] < depth
                });
            }
            points[b].push(x);
            visible[b].push(vis);
        }
    }
    let gt_tracks = points
        .into_iter()
        .zip(visible)
        .map(|(p, v)| GroundTruthTrack::new(p, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthOutput {
        video: Video::new(images)?,
        gt_tracks,
        gt_trajectory: traj,
        camera: *camera,
    })
}

/// Scene families of [`standard_suite`], by index range.
pub const SUITE_FAMILIES: [(&str, core::ops::Range<usize>); 5] = [
    ("translation", 0..5),
    ("depth", 5..9),
    ("occlusion", 9..13),
    ("exit", 13..17),
    ("color", 17..20),
];

const SUITE_SIZE: usize = 64;
const SUITE_K: usize = 16;
const PALETTE: [Vec3; 6] = [
    [0.92, 0.18, 0.16],
    [0.18, 0.82, 0.30],
    [0.22, 0.36, 0.95],
    [0.95, 0.86, 0.20],
    [0.86, 0.28, 0.86],
    [0.20, 0.86, 0.90],
];

/// Builds blobs in pixel units through the suite camera.
struct SuiteBuilder {
    camera: Camera,
    rng: ChaCha8Rng,
    palette: Vec<Vec3>,
}

impl SuiteBuilder {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut palette = PALETTE.to_vec();
        for i in (1..palette.len()).rev() {
            palette.swap(i, rng.gen_range(0..=i));
        }
        SuiteBuilder {
            camera: Camera::default_for(SUITE_SIZE, SUITE_SIZE),
            rng,
            palette,
        }
    }

    fn jitter(&mut self, half: f64) -> f64 {
        self.rng.gen_range(-half..=half)
    }

    /// A blob centered at pixel `px`, `depth` away, with pixel-space
    /// velocities `v[t]` (plus per-frame depth change `dz`).
    fn blob(&mut self, index: usize, px: [f64; 2], depth: f64, sigma_px: f64, v: &[[f64; 2]], dz: f64) -> BlobSpec {
        let f = self.camera.fx;
        let mut position = self.camera.unproject(px, depth);
        let mut velocity = Vec::with_capacity(SUITE_K - 1);
        let mut pixel = px;
        let mut z = depth;
        for step in v {
            pixel = [pixel[0] + step[0], pixel[1] + step[1]];
            z += dz;
            let next = self.camera.unproject(pixel, z);
            velocity.push([next[0] - position[0], next[1] - position[1], next[2] - position[2]]);
            position = next;
        }
        let s = sigma_px * depth / f;
        let opacity = 0.98 + self.jitter(0.01);
        BlobSpec {
            position: self.camera.unproject(px, depth),
            scale: [s; 3],
            rotation: IDENTITY_QUAT,
            color: self.palette[index % self.palette.len()],
            opacity,
            velocity,
            color_velocity: Vec::new(),
        }
    }

    fn scene(&mut self, blobs: Vec<BlobSpec>, seed: u64) -> SceneSpec {
        SceneSpec {
            width: SUITE_SIZE,
            height: SUITE_SIZE,
            k: SUITE_K,
            blobs,
            background: [0.0; 3],
            // Background-colored filler: ground-truth trajectories get enough
            // Gaussians for the default anchor count, the frames stay untextured.
            backdrop: Some(BackdropSpec {
                cols: 6,
                rows: 6,
                depth: 4.0,
                scale: 0.6,
                opacity: 0.3,
                color: [0.0, 0.0, 0.0],
                jitter: 0.0,
            }),
            seed,
        }
    }
}

fn constant(v: [f64; 2]) -> Vec<[f64; 2]> {
    vec![v; SUITE_K - 1]
}

/// Twenty 64×64, 16-frame scenes: pure translation (0–4), depth change
/// (5–8), crossing occlusion (9–12), frame exit and re-entry (13–16) and
/// color drift (17–19).
pub fn standard_suite(seed: u64) -> Vec<SceneSpec> {
    let mut out = Vec::with_capacity(20);
    for i in 0..20 {
        let scene_seed = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let mut b = SuiteBuilder::new(scene_seed);
        let blobs = match i {
            0..=4 => translation(&mut b),
            5..=8 => depth_change(&mut b),
            9..=12 => crossing(&mut b),
            13..=16 => exit(&mut b, i - 13),
            _ => color_drift(&mut b),
        };
        out.push(b.scene(blobs, scene_seed));
    }
    out
}

fn translation(b: &mut SuiteBuilder) -> Vec<BlobSpec> {
    (0..3)
        .map(|j| {
            let y = 14.0 + 18.0 * j as f64 + b.jitter(2.0);
            let x = 18.0 + b.jitter(6.0);
            let v = [1.0 + 0.5 * b.jitter(1.0) + 0.5, b.jitter(0.4)];
            let depth = 1.8 + 0.3 * j as f64 + b.jitter(0.1);
            let sigma = 3.5 + b.jitter(0.4);
            b.blob(j, [x, y], depth, sigma, &constant(v), 0.0)
        })
        .collect()
}

fn depth_change(b: &mut SuiteBuilder) -> Vec<BlobSpec> {
    (0..2)
        .map(|j| {
            let y = 20.0 + 24.0 * j as f64 + b.jitter(2.0);
            let x = 22.0 + b.jitter(6.0);
            let v = [1.0 + b.jitter(0.3), b.jitter(0.3)];
            let (depth, dz) = if j == 0 { (2.4, -0.04) } else { (1.6, 0.04) };
            let sigma = 3.5 + b.jitter(0.3);
            let depth = depth + b.jitter(0.1);
            b.blob(j, [x, y], depth, sigma, &constant(v), dz)
        })
        .collect()
}

fn crossing(b: &mut SuiteBuilder) -> Vec<BlobSpec> {
    let center = [32.0 + b.jitter(3.0), 34.0 + b.jitter(3.0)];
    let dir = if b.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let speed = 4.0;
    let start = [center[0] - dir * speed * 7.5, center[1] + b.jitter(0.5)];
    let far = b.blob(0, center, 2.6, 3.5, &[], 0.0);
    let near = b.blob(1, start, 1.5, 3.0, &constant([dir * speed, 0.0]), 0.0);
    let side_at = [20.0 + b.jitter(4.0), 10.0 + b.jitter(1.0)];
    let side = b.blob(2, side_at, 2.0, 3.5, &constant([1.0, 0.2]), 0.0);
    vec![far, near, side]
}

fn exit(b: &mut SuiteBuilder, variant: usize) -> Vec<BlobSpec> {
    let lane = 30.0 + b.jitter(4.0);
    let mut blobs = Vec::new();
    match variant {
        // Out through the right edge and back.
        0 => {
            let v: Vec<[f64; 2]> = (0..SUITE_K - 1).map(|t| [if t < 7 { 4.0 } else { -4.0 }, 0.0]).collect();
            let x = 41.5 + b.jitter(0.5);
            blobs.push(b.blob(0, [x, lane], 2.0, 3.5, &v, 0.0));
        }
        // Out through the top edge and back.
        1 => {
            let v: Vec<[f64; 2]> = (0..SUITE_K - 1).map(|t| [0.5, if t < 6 { -4.0 } else { 4.0 }]).collect();
            let y = 21.5 + b.jitter(0.5);
            blobs.push(b.blob(0, [lane, y], 2.0, 3.5, &v, 0.0));
        }
        // Out through the left edge and back.
        2 => {
            let v: Vec<[f64; 2]> = (0..SUITE_K - 1).map(|t| [if t < 8 { -3.0 } else { 3.0 }, 0.3]).collect();
            let x = 19.5 + b.jitter(0.5);
            blobs.push(b.blob(0, [x, lane], 2.0, 3.5, &v, 0.0));
        }
        // Leaves through the right edge at frame 10 for good.
        _ => {
            let x = 34.5 + b.jitter(0.4);
            blobs.push(b.blob(0, [x, lane], 2.0, 3.5, &constant([3.0, 0.0]), 0.0));
        }
    }
    let y = if lane < 32.0 { 52.0 } else { 12.0 };
    let x = 16.0 + b.jitter(3.0);
    blobs.push(b.blob(1, [x, y], 2.2, 3.5, &constant([1.5, 0.0]), 0.0));
    blobs
}

fn color_drift(b: &mut SuiteBuilder) -> Vec<BlobSpec> {
    (0..2)
        .map(|j| {
            let y = 20.0 + 24.0 * j as f64 + b.jitter(2.0);
            let x = 20.0 + b.jitter(4.0);
            let v = [1.2 + b.jitter(0.3), b.jitter(0.3)];
            let depth = 2.0 + b.jitter(0.2);
            let mut blob = b.blob(j, [x, y], depth, 3.5, &constant(v), 0.0);
            let dc = [b.jitter(0.04), b.jitter(0.04), b.jitter(0.04)];
            blob.color_velocity = vec![dc; SUITE_K - 1];
            blob
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_scene() -> SceneSpec {
        let cam = Camera::default_for(24, 24);
        SceneSpec {
            width: 24,
            height: 24,
            k: 4,
            blobs: vec![BlobSpec {
                position: cam.unproject([12.0, 12.0], 2.0),
                scale: [0.1; 3],
                rotation: IDENTITY_QUAT,
                color: [0.9, 0.1, 0.1],
                opacity: 0.95,
                velocity: Vec::new(),
                color_velocity: Vec::new(),
            }],
            background: [0.0; 3],
            backdrop: None,
            seed: 3,
        }
    }

    #[test]
    fn static_blob_has_constant_visible_track() {
        let out = generate_scene(&static_scene()).unwrap();
        let gt = &out.gt_tracks[0];
        assert!(gt.points.iter().all(|p| (p[0] - 12.0).abs() < 1e-12 && (p[1] - 12.0).abs() < 1e-12));
        assert!(gt.visible.iter().all(|&v| v));
        assert_eq!(out.video.len(), 4);
    }

    #[test]
    fn behind_camera_is_reported_with_its_frame() {
        let mut spec = static_scene();
        spec.blobs[0].velocity = vec![[0.0, 0.0, -0.9]; 3];
        match generate_scene(&spec) {
            Err(Error::BlobBehindCamera { blob: 0, frame: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_script_lengths_are_rejected() {
        let mut spec = static_scene();
        spec.blobs[0].velocity = vec![[0.0; 3]; 2];
        assert!(generate_scene(&spec).is_err());
        spec.k = 1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn suite_shape() {
        let suite = standard_suite(0);
        assert_eq!(suite.len(), 20);
        assert_eq!(suite, standard_suite(0));
        assert_ne!(suite, standard_suite(1));
        for s in &suite {
            s.validate().unwrap();
            assert_eq!((s.width, s.height, s.k), (64, 64, 16));
        }
    }
}
