//! Zero-shot point tracking read out of a Gaussian trajectory.
//!
//! Each Gaussian's image-plane displacement `Δxᵢ⁽ᵗ⁺¹⁾ = xᵢ⁽ᵗ⁺¹⁾ − xᵢ⁽ᵗ⁾` is
//! splatted into a dense flow field `F⁽ᵗ⁾`. A query point is tied to a fixed
//! anchor set `𝒮` (the `top_k` Gaussians with the largest composited weight
//! at the query) and advanced frame by frame:
//!
//! ```text
//! ω      = Σ_{i∈𝒮} wᵢ(p)
//! π̃ᵢ     = wᵢ(p) / (Σ_{j∈𝒮} wⱼ(p) + ε)
//! a      = p + F⁽ᵗ⁾(p)
//! s_vis  = Σ_{i∈𝒮} π̃ᵢ (xᵢ⁽ᵗ⁾ + Δxᵢ⁽ᵗ⁺¹⁾)
//! p'     = (1 − β) a + β s_vis   if ω ≥ τ_vis
//!        = s_vis                 otherwise
//! ```
//!
//! Frames before the query frame are tracked the same way on the
//! time-reversed trajectory.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{project_point, Camera, Gaussian, GaussianTrajectory};
use crate::image::Image;
use crate::math::Vec2;
use crate::splat::{ProjectedFrame, RasterConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrackerConfig {
    /// Size of the anchor set.
    pub top_k: usize,
    /// Anchor mass below which a point counts as occluded.
    pub tau_vis: f64,
    /// Weight of the anchor-mixture proposal on visible frames.
    pub beta: f64,
    pub eps: f64,
    /// Divide the splatted displacement by the accumulated weight.
    pub normalize_flow: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            top_k: 8,
            tau_vis: 0.5,
            beta: 0.3,
            eps: 1e-8,
            normalize_flow: true,
        }
    }
}

impl TrackerConfig {
    /// Checks the ranges, with `n` the trajectory's Gaussian count.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.top_k == 0 || self.top_k > n {
            return Err(Error::invalid("top_k", alloc::format!("must lie in [1, {n}]")));
        }
        if !(0.0..=1.0).contains(&self.tau_vis) {
            return Err(Error::invalid("tau_vis", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("beta", "must lie in [0, 1]"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Query {
    pub t: usize,
    pub p: Vec2,
}

impl Query {
    pub fn new(t: usize, p: Vec2) -> Self {
        Query { t, p }
    }

    pub fn validate(&self, k: usize, camera: &Camera) -> Result<()> {
        if self.t >= k {
            return Err(Error::FrameOutOfRange { t: self.t, limit: k });
        }
        if !camera.contains(self.p) {
            return Err(Error::InvalidQuery {
                t: self.t,
                x: self.p[0],
                y: self.p[1],
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Track {
    pub query: Query,
    pub points: Vec<Vec2>,
    pub visible: Vec<bool>,
    pub anchor_set: Vec<usize>,
}

/// Dense per-pixel displacement from frame `t` to frame `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub t: usize,
    /// Two channels: x and y displacement in pixels.
    pub grid: Image,
}

impl FlowField {
    pub fn at(&self, x: usize, y: usize) -> Vec2 {
        let v = self.grid.pixel(x, y);
        [v[0], v[1]]
    }

    /// Bilinear lookup, zero outside the image.
    pub fn sample(&self, p: Vec2) -> Vec2 {
        let v = self.grid.bilinear(p);
        [v[0], v[1]]
    }
}

/// Projected Gaussian centers per frame and their frame-to-frame offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTracks {
    /// `positions[t][i]`, `None` while Gaussian `i` is behind the near plane.
    pub positions: Vec<Vec<Option<Vec2>>>,
    /// `offsets[t][i] = x⁽ᵗ⁺¹⁾ − x⁽ᵗ⁾`; zero unless active in both frames.
    pub offsets: Vec<Vec<Vec2>>,
}

pub fn projected_tracks(traj: &GaussianTrajectory, camera: &Camera) -> ProjectedTracks {
    project_frames(&traj.frames(), camera)
}

fn project_frames(frames: &[Vec<Gaussian>], camera: &Camera) -> ProjectedTracks {
    let positions: Vec<Vec<Option<Vec2>>> = frames
        .iter()
        .map(|gs| gs.iter().map(|g| project_point(camera, g.mean).ok().map(|(x, _)| x)).collect())
        .collect();
    let offsets = positions
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => [b[0] - a[0], b[1] - a[1]],
                    _ => [0.0, 0.0],
                })
                .collect()
        })
        .collect();
    ProjectedTracks { positions, offsets }
}

fn splat_flow(frame: &ProjectedFrame, t: usize, offsets: &[Vec2], config: &TrackerConfig) -> Result<FlowField> {
    let attrs: Vec<f64> = offsets.iter().flat_map(|d| *d).collect();
    let out = frame.rasterize(&attrs, 2, &RasterConfig::default())?;
    let mut grid = out.image;
    if config.normalize_flow {
        for (v, w) in grid.data_mut().chunks_mut(2).zip(out.accum_weight.data()) {
            v[0] /= w + config.eps;
            v[1] /= w + config.eps;
        }
    }
    Ok(FlowField { t, grid })
}

/// Flow field advecting frame `t` to frame `t + 1`.
pub fn render_flow_field(
    traj: &GaussianTrajectory,
    camera: &Camera,
    t: usize,
    config: &TrackerConfig,
) -> Result<FlowField> {
    if t + 1 >= traj.k() {
        return Err(Error::FrameOutOfRange {
            t,
            limit: traj.k().saturating_sub(1),
        });
    }
    let frames = traj.frames();
    let tracks = project_frames(&frames[t..t + 2], camera);
    let frame = ProjectedFrame::new(&frames[t], camera, &RasterConfig::default())?;
    splat_flow(&frame, t, &tracks.offsets[0], config)
}

pub fn select_anchors(
    traj: &GaussianTrajectory,
    camera: &Camera,
    query: &Query,
    config: &TrackerConfig,
) -> Result<Vec<usize>> {
    config.validate(traj.n())?;
    query.validate(traj.k(), camera)?;
    let frame = ProjectedFrame::new(&traj.frames()[query.t], camera, &RasterConfig::default())?;
    Ok(top_k(&frame.visibility_at(query.p), config.top_k))
}

/// Indices of the `k` largest weights, ties to the lower index.
fn top_k(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn anchor_state_in(frame: &ProjectedFrame, anchors: &[usize], p: Vec2, eps: f64) -> (f64, Vec<f64>) {
    let weights = frame.visibility_at(p);
    let mass: f64 = anchors.iter().map(|&i| weights[i]).sum();
    let pi = anchors.iter().map(|&i| weights[i] / (mass + eps)).collect();
    (mass, pi)
}

/// Anchor mass `ω` and mixture weights `π̃` (in anchor order) at `p` in frame `t`.
pub fn anchor_state(
    traj: &GaussianTrajectory,
    camera: &Camera,
    anchors: &[usize],
    p: Vec2,
    t: usize,
    config: &TrackerConfig,
) -> Result<(f64, Vec<f64>)> {
    check_anchors(anchors, traj.n())?;
    if t >= traj.k() {
        return Err(Error::FrameOutOfRange { t, limit: traj.k() });
    }
    let frame = ProjectedFrame::new(&traj.frames()[t], camera, &RasterConfig::default())?;
    Ok(anchor_state_in(&frame, anchors, p, config.eps))
}

fn check_anchors(anchors: &[usize], n: usize) -> Result<()> {
    if anchors.is_empty() {
        return Err(Error::Empty("anchor set"));
    }
    if let Some(&bad) = anchors.iter().find(|&&i| i >= n) {
        return Err(Error::invalid("anchors", alloc::format!("index {bad} exceeds {n} Gaussians")));
    }
    Ok(())
}

/// Result of advancing a point by one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Position in frame `t + 1`.
    pub next: Vec2,
    /// Whether the point is visible in frame `t`.
    pub visible: bool,
    /// Anchor mass at the point in frame `t`.
    pub omega: f64,
    /// Mixture weights in frame `t`, in anchor order.
    pub weights: Vec<f64>,
    /// Flow advection proposal `p + F⁽ᵗ⁾(p)`.
    pub advected: Vec2,
    /// Anchor-mixture proposal.
    pub mixture: Vec2,
}

/// Position of `p` in frame `t + 1`, plus its frame-`t` visibility.
pub fn step(
    traj: &GaussianTrajectory,
    camera: &Camera,
    anchors: &[usize],
    p: Vec2,
    t: usize,
    config: &TrackerConfig,
) -> Result<StepOutcome> {
    config.validate(traj.n())?;
    check_anchors(anchors, traj.n())?;
    if t + 1 >= traj.k() {
        return Err(Error::FrameOutOfRange {
            t,
            limit: traj.k().saturating_sub(1),
        });
    }
    let frames = traj.frames();
    let pass = Pass::build(&frames[t..t + 2], camera, config)?;
    Ok(pass.advance(anchors, p, 0, camera, config, None))
}

pub fn track_point(
    traj: &GaussianTrajectory,
    camera: &Camera,
    query: &Query,
    config: &TrackerConfig,
) -> Result<Track> {
    Tracker::new(traj, camera, config)?.track(query)
}

/// Projections, frame splats and flow fields for one time direction.
#[derive(Debug, Clone)]
struct Pass {
    frames: Vec<ProjectedFrame>,
    tracks: ProjectedTracks,
    flows: Vec<FlowField>,
}

impl Pass {
    fn build(gaussians: &[Vec<Gaussian>], camera: &Camera, config: &TrackerConfig) -> Result<Self> {
        let raster = RasterConfig::default();
        let frames = gaussians
            .iter()
            .map(|gs| ProjectedFrame::new(gs, camera, &raster))
            .collect::<Result<Vec<_>>>()?;
        let tracks = project_frames(gaussians, camera);
        let flows = tracks
            .offsets
            .iter()
            .enumerate()
            .map(|(t, off)| splat_flow(&frames[t], t, off, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Pass { frames, tracks, flows })
    }

    fn mixture(&self, anchors: &[usize], weights: &[f64], t: usize) -> Vec2 {
        let mut s = [0.0, 0.0];
        for (&i, &pi) in anchors.iter().zip(weights) {
            let Some(x) = self.tracks.positions[t][i] else {
                continue;
            };
            let d = self.tracks.offsets[t][i];
            s[0] += pi * (x[0] + d[0]);
            s[1] += pi * (x[1] + d[1]);
        }
        s
    }

    /// One update from frame `t`. `fallback` replaces the mixture weights
    /// when the anchor mass is at or below `eps`.
    fn advance(
        &self,
        anchors: &[usize],
        p: Vec2,
        t: usize,
        camera: &Camera,
        config: &TrackerConfig,
        fallback: Option<&[f64]>,
    ) -> StepOutcome {
        let (omega, weights) = anchor_state_in(&self.frames[t], anchors, p, config.eps);
        let f = self.flows[t].sample(p);
        let advected = [p[0] + f[0], p[1] + f[1]];
        let degenerate = omega <= config.eps;
        let mixture = match (degenerate, fallback) {
            (true, Some(carried)) => self.mixture(anchors, carried, t),
            _ => self.mixture(anchors, &weights, t),
        };
        let visible = omega >= config.tau_vis && camera.contains(p);
        let next = if omega >= config.tau_vis {
            let b = config.beta;
            [(1.0 - b) * advected[0] + b * mixture[0], (1.0 - b) * advected[1] + b * mixture[1]]
        } else if degenerate && fallback.is_none() {
            advected
        } else {
            mixture
        };
        StepOutcome {
            next,
            visible,
            omega,
            weights,
            advected,
            mixture,
        }
    }

    /// Tracks from `(t0, p0)` to the last frame of this pass.
    fn run(
        &self,
        anchors: &[usize],
        t0: usize,
        p0: Vec2,
        camera: &Camera,
        config: &TrackerConfig,
        mut emit: impl FnMut(usize, Vec2, bool),
    ) {
        let k = self.frames.len();
        let mut p = p0;
        let mut carried: Option<Vec<f64>> = None;
        for t in t0..k - 1 {
            let out = self.advance(anchors, p, t, camera, config, carried.as_deref());
            if out.omega > config.eps {
                let total: f64 = out.weights.iter().sum();
                carried = Some(out.weights.iter().map(|w| w / total).collect());
            }
            emit(t, p, out.visible);
            p = out.next;
        }
        let (omega, _) = anchor_state_in(&self.frames[k - 1], anchors, p, config.eps);
        emit(k - 1, p, omega >= config.tau_vis && camera.contains(p));
    }
}

/// Tracks many queries against one trajectory, sharing the projected
/// frames and flow fields of both time directions.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    camera: Camera,
    forward: Pass,
    backward: Pass,
}

impl Tracker {
    pub fn new(traj: &GaussianTrajectory, camera: &Camera, config: &TrackerConfig) -> Result<Self> {
        config.validate(traj.n())?;
        let mut frames = traj.frames();
        let forward = Pass::build(&frames, camera, config)?;
        frames.reverse();
        let backward = Pass::build(&frames, camera, config)?;
        Ok(Tracker {
            config: *config,
            camera: *camera,
            forward,
            backward,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.forward.frames.len()
    }

    pub fn projected(&self) -> &ProjectedTracks {
        &self.forward.tracks
    }

    /// Forward flow field of frame `t`.
    pub fn flow_field(&self, t: usize) -> Result<&FlowField> {
        self.forward.flows.get(t).ok_or(Error::FrameOutOfRange {
            t,
            limit: self.forward.flows.len(),
        })
    }

    pub fn select_anchors(&self, query: &Query) -> Result<Vec<usize>> {
        query.validate(self.k(), &self.camera)?;
        Ok(top_k(&self.forward.frames[query.t].visibility_at(query.p), self.config.top_k))
    }

    pub fn anchor_state(&self, anchors: &[usize], p: Vec2, t: usize) -> Result<(f64, Vec<f64>)> {
        let frame = self.forward.frames.get(t).ok_or(Error::FrameOutOfRange { t, limit: self.k() })?;
        check_anchors(anchors, frame.gaussian_count())?;
        Ok(anchor_state_in(frame, anchors, p, self.config.eps))
    }

    pub fn step(&self, anchors: &[usize], p: Vec2, t: usize) -> Result<StepOutcome> {
        if t + 1 >= self.k() {
            return Err(Error::FrameOutOfRange {
                t,
                limit: self.k().saturating_sub(1),
            });
        }
        check_anchors(anchors, self.forward.frames[t].gaussian_count())?;
        Ok(self.forward.advance(anchors, p, t, &self.camera, &self.config, None))
    }

    pub fn track(&self, query: &Query) -> Result<Track> {
        let anchors = self.select_anchors(query)?;
        let k = self.k();
        let mut points = vec![[0.0; 2]; k];
        let mut visible = vec![false; k];
        let (cam, cfg) = (&self.camera, &self.config);
        self.forward.run(&anchors, query.t, query.p, cam, cfg, |t, p, v| {
            points[t] = p;
            visible[t] = v;
        });
        self.backward.run(&anchors, k - 1 - query.t, query.p, cam, cfg, |t, p, v| {
            let t = k - 1 - t;
            if t != query.t {
                points[t] = p;
                visible[t] = v;
            }
        });
        Ok(Track {
            query: *query,
            points,
            visible,
            anchor_set: anchors,
        })
    }

    /// Tracks every query, in parallel with the `std` feature.
    pub fn track_all(&self, queries: &[Query]) -> Result<Vec<Track>> {
        #[cfg(feature = "std")]
        {
            use rayon::prelude::*;
            queries.par_iter().map(|q| self.track(q)).collect()
        }
        #[cfg(not(feature = "std"))]
        queries.iter().map(|q| self.track(q)).collect()
    }
}
