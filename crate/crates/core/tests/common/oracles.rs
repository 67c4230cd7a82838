//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use splatrack_core::eval::{EvalConfig, GroundTruthTrack};
use splatrack_core::math::Vec2;
use splatrack_core::params::{FlatParams, Layout};
use splatrack_core::splat::{render_loss_and_gradients, render_rgb};
use splatrack_core::track::{render_flow_field, Query, Track, TrackerConfig};
use splatrack_core::{Camera, Gaussian, GaussianDelta, GaussianTrajectory, Image, RasterConfig, Video};

use super::{random_image, random_trajectory, rng};

/// The footprint cutoff and the α floor make the loss piecewise smooth with
/// jumps on measure-zero sets; finite differences straddling a jump are
/// meaningless, so the check runs on the smooth renderer.
pub fn smooth_config() -> RasterConfig {
    RasterConfig {
        cutoff_sigma: 1e3,
        alpha_min: 0.0,
        ..RasterConfig::default()
    }
}

pub fn mse(traj: &GaussianTrajectory, cam: &Camera, target: &[Image], cfg: &RasterConfig) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (frame, truth) in traj.frames().iter().zip(target) {
        let img = render_rgb(frame, cam, cfg).unwrap();
        for (a, b) in img.data().iter().zip(truth.data()) {
            sum += (a - b) * (a - b);
        }
        count += img.data().len();
    }
    sum / count as f64
}

pub struct Mismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Every flat gradient component whose finite-difference estimate disagrees.
pub fn fd_mismatches(seed: u64, n: usize, k: usize, size: usize) -> (usize, Vec<Mismatch>) {
    let mut r = rng(seed);
    let cam = Camera::default_for(size, size);
    let traj = random_trajectory(&mut r, &cam, n, k);
    let frames: Vec<Image> = (0..k).map(|_| random_image(&mut r, size, size)).collect();
    let cfg = smooth_config();
    let video = Video::new(frames.clone()).unwrap();

    let base = FlatParams::from_trajectory(&traj);
    let traj = base.to_trajectory().unwrap();
    let (_, grad) = render_loss_and_gradients(&traj, &cam, &video, &cfg).unwrap();
    let analytic = grad.to_flat();
    assert_eq!(analytic.len(), Layout { k, n }.len());

    let h = 1e-4;
    let mut bad = Vec::new();
    for i in 0..analytic.len() {
        let mut plus = base.clone();
        plus.values_mut()[i] += h;
        let mut minus = base.clone();
        minus.values_mut()[i] -= h;
        let fp = mse(&plus.to_trajectory().unwrap(), &cam, &frames, &cfg);
        let fm = mse(&minus.to_trajectory().unwrap(), &cam, &frames, &cfg);
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let abs_err = (a - numeric).abs();
        let rel_err = abs_err / a.abs().max(numeric.abs());
        if !(abs_err <= 1e-6 || rel_err <= 1e-3) {
            bad.push(Mismatch {
                index: i,
                analytic: a,
                numeric,
            });
        }
    }
    (analytic.len(), bad)
}

/// Independent bilinear lookup with zero padding.
pub fn bilinear(img: &Image, p: Vec2) -> Vec2 {
    let (x0, y0) = (p[0].floor(), p[1].floor());
    let (fx, fy) = (p[0] - x0, p[1] - y0);
    let mut out = [0.0; 2];
    for (dx, dy, w) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        let (x, y) = (x0 as i64 + dx, y0 as i64 + dy);
        if w == 0.0 || x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
            continue;
        }
        out[0] += w * img.get(x as usize, y as usize, 0);
        out[1] += w * img.get(x as usize, y as usize, 1);
    }
    out
}

/// Same trajectory played backwards: last frame first, negated deltas.
pub fn reversed(traj: &GaussianTrajectory) -> GaussianTrajectory {
    let last = traj.frames().pop().unwrap();
    let deltas = traj
        .deltas()
        .iter()
        .rev()
        .map(|row| {
            row.iter()
                .map(|d| GaussianDelta {
                    mean: d.mean.map(|v| -v),
                    color: d.color.map(|v| -v),
                })
                .collect()
        })
        .collect();
    GaussianTrajectory::new(last, deltas).unwrap()
}

pub fn advect(traj: &GaussianTrajectory, cam: &Camera, cfg: &TrackerConfig, t0: usize, p0: Vec2) -> Vec<Vec2> {
    let mut p = p0;
    let mut out = vec![p];
    for t in t0..traj.k() - 1 {
        let f = render_flow_field(traj, cam, t, cfg).unwrap();
        let d = bilinear(&f.grid, p);
        p = [p[0] + d[0], p[1] + d[1]];
        out.push(p);
    }
    out
}

/// Pure flow advection in both directions from the query frame.
pub fn advection_reference(traj: &GaussianTrajectory, cam: &Camera, cfg: &TrackerConfig, q: &Query) -> Vec<Vec2> {
    let k = traj.k();
    let fwd = advect(traj, cam, cfg, q.t, q.p);
    let bwd = advect(&reversed(traj), cam, cfg, k - 1 - q.t, q.p);
    (0..k)
        .map(|t| if t >= q.t { fwd[t - q.t] } else { bwd[(k - 1 - t) - (k - 1 - q.t)] })
        .collect()
}

/// Three Gaussians stacked on pixel (8, 8) with composited weights
/// 0.5, 0.3 and 0.1 there, each moving by its own pixel offset.
pub fn stacked() -> (GaussianTrajectory, Camera, [Vec2; 3]) {
    let cam = Camera::default_for(16, 16);
    let offsets = [[1.0, 0.0], [0.0, 2.0], [-3.0, 1.0]];
    let spec = [(1.0, 0.5), (2.0, 0.6), (3.0, 0.5)];
    let mut g0 = Vec::new();
    let mut row = Vec::new();
    for ((z, o), d) in spec.iter().zip(&offsets) {
        g0.push(Gaussian::isotropic(cam.unproject([8.0, 8.0], *z), z / cam.fx, [0.5; 3], *o).unwrap());
        row.push(GaussianDelta {
            mean: [d[0] * z / cam.fx, d[1] * z / cam.fx, 0.0],
            color: [0.0; 3],
        });
    }
    (GaussianTrajectory::new(g0, vec![row]).unwrap(), cam, offsets)
}

pub fn random_pair(rng: &mut ChaCha8Rng) -> (Track, GroundTruthTrack) {
    let k = rng.gen_range(2..24);
    let gt_points: Vec<[f64; 2]> = (0..k).map(|_| [rng.gen_range(0.0..256.0), rng.gen_range(0.0..256.0)]).collect();
    let gt_visible: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.7)).collect();
    let points = gt_points
        .iter()
        .map(|p| {
            let r = 10f64.powf(rng.gen_range(-1.5..1.7));
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            [p[0] + r * a.cos(), p[1] + r * a.sin()]
        })
        .collect();
    let visible = gt_visible.iter().map(|&v| if rng.gen_bool(0.2) { !v } else { v }).collect();
    let t = rng.gen_range(0..k);
    let track = Track {
        query: Query::new(t, gt_points[t]),
        points,
        visible,
        anchor_set: vec![0],
    };
    (track, GroundTruthTrack::new(gt_points, gt_visible).unwrap())
}

pub fn dist(cfg: &EvalConfig, a: [f64; 2], b: [f64; 2]) -> f64 {
    let sx = cfg.eval_resolution.0 as f64 / cfg.frame_size.0 as f64;
    let sy = cfg.eval_resolution.1 as f64 / cfg.frame_size.1 as f64;
    (((a[0] - b[0]) * sx).powi(2) + ((a[1] - b[1]) * sy).powi(2)).sqrt()
}

pub fn frames(pred: &Track) -> impl Iterator<Item = usize> + '_ {
    (0..pred.points.len()).filter(move |&t| t != pred.query.t)
}

pub fn oracle_delta(pred: &Track, gt: &GroundTruthTrack, cfg: &EvalConfig) -> Option<f64> {
    let visible: BTreeSet<usize> = frames(pred).filter(|&t| gt.visible[t]).collect();
    if visible.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &thr in &cfg.thresholds {
        let within: BTreeSet<usize> =
            visible.iter().copied().filter(|&t| dist(cfg, pred.points[t], gt.points[t]) <= thr).collect();
        sum += within.len() as f64 / visible.len() as f64;
    }
    Some(sum / cfg.thresholds.len() as f64)
}

pub fn oracle_jaccard(pred: &Track, gt: &GroundTruthTrack, cfg: &EvalConfig) -> Option<f64> {
    let mut sum = 0.0;
    for &thr in &cfg.thresholds {
        let close: BTreeSet<usize> = frames(pred).filter(|&t| dist(cfg, pred.points[t], gt.points[t]) <= thr).collect();
        let gt_vis: BTreeSet<usize> = frames(pred).filter(|&t| gt.visible[t]).collect();
        let pred_vis: BTreeSet<usize> = frames(pred).filter(|&t| pred.visible[t]).collect();
        let tp: BTreeSet<usize> = gt_vis.intersection(&pred_vis).copied().filter(|t| close.contains(t)).collect();
        let fp: BTreeSet<usize> = pred_vis.iter().copied().filter(|t| !gt_vis.contains(t) || !close.contains(t)).collect();
        let fn_: BTreeSet<usize> = gt_vis.iter().copied().filter(|t| !pred_vis.contains(t) || !close.contains(t)).collect();
        let total = tp.len() + fp.len() + fn_.len();
        if total == 0 {
            return None;
        }
        sum += tp.len() as f64 / total as f64;
    }
    Some(sum / cfg.thresholds.len() as f64)
}

pub fn oracle_oa(pred: &Track, gt: &GroundTruthTrack) -> Option<f64> {
    let all: Vec<usize> = frames(pred).collect();
    if all.is_empty() {
        return None;
    }
    Some(all.iter().filter(|&&t| pred.visible[t] == gt.visible[t]).count() as f64 / all.len() as f64)
}

