//! Reverse-mode gradients of the per-pixel MSE rendering loss.
//!
//! Each pixel is swept twice in depth order: the first sweep recomputes the
//! composited color, the second walks the same samples again and turns
//! `∂L/∂C` into per-splat gradients on the 2-D center, conic, opacity and
//! color. Per-row partial sums are reduced in row order so the result does
//! not depend on how rows are scheduled. Those 2-D gradients are then pushed
//! through the covariance projection, the quaternion, the
//! reparameterizations and finally the residual integration.

use alloc::vec;
use alloc::vec::Vec;

use super::{ProjectedFrame, RasterConfig, Splat};
use crate::error::{Error, Result};
use crate::geom::{Camera, Gaussian, GaussianTrajectory};
use crate::image::{Image, Video};
use crate::math::{add3, mul3, mul3t_vec, sandwich23_t, transpose3, Mat2, Mat3, Quat, Vec3};
use crate::params::TrajectoryGradient;

/// Per-splat 2-D gradient: center (2), conic a/b/c (3), opacity, color (3).
type SplatGrad = [f64; 9];

/// Gradient w.r.t. one frame's Gaussian in constrained coordinates (the
/// quaternion entry is already projected onto the tangent of the unit sphere).
#[derive(Debug, Clone, Copy, Default)]
struct FrameGrad {
    mean: Vec3,
    scale: Vec3,
    quat: Quat,
    opacity: f64,
    color: Vec3,
}

/// Mean squared error between the RGB render of every frame and `target`,
/// and its gradient with respect to every free parameter of `traj`.
pub fn render_loss_and_gradients(
    traj: &GaussianTrajectory,
    camera: &Camera,
    target: &Video,
    config: &RasterConfig,
) -> Result<(f64, TrajectoryGradient)> {
    if target.len() != traj.k() {
        return Err(Error::DimensionMismatch {
            what: "target frame count",
            expected: traj.k(),
            found: target.len(),
        });
    }
    if target.width() != camera.width || target.height() != camera.height {
        return Err(Error::invalid("target video", "frame size differs from the camera image size"));
    }
    let (k, n) = (traj.k(), traj.n());
    let count = (k * camera.width * camera.height * 3) as f64;
    let frames = traj.frames();
    let mut sq_err = 0.0;
    let mut frame_grads = Vec::with_capacity(k);
    for (frame, image) in frames.iter().zip(target.frames()) {
        let (err, grads) = frame_backward(frame, camera, image, config, 2.0 / count)?;
        sq_err += err;
        frame_grads.push(grads);
    }
    Ok((sq_err / count, chain_trajectory(traj, &frame_grads, k, n)))
}

fn frame_backward(
    gaussians: &[Gaussian],
    camera: &Camera,
    target: &Image,
    config: &RasterConfig,
    grad_scale: f64,
) -> Result<(f64, Vec<FrameGrad>)> {
    let frame = ProjectedFrame::new(gaussians, camera, config)?;
    let background = config.background_for(3)?;
    let colors: Vec<f64> = gaussians.iter().flat_map(|g| g.color).collect();
    let sweep = |y: usize| row_backward(&frame, y, &colors, &background, target, grad_scale);

    #[cfg(feature = "std")]
    let rows: Vec<(f64, Vec<SplatGrad>)> = if config.parallel {
        use rayon::prelude::*;
        (0..frame.height).into_par_iter().map(sweep).collect()
    } else {
        (0..frame.height).map(sweep).collect()
    };
    #[cfg(not(feature = "std"))]
    let rows: Vec<(f64, Vec<SplatGrad>)> = (0..frame.height).map(sweep).collect();

    let mut splat_grads = vec![[0.0; 9]; frame.splats().len()];
    let mut sq_err = 0.0;
    for (y, (err, partial)) in rows.iter().enumerate() {
        sq_err += err;
        for (&pos, g) in frame.row(y).iter().zip(partial) {
            let acc = &mut splat_grads[pos as usize];
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }

    let mut grads = vec![FrameGrad::default(); gaussians.len()];
    for (splat, g) in frame.splats().iter().zip(&splat_grads) {
        grads[splat.index] = backprop_splat(splat, g, camera);
    }
    Ok((sq_err, grads))
}

fn row_backward(
    frame: &ProjectedFrame,
    y: usize,
    colors: &[f64],
    background: &[f64],
    target: &Image,
    grad_scale: f64,
) -> (f64, Vec<SplatGrad>) {
    let row = frame.row(y);
    let splats = frame.splats();
    let mut partial = vec![[0.0; 9]; row.len()];
    let mut sq_err = 0.0;
    let py = y as f64;
    for x in 0..frame.width {
        let px = x as f64;

        let mut rendered = [0.0; 3];
        let mut transmittance = 1.0;
        for &pos in row {
            let s = &splats[pos as usize];
            if let Some(sample) = frame.sample(s, px, py) {
                let w = sample.alpha * transmittance;
                let c = &colors[3 * s.index..3 * s.index + 3];
                for ch in 0..3 {
                    rendered[ch] += w * c[ch];
                }
                transmittance *= 1.0 - sample.alpha;
            }
        }
        let mut d_color = [0.0; 3];
        let truth = target.pixel(x, y);
        for ch in 0..3 {
            rendered[ch] += transmittance * background[ch];
            let e = rendered[ch] - truth[ch];
            sq_err += e * e;
            d_color[ch] = grad_scale * e;
        }
        let total = rendered[0] * d_color[0] + rendered[1] * d_color[1] + rendered[2] * d_color[2];

        // Second sweep: `ahead` is Σ_{j ≤ i} wⱼ (cⱼ · ∂L/∂C), so `total - ahead`
        // is everything composited behind sample i, background included.
        let mut transmittance = 1.0;
        let mut ahead = 0.0;
        for (slot, &pos) in row.iter().enumerate() {
            let s = &splats[pos as usize];
            let Some(sample) = frame.sample(s, px, py) else {
                continue;
            };
            let alpha = sample.alpha;
            let w = alpha * transmittance;
            let c = &colors[3 * s.index..3 * s.index + 3];
            let cg = c[0] * d_color[0] + c[1] * d_color[1] + c[2] * d_color[2];
            ahead += w * cg;
            let d_alpha = transmittance * cg - (total - ahead) / (1.0 - alpha);
            transmittance *= 1.0 - alpha;

            let g = &mut partial[slot];
            g[6] += w * d_color[0];
            g[7] += w * d_color[1];
            g[8] += w * d_color[2];
            if sample.clamped {
                continue;
            }
            g[5] += d_alpha * sample.gauss;
            // α = o·exp(-q/2), q = a dx² + 2b dx dy + c dy²
            let d_q = -0.5 * alpha * d_alpha;
            let (dx, dy) = (sample.dx, sample.dy);
            let [a, b, cc] = s.conic;
            g[0] -= d_q * 2.0 * (a * dx + b * dy);
            g[1] -= d_q * 2.0 * (b * dx + cc * dy);
            g[2] += d_q * dx * dx;
            g[3] += d_q * 2.0 * dx * dy;
            g[4] += d_q * dy * dy;
        }
    }
    (sq_err, partial)
}

fn backprop_splat(s: &Splat, g: &SplatGrad, camera: &Camera) -> FrameGrad {
    // conic = Σ₂D⁻¹ with Σ₂D = [[p, r], [r, q]]
    let (p, r, q) = (s.cov2d[0][0], s.cov2d[0][1], s.cov2d[1][1]);
    let det = p * q - r * r;
    let inv_det2 = 1.0 / (det * det);
    let (da, db, dc) = (g[2], g[3], g[4]);
    let d_p = (-q * q * da + r * q * db - r * r * dc) * inv_det2;
    let d_q = (-r * r * da + r * p * db - p * p * dc) * inv_det2;
    let d_r = (2.0 * q * r * da - (det + 2.0 * r * r) * db + 2.0 * p * r * dc) * inv_det2;
    let g_cov2d: Mat2 = [[d_p, 0.5 * d_r], [0.5 * d_r, d_q]];

    // Σ₂D = J M Jᵀ + λI,  M = W Σ Wᵀ
    let jac = &s.jacobian;
    let g_cam_cov = sandwich23_t(jac, &g_cov2d);
    let mut g_jac = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..3 {
                    acc += g_cov2d[i][a] * jac[a][b] * s.cam_cov[b][j];
                }
            }
            g_jac[i][j] = 2.0 * acc;
        }
    }
    let w = &camera.rotation;
    let g_cov3 = mul3(&mul3(&transpose3(w), &g_cam_cov), w);

    // Σ = R D Rᵀ with D = diag(s²)
    let rot = &s.rotation;
    let m = mul3(&mul3(&transpose3(rot), &g_cov3), rot);
    let sq = s.scale.map(|v| v * v);
    let scale = [
        2.0 * s.scale[0] * m[0][0],
        2.0 * s.scale[1] * m[1][1],
        2.0 * s.scale[2] * m[2][2],
    ];
    let mut g_rot: Mat3 = [[0.0; 3]; 3];
    let g3r = mul3(&g_cov3, rot);
    for i in 0..3 {
        for j in 0..3 {
            g_rot[i][j] = 2.0 * g3r[i][j] * sq[j];
        }
    }
    let quat = quat_gradient(s.quat, &g_rot);

    // center = π(pc), J = ∂π/∂pc
    let [x, y, z] = s.cam_point;
    let (fx, fy) = (camera.fx, camera.fy);
    let inv_z2 = 1.0 / (z * z);
    let inv_z3 = inv_z2 / z;
    let mut g_pc = [
        jac[0][0] * g[0] + jac[1][0] * g[1],
        jac[0][1] * g[0] + jac[1][1] * g[1],
        jac[0][2] * g[0] + jac[1][2] * g[1],
    ];
    g_pc[0] += -fx * inv_z2 * g_jac[0][2];
    g_pc[1] += -fy * inv_z2 * g_jac[1][2];
    g_pc[2] += -fx * inv_z2 * g_jac[0][0] + 2.0 * fx * x * inv_z3 * g_jac[0][2] - fy * inv_z2 * g_jac[1][1]
        + 2.0 * fy * y * inv_z3 * g_jac[1][2];

    FrameGrad {
        mean: mul3t_vec(w, g_pc),
        scale,
        quat,
        opacity: g[5],
        color: [g[6], g[7], g[8]],
    }
}

/// Pulls `∂L/∂R` back to the raw quaternion at the unit point `q`.
fn quat_gradient(q: Quat, g: &Mat3) -> Quat {
    let [w, x, y, z] = q;
    let dw = 2.0 * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let dx = 2.0 * (y * g[0][1] + z * g[0][2] + y * g[1][0] - 2.0 * x * g[1][1] - w * g[1][2] + z * g[2][0]
        + w * g[2][1]
        - 2.0 * x * g[2][2]);
    let dy = 2.0 * (-2.0 * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0]
        + z * g[2][1]
        - 2.0 * y * g[2][2]);
    let dz = 2.0 * (-2.0 * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - 2.0 * z * g[1][1]
        + y * g[1][2]
        + x * g[2][0]
        + y * g[2][1]);
    let d = [dw, dx, dy, dz];
    let radial = d[0] * w + d[1] * x + d[2] * y + d[3] * z;
    [d[0] - radial * w, d[1] - radial * x, d[2] - radial * y, d[3] - radial * z]
}

fn chain_trajectory(traj: &GaussianTrajectory, frames: &[Vec<FrameGrad>], k: usize, n: usize) -> TrajectoryGradient {
    let mut out = TrajectoryGradient::zeros(k, n);
    let g0 = traj.g0();

    // Which color components passed through the clamp unchanged at each step.
    let mut passes = vec![vec![[true; 3]; n]; k];
    let mut color: Vec<Vec3> = g0.iter().map(|g| g.color).collect();
    for t in 1..k {
        for (i, d) in traj.delta_row(t).iter().enumerate() {
            let raw = add3(color[i], d.color);
            for c in 0..3 {
                passes[t][i][c] = (0.0..=1.0).contains(&raw[c]);
            }
            color[i] = crate::geom::clamp_color(raw);
        }
    }

    for i in 0..n {
        let mut mean_acc = [0.0; 3];
        let mut color_carry = [0.0; 3];
        for t in (1..k).rev() {
            let fg = &frames[t][i];
            mean_acc = add3(mean_acc, fg.mean);
            let delta = &mut out.deltas[t - 1][i];
            delta.mean = mean_acc;
            for c in 0..3 {
                let total = fg.color[c] + color_carry[c];
                let through = if passes[t][i][c] { total } else { 0.0 };
                delta.color[c] = through;
                color_carry[c] = through;
            }
        }
        let fg0 = &frames[0][i];
        let g = &g0[i];
        let entry = &mut out.g0[i];
        entry.mean = add3(mean_acc, fg0.mean);
        let mut scale = [0.0; 3];
        let mut quat = [0.0; 4];
        let mut opacity = 0.0;
        for frame in frames {
            let fg = &frame[i];
            scale = add3(scale, fg.scale);
            for c in 0..4 {
                quat[c] += fg.quat[c];
            }
            opacity += fg.opacity;
        }
        entry.log_scale = [scale[0] * g.scale[0], scale[1] * g.scale[1], scale[2] * g.scale[2]];
        entry.quaternion = quat;
        entry.opacity_logit = opacity * g.opacity * (1.0 - g.opacity);
        for c in 0..3 {
            let r = g.color[c];
            entry.color_logit[c] = (fg0.color[c] + color_carry[c]) * r * (1.0 - r);
        }
    }
    out
}
