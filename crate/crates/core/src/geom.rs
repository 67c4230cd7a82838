//! Gaussian primitives, the pinhole camera, and trajectory integration.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{
    add3, det3, is_finite3, mul3, mul3_vec, norm4, sandwich23, transpose3, Mat2, Mat23, Mat3, Quat,
    Vec2, Vec3, IDENTITY3,
};

/// Camera-frame depth below which a point counts as behind the camera.
pub const Z_NEAR: f64 = 1e-4;

/// Isotropic floor added to every projected covariance, in px².
pub const LOW_PASS: f64 = 0.3;

const UNIT_TOL: f64 = 1e-6;

/// One splat primitive: mean, per-axis scale, orientation, color, opacity.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Gaussian {
    #[cfg_attr(feature = "serde", serde(rename = "mu"))]
    pub mean: Vec3,
    #[cfg_attr(feature = "serde", serde(rename = "s"))]
    pub scale: Vec3,
    /// Unit quaternion `(w, x, y, z)`.
    #[cfg_attr(feature = "serde", serde(rename = "phi"))]
    pub rotation: Quat,
    #[cfg_attr(feature = "serde", serde(rename = "r"))]
    pub color: Vec3,
    #[cfg_attr(feature = "serde", serde(rename = "o"))]
    pub opacity: f64,
}

impl Gaussian {
    /// Builds a Gaussian, normalizing the quaternion and checking every range.
    pub fn new(mean: Vec3, scale: Vec3, rotation: Quat, color: Vec3, opacity: f64) -> Result<Self> {
        let rotation = normalize_quat(rotation)?;
        let g = Gaussian {
            mean,
            scale,
            rotation,
            color,
            opacity,
        };
        g.validate()?;
        Ok(g)
    }

    /// Isotropic, axis-aligned Gaussian.
    pub fn isotropic(mean: Vec3, scale: f64, color: Vec3, opacity: f64) -> Result<Self> {
        Self::new(mean, [scale; 3], [1.0, 0.0, 0.0, 0.0], color, opacity)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite3(self.mean) {
            return Err(Error::invalid("mean", "non-finite component"));
        }
        for (axis, &value) in self.scale.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveScale { axis, value });
            }
        }
        let norm = norm4(self.rotation);
        if !((norm - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::invalid("rotation", alloc::format!("quaternion norm {norm} is not 1")));
        }
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::invalid("color", "components must lie in [0, 1]"));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::invalid("opacity", alloc::format!("{} is outside (0, 1)", self.opacity)));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Result<Mat3> {
        covariance3d(self.scale, self.rotation)
    }
}

/// Per-frame residual on a Gaussian's mean and color.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianDelta {
    #[cfg_attr(feature = "serde", serde(rename = "dmu"))]
    pub mean: Vec3,
    #[cfg_attr(feature = "serde", serde(rename = "dr"))]
    pub color: Vec3,
}

impl GaussianDelta {
    pub const ZERO: GaussianDelta = GaussianDelta {
        mean: [0.0; 3],
        color: [0.0; 3],
    };

    pub fn is_finite(&self) -> bool {
        is_finite3(self.mean) && is_finite3(self.color)
    }
}

/// First-frame Gaussians plus `(k - 1)` rows of per-Gaussian residuals.
///
/// Row `t - 1` of `deltas` produces frame `t` from frame `t - 1`. Column `i`
/// is Gaussian `i` in every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTrajectory {
    g0: Vec<Gaussian>,
    deltas: Vec<Vec<GaussianDelta>>,
}

impl GaussianTrajectory {
    pub fn new(g0: Vec<Gaussian>, deltas: Vec<Vec<GaussianDelta>>) -> Result<Self> {
        if g0.is_empty() {
            return Err(Error::Empty("first-frame Gaussian list"));
        }
        for g in &g0 {
            g.validate()?;
        }
        let n = g0.len();
        for row in &deltas {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "delta row length",
                    expected: n,
                    found: row.len(),
                });
            }
            if !row.iter().all(GaussianDelta::is_finite) {
                return Err(Error::invalid("delta", "non-finite residual"));
            }
        }
        Ok(GaussianTrajectory { g0, deltas })
    }

    /// A trajectory whose Gaussians never move or change color.
    pub fn stationary(g0: Vec<Gaussian>, k: usize) -> Result<Self> {
        let n = g0.len();
        let rows = k.saturating_sub(1);
        Self::new(g0, alloc::vec![alloc::vec![GaussianDelta::ZERO; n]; rows])
    }

    /// Frame count.
    pub fn k(&self) -> usize {
        self.deltas.len() + 1
    }

    /// Gaussian count.
    pub fn n(&self) -> usize {
        self.g0.len()
    }

    pub fn g0(&self) -> &[Gaussian] {
        &self.g0
    }

    pub fn deltas(&self) -> &[Vec<GaussianDelta>] {
        &self.deltas
    }

    /// Residual row producing frame `t` (`1 <= t < k`).
    pub fn delta_row(&self, t: usize) -> &[GaussianDelta] {
        &self.deltas[t - 1]
    }

    pub fn into_parts(self) -> (Vec<Gaussian>, Vec<Vec<GaussianDelta>>) {
        (self.g0, self.deltas)
    }

    /// Materializes every frame; see [`integrate_deltas`].
    pub fn frames(&self) -> Vec<Vec<Gaussian>> {
        integrate_deltas(self)
    }
}

/// Integrates residuals frame by frame.
///
/// Means accumulate without bound; colors are clamped to `[0, 1]` after each
/// step. Scale, rotation and opacity are shared by all frames.
pub fn integrate_deltas(traj: &GaussianTrajectory) -> Vec<Vec<Gaussian>> {
    let mut frames = Vec::with_capacity(traj.k());
    let mut current = traj.g0.clone();
    for row in &traj.deltas {
        let next = current
            .iter()
            .zip(row)
            .map(|(g, d)| Gaussian {
                mean: add3(g.mean, d.mean),
                color: clamp_color(add3(g.color, d.color)),
                ..*g
            })
            .collect();
        frames.push(core::mem::replace(&mut current, next));
    }
    frames.push(current);
    frames
}

pub(crate) fn clamp_color(c: Vec3) -> Vec3 {
    [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)]
}

pub(crate) fn normalize_quat(q: Quat) -> Result<Quat> {
    let norm = norm4(q);
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::DegenerateQuaternion { norm });
    }
    Ok([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm])
}

/// Rotation matrix of a (re-normalized) quaternion `(w, x, y, z)`.
pub fn quat_to_rotation(q: Quat) -> Result<Mat3> {
    let [w, x, y, z] = normalize_quat(q)?;
    Ok([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// `R diag(s)² Rᵀ`.
pub fn covariance3d(scale: Vec3, rotation: Quat) -> Result<Mat3> {
    for (axis, &value) in scale.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveScale { axis, value });
        }
    }
    let r = quat_to_rotation(rotation)?;
    Ok(rot_scale_cov(&r, scale))
}

pub(crate) fn rot_scale_cov(r: &Mat3, scale: Vec3) -> Mat3 {
    let sq = [scale[0] * scale[0], scale[1] * scale[1], scale[2] * scale[2]];
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = r[i][0] * sq[0] * r[j][0] + r[i][1] * sq[1] * r[j][1] + r[i][2] * sq[2] * r[j][2];
        }
    }
    out
}

/// Pinhole camera with rigid extrinsics (world → camera: `rotation · p + translation`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Static identity-pose camera with `f = max(width, height)` and the
    /// principal point at the image center.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = width.max(height) as f64;
        Camera {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation: IDENTITY3,
            translation: [0.0; 3],
            width,
            height,
        }
    }

    /// Identity pose with explicit intrinsics.
    pub fn with_intrinsics(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(fx, fy, cx, cy, IDENTITY3, [0.0; 3], width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::invalid("focal length", "fx and fy must be positive"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && is_finite3(self.translation)) {
            return Err(Error::invalid("camera", "non-finite principal point or translation"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size", "width and height must be non-zero"));
        }
        let rrt = mul3(&self.rotation, &transpose3(&self.rotation));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                if !((rrt[i][j] - want).abs() <= UNIT_TOL) {
                    return Err(Error::invalid("rotation", "camera rotation is not orthonormal"));
                }
            }
        }
        if !((det3(&self.rotation) - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::invalid("rotation", "camera rotation must have determinant +1"));
        }
        Ok(())
    }

    pub fn to_camera_frame(&self, p: Vec3) -> Vec3 {
        add3(mul3_vec(&self.rotation, p), self.translation)
    }

    /// Inverse of [`Camera::to_camera_frame`].
    pub fn to_world_frame(&self, pc: Vec3) -> Vec3 {
        crate::math::mul3t_vec(&self.rotation, crate::math::sub3(pc, self.translation))
    }

    /// Camera-frame point at `depth` that projects to pixel `(u, v)`.
    pub fn unproject(&self, pixel: Vec2, depth: f64) -> Vec3 {
        let pc = [
            (pixel[0] - self.cx) / self.fx * depth,
            (pixel[1] - self.cy) / self.fy * depth,
            depth,
        ];
        self.to_world_frame(pc)
    }

    /// Whether `p` lies in `[0, width) × [0, height)`.
    pub fn contains(&self, p: Vec2) -> bool {
        p[0] >= 0.0 && p[0] < self.width as f64 && p[1] >= 0.0 && p[1] < self.height as f64
    }

    /// Jacobian of the pinhole map at camera-frame point `pc`.
    pub(crate) fn jacobian(&self, pc: Vec3) -> Mat23 {
        let inv_z = 1.0 / pc[2];
        let inv_z2 = inv_z * inv_z;
        [
            [self.fx * inv_z, 0.0, -self.fx * pc[0] * inv_z2],
            [0.0, self.fy * inv_z, -self.fy * pc[1] * inv_z2],
        ]
    }

    pub(crate) fn project_camera_point(&self, pc: Vec3) -> Vec2 {
        [self.fx * pc[0] / pc[2] + self.cx, self.fy * pc[1] / pc[2] + self.cy]
    }
}

/// Projects a world point to pixel coordinates; returns the pixel and the
/// camera-frame depth. Does not clip to the image.
pub fn project_point(camera: &Camera, mu: Vec3) -> Result<(Vec2, f64)> {
    let pc = camera.to_camera_frame(mu);
    if !(pc[2] > Z_NEAR) {
        return Err(Error::BehindCamera { depth: pc[2] });
    }
    Ok((camera.project_camera_point(pc), pc[2]))
}

/// Image-plane covariance `J W Σ Wᵀ Jᵀ + λ I` of a Gaussian at `mu`.
pub fn project_covariance(camera: &Camera, mu: Vec3, sigma: &Mat3) -> Result<Mat2> {
    let pc = camera.to_camera_frame(mu);
    if !(pc[2] > Z_NEAR) {
        return Err(Error::BehindCamera { depth: pc[2] });
    }
    let w = &camera.rotation;
    let cam_cov = mul3(&mul3(w, sigma), &transpose3(w));
    let mut cov = sandwich23(&camera.jacobian(pc), &cam_cov);
    cov[0][0] += LOW_PASS;
    cov[1][1] += LOW_PASS;
    Ok(cov)
}
