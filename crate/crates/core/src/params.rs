//! Unconstrained optimization coordinates for a trajectory.
//!
//! The optimizer works on a flat vector split into seven contiguous groups:
//!
//! | group        | per item | mapping to the trajectory            |
//! |--------------|----------|--------------------------------------|
//! | means        | 3 × n    | raw                                  |
//! | scales       | 3 × n    | `s = exp(s̃)`                        |
//! | quaternions  | 4 × n    | `φ = q / ‖q‖`                        |
//! | colors       | 3 × n    | `r = logistic(r̃)` (first frame only) |
//! | opacities    | 1 × n    | `o = logistic(õ)`                    |
//! | delta-means  | 3 × n × (k-1) | raw                             |
//! | delta-colors | 3 × n × (k-1) | raw                             |

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::Result;
use crate::geom::{Gaussian, GaussianDelta, GaussianTrajectory};
use crate::math::{exp, ln, logistic, logit, Quat, Vec3};

/// Logit bound keeping opacities strictly inside (0, 1) in `f64`.
pub const LOGIT_BOUND: f64 = 30.0;
/// Log-scale bound keeping scales finite and positive.
pub const LOG_SCALE_BOUND: f64 = 30.0;
/// Colors are pulled this far inside [0, 1] before taking the logit.
pub const COLOR_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Means,
    Scales,
    Quaternions,
    Colors,
    Opacities,
    DeltaMeans,
    DeltaColors,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::Means,
        ParamGroup::Scales,
        ParamGroup::Quaternions,
        ParamGroup::Colors,
        ParamGroup::Opacities,
        ParamGroup::DeltaMeans,
        ParamGroup::DeltaColors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Means => "means",
            ParamGroup::Scales => "scales",
            ParamGroup::Quaternions => "quaternions",
            ParamGroup::Colors => "colors",
            ParamGroup::Opacities => "opacities",
            ParamGroup::DeltaMeans => "delta-means",
            ParamGroup::DeltaColors => "delta-colors",
        }
    }

    fn width(self) -> usize {
        match self {
            ParamGroup::Quaternions => 4,
            ParamGroup::Opacities => 1,
            _ => 3,
        }
    }

    fn per_frame(self) -> bool {
        matches!(self, ParamGroup::DeltaMeans | ParamGroup::DeltaColors)
    }
}

/// Sizes of a `k`-frame, `n`-Gaussian parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub n: usize,
}

impl Layout {
    pub fn group_len(&self, group: ParamGroup) -> usize {
        let rows = if group.per_frame() { self.k - 1 } else { 1 };
        rows * self.n * group.width()
    }

    pub fn range(&self, group: ParamGroup) -> Range<usize> {
        let mut start = 0;
        for g in ParamGroup::ALL {
            let len = self.group_len(g);
            if g == group {
                return start..start + len;
            }
            start += len;
        }
        unreachable!()
    }

    pub fn len(&self) -> usize {
        ParamGroup::ALL.iter().map(|&g| self.group_len(g)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Group owning flat index `i`.
    pub fn group_of(&self, i: usize) -> ParamGroup {
        ParamGroup::ALL
            .into_iter()
            .find(|&g| self.range(g).contains(&i))
            .expect("index out of range")
    }
}

/// Gradient of a scalar loss with respect to one first-frame Gaussian in
/// unconstrained coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianGradient {
    pub mean: Vec3,
    pub log_scale: Vec3,
    pub quaternion: Quat,
    pub color_logit: Vec3,
    pub opacity_logit: f64,
}

/// Gradient mirroring a [`GaussianTrajectory`]: one entry per first-frame
/// Gaussian and one per residual.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGradient {
    pub g0: Vec<GaussianGradient>,
    pub deltas: Vec<Vec<GaussianDelta>>,
}

impl TrajectoryGradient {
    pub fn zeros(k: usize, n: usize) -> Self {
        TrajectoryGradient {
            g0: vec![GaussianGradient::default(); n],
            deltas: vec![vec![GaussianDelta::ZERO; n]; k - 1],
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            k: self.deltas.len() + 1,
            n: self.g0.len(),
        }
    }

    /// Flattens in the [`Layout`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().len());
        out.extend(self.g0.iter().flat_map(|g| g.mean));
        out.extend(self.g0.iter().flat_map(|g| g.log_scale));
        out.extend(self.g0.iter().flat_map(|g| g.quaternion));
        out.extend(self.g0.iter().flat_map(|g| g.color_logit));
        out.extend(self.g0.iter().map(|g| g.opacity_logit));
        out.extend(self.deltas.iter().flatten().flat_map(|d| d.mean));
        out.extend(self.deltas.iter().flatten().flat_map(|d| d.color));
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A trajectory in unconstrained coordinates, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams {
    layout: Layout,
    values: Vec<f64>,
}

impl FlatParams {
    pub fn from_trajectory(traj: &GaussianTrajectory) -> Self {
        let layout = Layout { k: traj.k(), n: traj.n() };
        let g0 = traj.g0();
        let mut values = Vec::with_capacity(layout.len());
        values.extend(g0.iter().flat_map(|g| g.mean));
        values.extend(g0.iter().flat_map(|g| g.scale.map(|s| ln(s).clamp(-LOG_SCALE_BOUND, LOG_SCALE_BOUND))));
        values.extend(g0.iter().flat_map(|g| g.rotation));
        values.extend(
            g0.iter()
                .flat_map(|g| g.color.map(|c| logit(c.clamp(COLOR_EPS, 1.0 - COLOR_EPS)))),
        );
        values.extend(g0.iter().map(|g| logit(g.opacity).clamp(-LOGIT_BOUND, LOGIT_BOUND)));
        values.extend(traj.deltas().iter().flatten().flat_map(|d| d.mean));
        values.extend(traj.deltas().iter().flatten().flat_map(|d| d.color));
        FlatParams { layout, values }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        &self.values[self.layout.range(group)]
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let r = self.layout.range(group);
        &mut self.values[r]
    }

    /// Rescales every raw quaternion to unit length.
    pub fn normalize_quaternions(&mut self) {
        for q in self.group_mut(ParamGroup::Quaternions).chunks_mut(4) {
            let norm = crate::math::sqrt(q.iter().map(|v| v * v).sum());
            if norm > 0.0 {
                q.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    pub fn to_trajectory(&self) -> Result<GaussianTrajectory> {
        let Layout { k, n } = self.layout;
        let v3 = |g: ParamGroup, i: usize| -> Vec3 {
            let s = &self.group(g)[3 * i..3 * i + 3];
            [s[0], s[1], s[2]]
        };
        let mut g0 = Vec::with_capacity(n);
        for i in 0..n {
            let q = &self.group(ParamGroup::Quaternions)[4 * i..4 * i + 4];
            let opacity = logistic(self.group(ParamGroup::Opacities)[i].clamp(-LOGIT_BOUND, LOGIT_BOUND));
            g0.push(Gaussian::new(
                v3(ParamGroup::Means, i),
                v3(ParamGroup::Scales, i).map(|s| exp(s.clamp(-LOG_SCALE_BOUND, LOG_SCALE_BOUND))),
                [q[0], q[1], q[2], q[3]],
                v3(ParamGroup::Colors, i).map(logistic),
                opacity,
            )?);
        }
        let deltas = (0..k - 1)
            .map(|t| {
                (0..n)
                    .map(|i| GaussianDelta {
                        mean: v3(ParamGroup::DeltaMeans, t * n + i),
                        color: v3(ParamGroup::DeltaColors, t * n + i),
                    })
                    .collect()
            })
            .collect();
        GaussianTrajectory::new(g0, deltas)
    }
}
