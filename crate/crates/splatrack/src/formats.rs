//! On-disk records. Every float is written with 17 significant digits
//! (see [`crate::json`]), so parse∘serialize is the identity.

use std::path::Path;

use serde::{Deserialize, Serialize};
use splatrack_core::eval::{EvalConfig, EvalReport, GroundTruthTrack};
use splatrack_core::fit::FitReport;
use splatrack_core::track::{Query, Track, TrackerConfig};
use splatrack_core::{Camera, Gaussian, GaussianDelta, GaussianTrajectory};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

fn check_version(version: u32, path: &Path) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(CliError::format(path, format!("unsupported format version {version}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, row-major.
    pub rot: [f64; 9],
    pub trans: [f64; 3],
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera) -> Self {
        let r = cam.rotation;
        CameraRecord {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rot: [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]],
            trans: cam.translation,
        }
    }

    pub fn to_camera(&self, width: usize, height: usize) -> splatrack_core::Result<Camera> {
        let r = self.rot;
        let rotation = [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]];
        Camera::new(self.fx, self.fy, self.cx, self.cy, rotation, self.trans, width, height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub n: usize,
    pub camera: CameraRecord,
    pub gaussians: Vec<Gaussian>,
    pub deltas: Vec<Vec<GaussianDelta>>,
}

impl TrajectoryFile {
    pub fn new(traj: &GaussianTrajectory, camera: &Camera) -> Self {
        TrajectoryFile {
            version: FORMAT_VERSION,
            width: camera.width,
            height: camera.height,
            k: traj.k(),
            n: traj.n(),
            camera: CameraRecord::from_camera(camera),
            gaussians: traj.g0().to_vec(),
            deltas: traj.deltas().to_vec(),
        }
    }

    /// Validates the record and splits it into trajectory and camera.
    pub fn into_parts(self, path: &Path) -> Result<(GaussianTrajectory, Camera)> {
        check_version(self.version, path)?;
        if self.gaussians.len() != self.n {
            return Err(CliError::format(path, format!("n = {} but {} gaussians", self.n, self.gaussians.len())));
        }
        if self.deltas.len() + 1 != self.k {
            return Err(CliError::format(path, format!("k = {} but {} delta rows", self.k, self.deltas.len())));
        }
        let camera = self
            .camera
            .to_camera(self.width, self.height)
            .map_err(|e| CliError::format(path, e.to_string()))?;
        let traj = GaussianTrajectory::new(self.gaussians, self.deltas).map_err(|e| CliError::format(path, e.to_string()))?;
        Ok((traj, camera))
    }

    pub fn read(path: &Path) -> Result<(GaussianTrajectory, Camera)> {
        crate::json::read::<TrajectoryFile>(path)?.into_parts(path)
    }

    pub fn write(path: &Path, traj: &GaussianTrajectory, camera: &Camera) -> Result<()> {
        crate::json::write(path, &TrajectoryFile::new(traj, camera))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    /// Index of the ground-truth track the query was sampled from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<usize>,
}

impl QueryRecord {
    pub fn query(&self) -> Query {
        Query::new(self.t, [self.x, self.y])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub version: u32,
    pub k: usize,
    pub queries: Vec<QueryRecord>,
    pub tracks: Vec<Vec<PointRecord>>,
    pub config: TrackerConfig,
}

impl TrackFile {
    pub fn new(k: usize, queries: Vec<QueryRecord>, tracks: &[Track], config: TrackerConfig) -> Self {
        let tracks = tracks
            .iter()
            .map(|tr| {
                tr.points
                    .iter()
                    .zip(&tr.visible)
                    .map(|(p, &visible)| PointRecord { x: p[0], y: p[1], visible })
                    .collect()
            })
            .collect();
        TrackFile {
            version: FORMAT_VERSION,
            k,
            queries,
            tracks,
            config,
        }
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        check_version(self.version, path)?;
        if self.queries.len() != self.tracks.len() {
            return Err(CliError::format(
                path,
                format!("{} queries but {} tracks", self.queries.len(), self.tracks.len()),
            ));
        }
        if let Some(i) = self.tracks.iter().position(|t| t.len() != self.k) {
            return Err(CliError::format(path, format!("track {i} does not have k = {} points", self.k)));
        }
        if let Some(q) = self.queries.iter().find(|q| q.t >= self.k) {
            return Err(CliError::format(path, format!("query frame {} is not below k = {}", q.t, self.k)));
        }
        Ok(())
    }

    /// Tracks as library values; anchor sets are not stored and come back empty.
    pub fn tracks(&self) -> Vec<Track> {
        self.queries
            .iter()
            .zip(&self.tracks)
            .map(|(q, pts)| Track {
                query: q.query(),
                points: pts.iter().map(|p| [p.x, p.y]).collect(),
                visible: pts.iter().map(|p| p.visible).collect(),
                anchor_set: Vec::new(),
            })
            .collect()
    }

    pub fn read(path: &Path) -> Result<TrackFile> {
        let file: TrackFile = crate::json::read(path)?;
        file.validate(path)?;
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub version: u32,
    pub k: usize,
    pub width: usize,
    pub height: usize,
    pub tracks: Vec<GroundTruthTrack>,
}

impl GroundTruthFile {
    pub fn new(width: usize, height: usize, k: usize, tracks: Vec<GroundTruthTrack>) -> Self {
        GroundTruthFile {
            version: FORMAT_VERSION,
            k,
            width,
            height,
            tracks,
        }
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        check_version(self.version, path)?;
        for (i, tr) in self.tracks.iter().enumerate() {
            tr.validate().map_err(|e| CliError::format(path, format!("track {i}: {e}")))?;
            if tr.len() != self.k {
                return Err(CliError::format(path, format!("track {i} does not have k = {} points", self.k)));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<GroundTruthFile> {
        let file: GroundTruthFile = crate::json::read(path)?;
        file.validate(path)?;
        Ok(file)
    }
}

/// Fit summary. Infinite PSNR (a perfect frame) is written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportFile {
    pub version: u32,
    pub final_loss: f64,
    pub psnr: Vec<Option<f64>>,
    pub loss_curve: Vec<f64>,
    pub wall_time_secs: Option<f64>,
}

impl FitReportFile {
    pub fn new(report: &FitReport) -> Self {
        FitReportFile {
            version: FORMAT_VERSION,
            final_loss: report.final_loss,
            psnr: report.psnr.iter().map(|p| p.is_finite().then_some(*p)).collect(),
            loss_curve: report.loss_curve.clone(),
            wall_time_secs: report.wall_time_secs,
        }
    }

    pub fn psnr_values(&self) -> Vec<f64> {
        self.psnr.iter().map(|p| p.unwrap_or(f64::INFINITY)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReportFile {
    pub version: u32,
    pub average_jaccard: Option<f64>,
    pub delta_avg: Option<f64>,
    pub occlusion_accuracy: Option<f64>,
    pub pairs: usize,
    pub thresholds: Vec<f64>,
    pub eval_resolution: (usize, usize),
}

impl EvalReportFile {
    pub fn new(report: &EvalReport, config: &EvalConfig) -> Self {
        EvalReportFile {
            version: FORMAT_VERSION,
            average_jaccard: report.average_jaccard,
            delta_avg: report.delta_avg,
            occlusion_accuracy: report.occlusion_accuracy,
            pairs: report.pairs,
            thresholds: config.thresholds.clone(),
            eval_resolution: config.eval_resolution,
        }
    }

    /// `key=value` lines; undefined metrics are written as `undefined`.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.16e}"));
        format!(
            "AJ={}\ndelta_avg={}\nOA={}\npairs={}\n",
            fmt(self.average_jaccard),
            fmt(self.delta_avg),
            fmt(self.occlusion_accuracy),
            self.pairs
        )
    }
}
