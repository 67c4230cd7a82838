//! Command implementations. Each reads its inputs, calls the core library
//! and writes its outputs; nothing here depends on clap beyond the argument
//! structs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splatrack_core::eval::{evaluate, strided_queries, EvalConfig, EvalReport, GroundTruthTrack};
use splatrack_core::fit::{fit_video_with, FitConfig};
use splatrack_core::splat::{render_rgb, RasterConfig};
use splatrack_core::synth::{generate_scene_with, standard_suite, SceneSpec, SynthOutput};
use splatrack_core::track::{render_flow_field, FlowField, Query, Tracker, TrackerConfig};
use splatrack_core::{Camera, GaussianTrajectory, Image, Video};

use crate::cli::{EvalArgs, FitArgs, RenderArgs, SynthArgs, TrackArgs};
use crate::error::{CliError, Result};
use crate::formats::{
    EvalReportFile, FitReportFile, GroundTruthFile, QueryRecord, TrackFile, TrajectoryFile, FORMAT_VERSION,
};
use crate::{json, ppm};

pub const GT_TRACKS_FILE: &str = "gt_tracks.json";
pub const GT_TRAJECTORY_FILE: &str = "gt_trajectory.json";
pub const SCENE_FILE: &str = "scene.json";

fn replace_intrinsics(camera: &Camera, k: Option<[f64; 4]>) -> Result<Camera> {
    match k {
        Some([fx, fy, cx, cy]) => Ok(Camera::new(
            fx,
            fy,
            cx,
            cy,
            camera.rotation,
            camera.translation,
            camera.width,
            camera.height,
        )?),
        None => Ok(*camera),
    }
}

fn raster_with(background: Option<[f64; 3]>) -> RasterConfig {
    match background {
        Some(bg) => RasterConfig::default().with_background(&bg),
        None => RasterConfig::default(),
    }
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let spec = match (&args.scene, args.suite) {
        (Some(path), _) => {
            let mut spec: SceneSpec = json::read(path)?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            spec.validate().map_err(|e| CliError::format(path, e.to_string()))?;
            spec
        }
        (None, Some(index)) => {
            let suite = standard_suite(args.seed.unwrap_or(0));
            let len = suite.len();
            suite
                .into_iter()
                .nth(index)
                .ok_or_else(|| CliError::Usage(format!("suite index {index} is out of range (0..{len})\n")))?
        }
        (None, None) => return Err(CliError::Usage("pass --scene or --suite\n".into())),
    };
    let camera = replace_intrinsics(&spec.camera(), args.camera)?;
    let out = generate_scene_with(&spec, &camera)?;
    write_synth(&args.out, &spec, &out)
}

/// Writes frames, ground-truth tracks, the generating trajectory and the spec.
pub fn write_synth(dir: &Path, spec: &SceneSpec, out: &SynthOutput) -> Result<()> {
    ppm::write_video(dir, &out.video)?;
    let gt = GroundTruthFile::new(spec.width, spec.height, spec.k, out.gt_tracks.clone());
    json::write(&dir.join(GT_TRACKS_FILE), &gt)?;
    TrajectoryFile::write(&dir.join(GT_TRAJECTORY_FILE), &out.gt_trajectory, &out.camera)?;
    json::write(&dir.join(SCENE_FILE), spec)
}

pub fn fit_config(args: &FitArgs) -> FitConfig {
    let mut config = FitConfig {
        n: args.n,
        iters: args.iters,
        seed: args.seed,
        init_depth: args.init_depth,
        freeze_dmu: args.freeze_dmu,
        freeze_dr: args.freeze_dr,
        raster: raster_with(args.background),
        ..FitConfig::default()
    };
    let lr = &mut config.lr;
    let overrides = [
        (&mut lr.means, args.lr_means),
        (&mut lr.delta_means, args.lr_delta_means),
        (&mut lr.colors, args.lr_colors),
        (&mut lr.delta_colors, args.lr_delta_colors),
        (&mut lr.scales, args.lr_scales),
        (&mut lr.opacities, args.lr_opacities),
        (&mut lr.quaternions, args.lr_quaternions),
    ];
    for (slot, value) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    config
}

/// Default report location: `<stem>.report.json` beside the trajectory.
pub fn report_path(args: &FitArgs) -> PathBuf {
    args.report.clone().unwrap_or_else(|| {
        let stem = args.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        args.out.with_file_name(format!("{stem}.report.json"))
    })
}

/// Reads the frame directory, honoring `--max-frames`.
pub fn load_frames(dir: &Path, max_frames: Option<usize>) -> Result<Video> {
    let video = ppm::read_video(dir)?;
    match max_frames {
        Some(0) => Err(CliError::Usage("--max-frames must be at least 1\n".into())),
        Some(m) if m < video.len() => Ok(video.truncated(m)?),
        _ => Ok(video),
    }
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let video = load_frames(&args.frames, args.max_frames)?;
    let camera = replace_intrinsics(&Camera::default_for(video.width(), video.height()), args.camera)?;
    let config = fit_config(args);
    let every = args.progress;
    let (traj, report) = fit_video_with(&video, &camera, &config, |it, loss| {
        if every > 0 && it % every == 0 {
            eprintln!("iter {it:>6}  loss {loss:.6e}");
        }
    })?;
    TrajectoryFile::write(&args.out, &traj, &camera)?;
    json::write(&report_path(args), &FitReportFile::new(&report))
}

pub fn tracker_config(args: &TrackArgs) -> TrackerConfig {
    TrackerConfig {
        top_k: args.top_k,
        tau_vis: args.tau_vis,
        beta: args.beta,
        eps: args.eps,
        normalize_flow: !args.no_normalize_flow,
    }
}

/// Strided queries over every ground-truth track, tagged with the track index.
pub fn gt_queries(gt: &GroundTruthFile, stride: usize) -> Result<Vec<QueryRecord>> {
    let config = EvalConfig {
        stride,
        ..EvalConfig::for_frames(gt.width, gt.height)
    };
    config.validate()?;
    Ok(gt
        .tracks
        .iter()
        .enumerate()
        .flat_map(|(i, track)| {
            strided_queries(track, &config).into_iter().map(move |q| QueryRecord {
                t: q.t,
                x: q.p[0],
                y: q.p[1],
                gt: Some(i),
            })
        })
        .collect())
}

pub fn track(args: &TrackArgs) -> Result<()> {
    let (traj, camera) = TrajectoryFile::read(&args.trajectory)?;
    let camera = replace_intrinsics(&camera, args.camera)?;
    let mut queries = Vec::new();
    if let Some(path) = &args.queries {
        queries.extend(json::read::<Vec<QueryRecord>>(path)?);
    }
    queries.extend(args.query.iter().map(|&(t, x, y)| QueryRecord { t, x, y, gt: None }));
    if let Some(path) = &args.gt {
        queries.extend(gt_queries(&GroundTruthFile::read(path)?, args.stride)?);
    }
    if queries.is_empty() {
        return Err(CliError::Usage("no queries: pass --queries, --query or --gt\n".into()));
    }
    let file = track_queries(&traj, &camera, queries, tracker_config(args))?;
    json::write(&args.out, &file)
}

pub fn track_queries(
    traj: &GaussianTrajectory,
    camera: &Camera,
    queries: Vec<QueryRecord>,
    config: TrackerConfig,
) -> Result<TrackFile> {
    let tracker = Tracker::new(traj, camera, &config)?;
    let qs: Vec<Query> = queries.iter().map(QueryRecord::query).collect();
    let tracks = tracker.track_all(&qs)?;
    Ok(TrackFile::new(traj.k(), queries, &tracks, config))
}

/// Pairs each track with its ground truth (the query's `gt` index, else
/// its position) and evaluates.
pub fn evaluate_files(
    tracks: &TrackFile,
    tracks_path: &Path,
    gt: &GroundTruthFile,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if tracks.k != gt.k {
        return Err(CliError::format(
            tracks_path,
            format!("track file has k = {} but the ground truth has k = {}", tracks.k, gt.k),
        ));
    }
    let gts = tracks
        .queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let j = q.gt.unwrap_or(i);
            gt.tracks.get(j).cloned().ok_or_else(|| {
                CliError::format(tracks_path, format!("query {i} refers to missing ground-truth track {j}"))
            })
        })
        .collect::<Result<Vec<GroundTruthTrack>>>()?;
    Ok(evaluate(&tracks.tracks(), &gts, config)?)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let tracks = TrackFile::read(&args.tracks)?;
    let gt = GroundTruthFile::read(&args.gt)?;
    let config = EvalConfig {
        thresholds: args.thresholds.clone(),
        eval_resolution: args.eval_resolution,
        ..EvalConfig::for_frames(gt.width, gt.height)
    };
    let report = evaluate_files(&tracks, &args.tracks, &gt, &config)?;
    let file = EvalReportFile::new(&report, &config);
    json::write(&args.out, &file)?;
    json::write_text(&args.out.with_extension("txt"), &file.to_text())
}

/// How flow vectors were mapped to colors: `channel = offset + scale·v`,
/// x in red, y in green, blue fixed at `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMapping {
    pub version: u32,
    pub t: usize,
    pub offset: f64,
    pub scale: f64,
    pub max_abs: f64,
}

pub fn flow_image(field: &FlowField, scale: Option<f64>) -> (Image, FlowMapping) {
    let max_abs = field.grid.data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = scale.unwrap_or(if max_abs > 0.0 { 0.5 / max_abs } else { 1.0 });
    let (w, h) = (field.grid.width(), field.grid.height());
    let mut img = Image::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let f = field.at(x, y);
            let px = img.pixel_mut(x, y);
            px[0] = (0.5 + scale * f[0]).clamp(0.0, 1.0);
            px[1] = (0.5 + scale * f[1]).clamp(0.0, 1.0);
            px[2] = 0.5;
        }
    }
    let mapping = FlowMapping {
        version: FORMAT_VERSION,
        t: field.t,
        offset: 0.5,
        scale,
        max_abs,
    };
    (img, mapping)
}

const PALETTE: [[f64; 3]; 6] = [
    [1.0, 0.2, 0.2],
    [0.2, 1.0, 0.2],
    [0.3, 0.5, 1.0],
    [1.0, 1.0, 0.2],
    [1.0, 0.3, 1.0],
    [0.2, 1.0, 1.0],
];

/// Filled disk for visible points, one-pixel ring for occluded ones.
pub fn draw_marker(img: &mut Image, p: [f64; 2], radius: f64, color: [f64; 3], filled: bool) {
    if !(p[0].is_finite() && p[1].is_finite()) {
        return;
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = (p[0] - radius).floor().max(0.0);
    let x1 = (p[0] + radius).ceil().min(w - 1.0);
    let y0 = (p[1] - radius).floor().max(0.0);
    let y1 = (p[1] + radius).ceil().min(h - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let d = ((x as f64 - p[0]).powi(2) + (y as f64 - p[1]).powi(2)).sqrt();
            if d <= radius && (filled || d > radius - 1.0) {
                img.pixel_mut(x, y).copy_from_slice(&color);
            }
        }
    }
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let (traj, camera) = TrajectoryFile::read(&args.trajectory)?;
    let camera = replace_intrinsics(&camera, args.camera)?;
    let raster = raster_with(args.background);
    let frames = traj
        .frames()
        .iter()
        .map(|gs| render_rgb(gs, &camera, &raster))
        .collect::<splatrack_core::Result<Vec<_>>>()?;
    let overlay = match &args.overlay {
        Some(path) => {
            let file = TrackFile::read(path)?;
            if file.k != traj.k() {
                return Err(CliError::format(
                    path,
                    format!("track file has k = {} but the trajectory has k = {}", file.k, traj.k()),
                ));
            }
            Some(file)
        }
        None => None,
    };
    let flow = match args.flow {
        Some(t) => Some(render_flow_field(&traj, &camera, t, &TrackerConfig::default())?),
        None => None,
    };

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    for (t, frame) in frames.iter().enumerate() {
        ppm::write(&args.out.join(ppm::frame_name(t)), frame)?;
    }
    if let Some(field) = flow {
        let (img, mapping) = flow_image(&field, args.flow_scale);
        ppm::write(&args.out.join(format!("flow_{:04}.ppm", field.t)), &img)?;
        json::write(&args.out.join(format!("flow_{:04}.json", field.t)), &mapping)?;
    }
    if let Some(file) = overlay {
        for (t, frame) in frames.iter().enumerate() {
            let mut img = frame.clone();
            for (i, track) in file.tracks.iter().enumerate() {
                let pt = track[t];
                draw_marker(&mut img, [pt.x, pt.y], args.radius, PALETTE[i % PALETTE.len()], pt.visible);
            }
            ppm::write(&args.out.join(format!("overlay_{t:04}.ppm")), &img)?;
        }
    }
    Ok(())
}
