//! Argument parsing.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "splatrack", version, about = "Fit dynamic Gaussian splats to videos and track points through them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: frames, ground-truth tracks and trajectory.
    Synth(SynthArgs),
    /// Fit a Gaussian trajectory to a directory of PPM frames.
    Fit(FitArgs),
    /// Track query points through a fitted trajectory.
    Track(TrackArgs),
    /// Score tracks against ground truth.
    Eval(EvalArgs),
    /// Render frames, flow fields or track overlays from a trajectory.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec JSON file.
    #[arg(long, conflicts_with = "suite", required_unless_present = "suite")]
    pub scene: Option<PathBuf>,
    /// Index into the standard suite instead of a spec file.
    #[arg(long)]
    pub suite: Option<usize>,
    /// Suite seed, or an override of the spec file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_camera)]
    pub camera: Option<[f64; 4]>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory of frame_NNNN.ppm files.
    #[arg(long)]
    pub frames: PathBuf,
    /// Trajectory file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Report file; defaults to `<out stem>.report.json` next to the trajectory.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Use only the first N frames.
    #[arg(long)]
    pub max_frames: Option<usize>,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub init_depth: f64,
    /// Keep all mean residuals at zero.
    #[arg(long)]
    pub freeze_dmu: bool,
    /// Keep all color residuals at zero.
    #[arg(long)]
    pub freeze_dr: bool,
    #[arg(long)]
    pub lr_means: Option<f64>,
    #[arg(long)]
    pub lr_delta_means: Option<f64>,
    #[arg(long)]
    pub lr_colors: Option<f64>,
    #[arg(long)]
    pub lr_delta_colors: Option<f64>,
    #[arg(long)]
    pub lr_scales: Option<f64>,
    #[arg(long)]
    pub lr_opacities: Option<f64>,
    #[arg(long)]
    pub lr_quaternions: Option<f64>,
    /// Background color r,g,b behind all Gaussians.
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_camera)]
    pub camera: Option<[f64; 4]>,
    /// Print the loss every N iterations to stderr (0 = silent).
    #[arg(long, default_value_t = 0)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Track file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON list of {t, x, y} queries.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// A single query `t,x,y`; repeatable.
    #[arg(long = "query", value_parser = parse_query)]
    pub query: Vec<(usize, f64, f64)>,
    /// Ground-truth file to draw strided queries from.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    #[arg(long, default_value_t = 8)]
    pub top_k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau_vis: f64,
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// Splat raw weighted offsets instead of normalizing by accumulated weight.
    #[arg(long)]
    pub no_normalize_flow: bool,
    /// Override the trajectory file's intrinsics.
    #[arg(long, value_parser = parse_camera)]
    pub camera: Option<[f64; 4]>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Report JSON to write; a `key=value` text copy goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Pixel thresholds at the evaluation resolution.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub thresholds: Vec<f64>,
    #[arg(long, value_parser = parse_size, default_value = "256,256")]
    pub eval_resolution: (usize, usize),
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the flow field from frame T to T+1.
    #[arg(long, value_name = "T")]
    pub flow: Option<usize>,
    /// Flow color scale: channel = 0.5 + scale·v. Defaults to 0.5 / max |v|.
    #[arg(long)]
    pub flow_scale: Option<f64>,
    /// Track file to draw over the rendered frames.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Marker radius in pixels.
    #[arg(long, default_value_t = 2.5)]
    pub radius: f64,
    #[arg(long, value_parser = parse_rgb)]
    pub background: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_camera)]
    pub camera: Option<[f64; 4]>,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

fn parse_camera(s: &str) -> Result<[f64; 4], String> {
    parse_floats::<4>(s)
}

fn parse_rgb(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

fn parse_query(s: &str) -> Result<(usize, f64, f64), String> {
    let (t, rest) = s.split_once(',').ok_or("expected t,x,y")?;
    let t = t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"))?;
    let [x, y] = parse_floats::<2>(rest)?;
    Ok((t, x, y))
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(',').ok_or("expected width,height")?;
    let w = w.trim().parse::<usize>().map_err(|e| format!("{w:?}: {e}"))?;
    let h = h.trim().parse::<usize>().map_err(|e| format!("{h:?}: {e}"))?;
    Ok((w, h))
}

/// Parses `args` (program name first) and runs the selected command.
/// `--help` and `--version` print and succeed.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{err}");
            return Ok(());
        }
        Err(err) => return Err(CliError::Usage(err.render().to_string())),
    };
    match cli.command {
        Command::Synth(args) => commands::synth(&args),
        Command::Fit(args) => commands::fit(&args),
        Command::Track(args) => commands::track(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Render(args) => commands::render(&args),
    }
}
