//! Dynamic Gaussian-splat scene fitting and zero-shot point tracking.
//!
//! A short video is represented as a set of `n` anisotropic 3-D Gaussians for
//! the first frame plus per-frame residuals on their means and colors. The
//! residuals are integrated over time so every Gaussian keeps its identity
//! across frames. That trajectory is fitted to a video by gradient descent on
//! a differentiable splatting renderer, and point tracks are read back out of
//! it by splatting the projected per-Gaussian motion into a dense flow field
//! and blending flow advection with a fixed top-k anchor mixture.
//!
//! The crate is `no_std` + `alloc`. The default `std` feature enables
//! row-parallel rasterization (rayon) and wall-clock timing of fits.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod fit;
pub mod geom;
pub mod image;
pub mod math;
pub mod params;
pub mod splat;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport, GroundTruthTrack};
pub use fit::{FitConfig, FitReport, LearningRates};
pub use geom::{Camera, Gaussian, GaussianDelta, GaussianTrajectory};
pub use image::{Image, Video};
pub use splat::{RasterConfig, RasterOutput};
pub use synth::{SceneSpec, SynthOutput};
pub use track::{FlowField, Query, Track, Tracker, TrackerConfig};
