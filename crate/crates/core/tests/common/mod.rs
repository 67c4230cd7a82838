#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatrack_core::geom::{project_covariance, project_point};
use splatrack_core::math::Vec2;
use splatrack_core::{Camera, Gaussian, GaussianDelta, GaussianTrajectory, Image, RasterConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = core::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return q.map(|v| v / n);
        }
    }
}

/// Gaussian whose center projects inside the image at a moderate depth.
pub fn random_gaussian(rng: &mut ChaCha8Rng, cam: &Camera, scale: (f64, f64)) -> Gaussian {
    let depth = rng.gen_range(1.2..2.5);
    let px = [
        rng.gen_range(0.15..0.85) * cam.width as f64,
        rng.gen_range(0.15..0.85) * cam.height as f64,
    ];
    let mean = cam.unproject(px, depth);
    let s = core::array::from_fn(|_| rng.gen_range(scale.0..scale.1));
    let color = core::array::from_fn(|_| rng.gen_range(0.1..0.9));
    Gaussian::new(mean, s, random_quat(rng), color, rng.gen_range(0.2..0.9)).unwrap()
}

pub fn random_trajectory(rng: &mut ChaCha8Rng, cam: &Camera, n: usize, k: usize) -> GaussianTrajectory {
    let g0 = (0..n).map(|_| random_gaussian(rng, cam, (0.08, 0.25))).collect();
    let deltas = (1..k)
        .map(|_| {
            (0..n)
                .map(|_| GaussianDelta {
                    mean: core::array::from_fn(|_| rng.gen_range(-0.03..0.03)),
                    color: core::array::from_fn(|_| rng.gen_range(-0.05..0.05)),
                })
                .collect()
        })
        .collect();
    GaussianTrajectory::new(g0, deltas).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    let data = (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
    Image::from_vec(w, h, 3, data).unwrap()
}

/// Brute-force compositing: every pixel loops over every Gaussian in depth
/// order, with no bounding boxes or row binning.
pub fn naive_render(
    gaussians: &[Gaussian],
    cam: &Camera,
    attrs: &[f64],
    m: usize,
    cfg: &RasterConfig,
) -> (Vec<f64>, Vec<f64>) {
    struct P {
        idx: usize,
        depth: f64,
        center: Vec2,
        inv: [[f64; 2]; 2],
        o: f64,
    }
    let mut ps: Vec<P> = Vec::new();
    for (idx, g) in gaussians.iter().enumerate() {
        let Ok((center, depth)) = project_point(cam, g.mean) else {
            continue;
        };
        let cov = project_covariance(cam, g.mean, &g.covariance().unwrap()).unwrap();
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
        ps.push(P {
            idx,
            depth,
            center,
            inv,
            o: g.opacity,
        });
    }
    ps.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.idx.cmp(&b.idx)));
    let bg = if cfg.background.is_empty() { vec![0.0; m] } else { cfg.background.clone() };
    let mut img = vec![0.0; cam.width * cam.height * m];
    let mut acc = vec![0.0; cam.width * cam.height];
    for y in 0..cam.height {
        for x in 0..cam.width {
            let mut t = 1.0;
            let mut sum_w = 0.0;
            let base = (y * cam.width + x) * m;
            for p in &ps {
                let d = [x as f64 - p.center[0], y as f64 - p.center[1]];
                let q = d[0] * (p.inv[0][0] * d[0] + p.inv[0][1] * d[1]) + d[1] * (p.inv[1][0] * d[0] + p.inv[1][1] * d[1]);
                if q > cfg.cutoff_sigma * cfg.cutoff_sigma {
                    continue;
                }
                let raw = p.o * (-0.5 * q).exp();
                if raw < cfg.alpha_min {
                    continue;
                }
                let a = raw.min(0.999);
                let w = a * t;
                for c in 0..m {
                    img[base + c] += w * attrs[p.idx * m + c];
                }
                sum_w += w;
                t *= 1.0 - a;
            }
            for c in 0..m {
                img[base + c] += t * bg[c];
            }
            acc[y * cam.width + x] = sum_w;
        }
    }
    (img, acc)
}
