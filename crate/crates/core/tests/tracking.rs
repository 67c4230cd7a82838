mod common;

use common::oracles::{advection_reference, stacked};

use proptest::prelude::*;
use rand::Rng;
use splatrack_core::geom::project_point;
use splatrack_core::math::Vec2;
use splatrack_core::synth::{generate_scene, standard_suite};
use splatrack_core::track::{
    anchor_state, projected_tracks, render_flow_field, select_anchors, step, track_point, FlowField, Query, Tracker,
    TrackerConfig,
};
use splatrack_core::{Camera, Gaussian, GaussianDelta, GaussianTrajectory};

#[test]
fn zero_beta_and_threshold_reduce_to_flow_advection() {
    let cam = Camera::default_for(24, 24);
    for seed in 0..5 {
        let mut rng = common::rng(700 + seed);
        let n = 8;
        let traj = common::random_trajectory(&mut rng, &cam, n, 6);
        let cfg = TrackerConfig {
            top_k: n,
            tau_vis: 0.0,
            beta: 0.0,
            ..TrackerConfig::default()
        };
        let q = Query::new(rng.gen_range(0..6), [rng.gen_range(6.0..18.0), rng.gen_range(6.0..18.0)]);
        let track = track_point(&traj, &cam, &q, &cfg).unwrap();
        let reference = advection_reference(&traj, &cam, &cfg, &q);
        for (a, b) in track.points.iter().zip(&reference) {
            assert!((a[0] - b[0]).abs() <= 1e-9 && (a[1] - b[1]).abs() <= 1e-9, "seed {seed}: {a:?} vs {b:?}");
        }
    }
}

fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
    (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
}

#[test]
fn anchor_selection_matches_full_sort() {
    let (traj, cam, _) = stacked();
    let cfg = TrackerConfig {
        top_k: 2,
        ..TrackerConfig::default()
    };
    let q = Query::new(0, [8.0, 8.0]);
    assert_eq!(select_anchors(&traj, &cam, &q, &cfg).unwrap(), vec![0, 1]);
    let all = TrackerConfig { top_k: 3, ..cfg };
    assert_eq!(select_anchors(&traj, &cam, &q, &all).unwrap(), vec![0, 1, 2]);
    // Nothing covers the corner: ties resolve to the lowest indices.
    let corner = Query::new(0, [0.0, 15.0]);
    assert_eq!(select_anchors(&traj, &cam, &corner, &cfg).unwrap(), vec![0, 1]);
}

#[test]
fn anchor_state_hand_values() {
    let (traj, cam, _) = stacked();
    let cfg = TrackerConfig {
        top_k: 2,
        eps: 1e-12,
        ..TrackerConfig::default()
    };
    let (omega, pi) = anchor_state(&traj, &cam, &[0, 1], [8.0, 8.0], 0, &cfg).unwrap();
    assert!((omega - 0.8).abs() <= 1e-9);
    assert!((pi[0] - 0.625).abs() <= 1e-9 && (pi[1] - 0.375).abs() <= 1e-9);
    let (omega, pi) = anchor_state(&traj, &cam, &[2], [8.0, 8.0], 0, &cfg).unwrap();
    assert!((omega - 0.1).abs() <= 1e-9 && (pi[0] - 1.0).abs() <= 1e-9);
    let (omega, pi) = anchor_state(&traj, &cam, &[0, 1], [0.0, 0.0], 0, &cfg).unwrap();
    assert_eq!((omega, pi), (0.0, vec![0.0, 0.0]));
}

#[test]
fn step_hand_values() {
    let (traj, cam, d) = stacked();
    let p = [8.0, 8.0];
    let eps = 1e-8;
    let base = TrackerConfig {
        top_k: 2,
        ..TrackerConfig::default()
    };
    let w = [0.5, 0.3, 0.1];
    let flow = [
        (w[0] * d[0][0] + w[1] * d[1][0] + w[2] * d[2][0]) / (0.9 + eps),
        (w[0] * d[0][1] + w[1] * d[1][1] + w[2] * d[2][1]) / (0.9 + eps),
    ];
    let a = [p[0] + flow[0], p[1] + flow[1]];
    let pi = [w[0] / (0.8 + eps), w[1] / (0.8 + eps)];
    let s = [
        pi[0] * (p[0] + d[0][0]) + pi[1] * (p[0] + d[1][0]),
        pi[0] * (p[1] + d[0][1]) + pi[1] * (p[1] + d[1][1]),
    ];

    let out = step(&traj, &cam, &[0, 1], p, 0, &base).unwrap();
    assert!(out.visible && (out.omega - 0.8).abs() <= 1e-9);
    assert!(close(out.advected, a, 1e-9) && close(out.mixture, s, 1e-9));
    assert!(close(out.next, [0.7 * a[0] + 0.3 * s[0], 0.7 * a[1] + 0.3 * s[1]], 1e-9));

    let pure = TrackerConfig { beta: 0.0, tau_vis: 0.0, ..base };
    assert!(close(step(&traj, &cam, &[0, 1], p, 0, &pure).unwrap().next, a, 1e-9));

    let hidden = TrackerConfig { tau_vis: 0.9, ..base };
    let out = step(&traj, &cam, &[0, 1], p, 0, &hidden).unwrap();
    assert!(!out.visible && close(out.next, s, 1e-9));

    let mixture_only = TrackerConfig { beta: 1.0, ..base };
    assert!(close(step(&traj, &cam, &[0, 1], p, 0, &mixture_only).unwrap().next, s, 1e-9));
}

#[test]
fn offsets_match_independent_projection() {
    let cam = Camera::default_for(32, 32);
    let traj = common::random_trajectory(&mut common::rng(3), &cam, 10, 5);
    let pt = projected_tracks(&traj, &cam);
    let frames = traj.frames();
    for t in 0..4 {
        for i in 0..10 {
            let (a, _) = project_point(&cam, frames[t][i].mean).unwrap();
            let (b, _) = project_point(&cam, frames[t + 1][i].mean).unwrap();
            let off = pt.offsets[t][i];
            assert!((off[0] - (b[0] - a[0])).abs() <= 1e-12 && (off[1] - (b[1] - a[1])).abs() <= 1e-12);
        }
    }
    let still = GaussianTrajectory::stationary(traj.g0().to_vec(), 3).unwrap();
    assert!(projected_tracks(&still, &cam).offsets.iter().flatten().all(|o| *o == [0.0, 0.0]));
}

/// Gaussians at one depth sharing the same pixel displacement `d`.
fn common_shift(seed: u64, d: Vec2) -> (GaussianTrajectory, Camera) {
    let cam = Camera::default_for(32, 32);
    let mut rng = common::rng(seed);
    let z = 2.0;
    let g0: Vec<Gaussian> = (0..8)
        .map(|_| {
            let px = [rng.gen_range(6.0..26.0), rng.gen_range(6.0..26.0)];
            let s = [rng.gen_range(0.1..0.25), rng.gen_range(0.1..0.25), rng.gen_range(0.1..0.25)];
            Gaussian::new(cam.unproject(px, z), s, common::random_quat(&mut rng), [0.5; 3], rng.gen_range(0.2..0.9))
                .unwrap()
        })
        .collect();
    let delta = GaussianDelta {
        mean: [d[0] * z / cam.fx, d[1] * z / cam.fx, 0.0],
        color: [0.0; 3],
    };
    (GaussianTrajectory::new(g0, vec![vec![delta; 8]]).unwrap(), cam)
}

#[test]
fn constant_offset_flow_fields() {
    let d = [1.25, -0.5];
    let (traj, cam) = common_shift(11, d);
    let norm = TrackerConfig::default();
    let raw = TrackerConfig {
        normalize_flow: false,
        ..norm
    };
    let f: FlowField = render_flow_field(&traj, &cam, 0, &norm).unwrap();
    let g = render_flow_field(&traj, &cam, 0, &raw).unwrap();
    let out = splatrack_core::splat::rasterize(traj.g0(), &cam, &[0.0; 8], 1, &Default::default()).unwrap();
    let mut covered = 0;
    for y in 0..32 {
        for x in 0..32 {
            let acc = out.accum_weight.get(x, y, 0);
            let fv = f.at(x, y);
            let gv = g.at(x, y);
            assert!((gv[0] - d[0] * acc).abs() <= 1e-6 && (gv[1] - d[1] * acc).abs() <= 1e-6);
            let shrink = acc / (acc + norm.eps);
            assert!((fv[0] - d[0] * shrink).abs() <= 1e-12 && (fv[1] - d[1] * shrink).abs() <= 1e-12);
            // The eps guard biases the average by |d|·eps/(acc + eps).
            if acc > 0.05 {
                covered += 1;
                assert!((fv[0] - d[0]).abs() <= 1e-6 && (fv[1] - d[1]).abs() <= 1e-6, "{x},{y}: {fv:?}");
            }
        }
    }
    assert!(covered > 100);
    let still = GaussianTrajectory::stationary(traj.g0().to_vec(), 2).unwrap();
    let z = render_flow_field(&still, &cam, 0, &norm).unwrap();
    assert!(z.grid.data().iter().all(|v| *v == 0.0));
}

#[test]
fn static_scene_without_mixture_gives_constant_tracks() {
    let cam = Camera::default_for(24, 24);
    let traj = common::random_trajectory(&mut common::rng(5), &cam, 8, 2);
    let still = GaussianTrajectory::stationary(traj.g0().to_vec(), 6).unwrap();
    let cfg = TrackerConfig {
        beta: 0.0,
        tau_vis: 0.0,
        ..TrackerConfig::default()
    };
    let tracker = Tracker::new(&still, &cam, &cfg).unwrap();
    for (t, p) in [(0, [12.0, 12.0]), (3, [7.5, 15.25]), (5, [20.0, 3.0])] {
        let tr = tracker.track(&Query::new(t, p)).unwrap();
        assert!(tr.points.iter().all(|x| *x == p), "{:?}", tr.points);
        assert!(tr.visible.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn static_blob_center_is_a_fixed_point_of_the_mixture() {
    let cam = Camera::default_for(24, 24);
    let g = Gaussian::isotropic(cam.unproject([10.0, 13.0], 2.0), 0.2, [0.5; 3], 0.9).unwrap();
    let still = GaussianTrajectory::stationary(vec![g], 6).unwrap();
    let cfg = TrackerConfig {
        top_k: 1,
        ..TrackerConfig::default()
    };
    let tr = track_point(&still, &cam, &Query::new(2, [10.0, 13.0]), &cfg).unwrap();
    assert!(tr.points.iter().all(|x| close(*x, [10.0, 13.0], 1e-6)), "{:?}", tr.points);
    assert!(tr.visible.iter().all(|&v| v));
}

/// Shifts every frame-0 mean by a whole number of pixels at its own depth.
fn shifted(traj: &GaussianTrajectory, cam: &Camera, d: Vec2) -> GaussianTrajectory {
    let g0 = traj
        .g0()
        .iter()
        .map(|g| {
            let (x, z) = project_point(cam, g.mean).unwrap();
            Gaussian {
                mean: cam.unproject([x[0] + d[0], x[1] + d[1]], z),
                ..*g
            }
        })
        .collect();
    GaussianTrajectory::new(g0, traj.deltas().to_vec()).unwrap()
}

/// Fronto-parallel Gaussians (thin along the optical axis, rotated about
/// it) keep their image footprint when moved across the image; general
/// ones are foreshortened off-axis.
#[test]
fn whole_pixel_scene_shift_shifts_tracks() {
    let cam = Camera::default_for(48, 48);
    let mut rng = common::rng(31);
    let g0: Vec<Gaussian> = (0..10)
        .map(|_| {
            let px = [rng.gen_range(18.0..30.0), rng.gen_range(18.0..30.0)];
            let mean = cam.unproject(px, rng.gen_range(1.5..2.5));
            let half: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let q = [half.cos(), 0.0, 0.0, half.sin()];
            let s = [rng.gen_range(0.06..0.12), rng.gen_range(0.06..0.12), 1e-4];
            Gaussian::new(mean, s, q, [0.5; 3], rng.gen_range(0.4..0.9)).unwrap()
        })
        .collect();
    let deltas = (0..5)
        .map(|_| {
            (0..10)
                .map(|_| GaussianDelta {
                    mean: [rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), 0.0],
                    color: [0.0; 3],
                })
                .collect()
        })
        .collect();
    let traj = GaussianTrajectory::new(g0, deltas).unwrap();
    let d = [3.0, -2.0];
    let moved = shifted(&traj, &cam, d);
    let cfg = TrackerConfig::default();
    let (a, b) = (Tracker::new(&traj, &cam, &cfg).unwrap(), Tracker::new(&moved, &cam, &cfg).unwrap());
    for q in [Query::new(0, [24.0, 24.0]), Query::new(3, [21.3, 26.7]), Query::new(5, [25.5, 20.5])] {
        let ta = a.track(&q).unwrap();
        let tb = b.track(&Query::new(q.t, [q.p[0] + d[0], q.p[1] + d[1]])).unwrap();
        assert_eq!(ta.anchor_set, tb.anchor_set);
        assert_eq!(ta.visible, tb.visible);
        for (pa, pb) in ta.points.iter().zip(&tb.points) {
            assert!(close([pa[0] + d[0], pa[1] + d[1]], *pb, 1e-3), "{pa:?} {pb:?}");
        }
    }
}

#[test]
fn blob_leaving_at_frame_ten_stays_hidden() {
    let spec = &standard_suite(0)[16];
    let out = generate_scene(spec).unwrap();
    let gt = &out.gt_tracks[0];
    assert!(gt.visible[..10].iter().all(|&v| v) && gt.visible[10..].iter().all(|&v| !v));
    let tr = track_point(&out.gt_trajectory, &out.camera, &Query::new(0, gt.points[0]), &TrackerConfig::default()).unwrap();
    assert!(tr.visible[10..].iter().all(|&v| !v), "{:?}", tr.visible);
    for t in 0..10 {
        let e = ((tr.points[t][0] - gt.points[t][0]).powi(2) + (tr.points[t][1] - gt.points[t][1]).powi(2)).sqrt();
        assert!(e <= 1.0, "frame {t}: error {e}");
    }
}

#[test]
fn translating_blob_is_tracked_within_a_pixel() {
    for spec in &standard_suite(0)[..5] {
        let out = generate_scene(spec).unwrap();
        let tracker = Tracker::new(&out.gt_trajectory, &out.camera, &TrackerConfig::default()).unwrap();
        for gt in &out.gt_tracks {
            let tr = tracker.track(&Query::new(0, gt.points[0])).unwrap();
            for (p, g) in tr.points.iter().zip(&gt.points) {
                assert!(close(*p, *g, 1.0), "{p:?} vs {g:?}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn query_is_pinned_and_anchors_fixed(seed in 0u64..1000, t in 0usize..4, x in 0.0f64..24.0, y in 0.0f64..24.0) {
        let cam = Camera::default_for(24, 24);
        let traj = common::random_trajectory(&mut common::rng(seed), &cam, 8, 4);
        let cfg = TrackerConfig::default();
        let q = Query::new(t, [x, y]);
        let tracker = Tracker::new(&traj, &cam, &cfg).unwrap();
        let tr = tracker.track(&q).unwrap();
        prop_assert_eq!(tr.points[t], q.p);
        prop_assert_eq!(&tr.anchor_set, &tracker.select_anchors(&q).unwrap());
        prop_assert_eq!(tr.anchor_set.len(), 8);
        prop_assert!(tr.points.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
        for (s, p) in tr.points.iter().enumerate() {
            let (omega, pi) = tracker.anchor_state(&tr.anchor_set, *p, s).unwrap();
            let total: f64 = pi.iter().sum();
            if omega >= cfg.tau_vis {
                prop_assert!((1.0 - 1e-4..=1.0).contains(&total));
            }
            prop_assert_eq!(tr.visible[s], omega >= cfg.tau_vis && cam.contains(*p));
        }
    }
}
