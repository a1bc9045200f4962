//! Acceptance suite: every criterion runs, prints one PASS/FAIL line and
//! the run fails if any of them failed. Built without the libtest harness
//! so the lines are always shown.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanpilot_core::compensate::{
    evaluate_emc, fine_adjust_poses, inplane_adjust, register_motion, stitching_gap, MotionRegistrationParams,
    SweepFrame, SweepRecord,
};
use scanpilot_core::confidence::{analyze_frame, confidence_map, lookahead_weights, update_lookahead, ConfidenceParams};
use scanpilot_core::geom::{poisson_disc_sample_count, principal_axes, with_estimated_normals};
use scanpilot_core::imaging::Grid;
use scanpilot_core::monitor::{
    dice_coefficient, mask_to_cloud, CameraModel, CloudParams, DetectionMode, MotionDetector,
};
use scanpilot_core::planner::{pixel_to_base, CalibrationSet, ScanWaypoint, Trajectory};
use scanpilot_core::registration::{align, icp_refine, AlignParams, IcpParams};
use scanpilot_core::session::{run_session, Outcome, SessionConfig};
use scanpilot_core::simworld::{
    apply_motion, gen_phantom, render_bmode, render_camera_view, simulate_contact_step, BmodeParams,
    CameraRenderParams, ContactParams, MotionScript, MotionStep, Occluder, Phantom, PhantomParams,
};
use scanpilot_core::{Mat3, PointCloud, RigidTransform, Vec3};

/// Detail line on success, reason on failure.
type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! require {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// Rotation of up to `max_deg` about `center` followed by a shift of up to
/// `max_mm`.
fn random_offset_about(rng: &mut ChaCha8Rng, center: &Vec3, max_mm: f64, max_deg: f64) -> RigidTransform {
    RigidTransform::from_translation(*center)
        .compose(&random_offset(rng, max_mm, max_deg))
        .compose(&RigidTransform::from_translation(-center))
}

fn random_offset(rng: &mut ChaCha8Rng, max_mm: f64, max_deg: f64) -> RigidTransform {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let t = dir.normalize() * rng.random_range(0.0..max_mm);
    RigidTransform::from_axis_angle(&axis, rng.random_range(-max_deg..max_deg).to_radians(), t)
}

/// Arm surface seen by the overhead camera, table removed.
fn camera_cloud(ph: &Phantom, noise: f64, occluder: Option<f64>, seed: u64) -> PointCloud {
    let cam = CameraModel::default();
    let mut p = CameraRenderParams { depth_noise: noise, seed, ..Default::default() };
    if let Some(frac) = occluder {
        let full = render_camera_view(ph, &cam, &CameraRenderParams::default()).unwrap();
        // probe and robot over the scan site on the ridge
        let site = ph.pose.apply(&Vec3::new(60.0, 0.0, 2.0 * ph.r0(60.0)));
        let (u, v, _) = cam.project(&site).unwrap();
        p.occluder = Occluder::around(&full.mask, (u as usize, v as usize), frac, 400.0);
    }
    let v = render_camera_view(ph, &cam, &p).unwrap();
    mask_to_cloud(&v.mask, &v.depth, &cam, &CloudParams { z_cut: 150.0, ..Default::default() }).unwrap()
}

/// Target of ≈1379 points and a ≈925-point source drawn from it, both with
/// normals facing the camera.
fn arm_pair(seed: u64) -> (PointCloud, PointCloud) {
    let ph = gen_phantom(seed, &PhantomParams::default()).unwrap();
    let dense = camera_cloud(&ph, 0.0, None, 0);
    let target = poisson_disc_sample_count(&dense, 1379, seed);
    let target = with_estimated_normals(&target, 16, &CameraModel::default().position()).unwrap();
    let source = poisson_disc_sample_count(&target, 925, seed + 1);
    (source, target)
}

fn non_increasing(h: &[f64]) -> bool {
    h.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

fn c1_registration_convergence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = (0.0f64, 0usize);
    let started = Instant::now();
    let trials = 10;
    for trial in 0..trials {
        let (source, target) = arm_pair(trial);
        let offset = random_offset_about(&mut rng, &source.centroid().unwrap(), 30.0, 20.0);
        let moved = source.transformed(&offset.inverse());
        let t0 = Instant::now();
        let params = AlignParams { icp: IcpParams { max_iterations: 50, ..Default::default() }, ..Default::default() };
        let al = align(&moved, &target, None, &params).map_err(|e| e.to_string())?;
        let r = &al.icp;
        let secs = t0.elapsed().as_secs_f64();
        require!(non_increasing(&r.mse_history), "trial {trial}: history increases");
        let below = r.mse_history.iter().position(|m| *m < 0.5);
        require!(below.is_some(), "trial {trial}: rms {:.3} mm after {} iterations", r.final_mse(), r.iterations);
        require!(secs < 1.0, "trial {trial}: {secs:.2} s");
        worst = (worst.0.max(r.final_mse()), worst.1.max(below.unwrap()));
    }
    Ok(format!(
        "{trials} trials, {}/{} points, worst final rms {:.3} mm, below 0.5 mm by iteration {}, {:.2} s total",
        arm_pair(0).0.len(),
        arm_pair(0).1.len(),
        worst.0,
        worst.1,
        started.elapsed().as_secs_f64()
    ))
}

/// Drops the points whose position along the cloud's long axis falls
/// outside the `[lo, hi]` quantile band.
fn crop(cloud: &PointCloud, lo: f64, hi: f64) -> PointCloud {
    let pa = principal_axes(cloud).unwrap();
    let mut t: Vec<f64> = cloud.points().iter().map(|p| (p - pa.mean).dot(&pa.axes[0])).collect();
    let keep = |v: f64, t: &[f64]| {
        let q = |f: f64| t[((t.len() - 1) as f64 * f).round() as usize];
        v >= q(lo) && v <= q(hi)
    };
    let proj: Vec<f64> = t.clone();
    t.sort_by(f64::total_cmp);
    cloud.filter(|i, _| keep(proj[i], &t))
}

fn c2_crop_robustness() -> Verdict {
    let crops = [("10%", 0.10, 1.0), ("20%", 0.20, 1.0), ("40%", 0.40, 1.0), ("10%+90%", 0.10, 0.90)];
    // the target is known to be partial (at least half the source has a
    // counterpart) and the offset to stay under 20°, which also rules out
    // the limb's end-for-end flip
    let coarse = AlignParams {
        max_rotation: Some(60f64.to_radians()),
        score_overlap: 0.5,
        ..Default::default()
    };
    let mut worst = [(0.0f64, 0usize, 0.0f64); 4];
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (source, target) = arm_pair(seed);
        let c = source.centroid().unwrap();
        let offset = random_offset_about(&mut rng, &c, 30.0, 20.0);
        let moved = source.transformed(&offset.inverse());
        for (k, (name, lo, hi)) in crops.iter().enumerate() {
            let cropped = crop(&target, *lo, *hi);
            let al = align(&moved, &cropped, None, &coarse).map_err(|e| e.to_string())?;
            // final pass with pairs limited to twice the point spacing, so
            // source points past the crop stop dragging on its edge
            let fine = IcpParams {
                max_iterations: 200 - al.icp.iterations,
                rejection_distance: Some(2.0 * cropped.median_spacing()),
                ..Default::default()
            };
            let r = icp_refine(&moved, &cropped, &al.transform, &fine).map_err(|e| e.to_string())?;
            let iterations = al.icp.iterations + r.iterations;
            let (deg, mm) = (r.transform.angle_to(&offset).to_degrees(), (r.transform.apply(&c) - offset.apply(&c)).norm());
            require!(r.converged, "seed {seed} {name}: not converged after {iterations} iterations");
            // RMS over the pairs inside the rejection distance: source
            // points past the crop have no counterpart
            require!(
                r.inlier_rmse <= 5.0,
                "seed {seed} {name}: final rms {:.2} mm, {:.0}% paired",
                r.inlier_rmse,
                r.inlier_fraction * 100.0
            );
            // rules out flips and wrong rolls; a shift along the limb is
            // reported but not gated, since with the ends cropped only the
            // taper pins it
            require!(deg < 2.0, "seed {seed} {name}: rotation off by {deg:.2}°");
            let w = &mut worst[k];
            *w = (w.0.max(r.inlier_rmse), w.1.max(iterations), w.2.max(mm));
        }
    }
    let parts: Vec<String> = crops
        .iter()
        .zip(worst)
        .map(|((name, ..), (rms, it, mm))| format!("{name} {rms:.2} mm/{it} it/{mm:.1} mm shift"))
        .collect();
    Ok(format!("5 seeds, worst per crop: {}", parts.join(", ")))
}

fn c3_compensation_error() -> Verdict {
    let started = Instant::now();
    let params = MotionRegistrationParams::default();
    let mut means = Vec::new();
    for occluder in [None, Some(0.2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut errs = Vec::new();
        for trial in 0..20u64 {
            let mut ph = gen_phantom(trial, &PhantomParams::default()).unwrap();
            let before = camera_cloud(&ph, 2.0, None, 2 * trial);
            let f0 = ph.fiducial();
            let step = MotionStep::random(&mut rng, 1, [110.0, 140.0], 80.0);
            apply_motion(&mut ph, &step).unwrap();
            let after = camera_cloud(&ph, 2.0, occluder, 2 * trial + 1);
            let r = register_motion(&before, &after, &params).map_err(|e| e.to_string())?;
            errs.push(evaluate_emc(&f0, &ph.fiducial(), &r.transform).e_mc);
        }
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        means.push((mean, sd, errs.iter().cloned().fold(0.0, f64::max)));
    }
    let secs = started.elapsed().as_secs_f64();
    let [(m0, s0, x0), (m1, s1, x1)] = [means[0], means[1]];
    let detail = format!(
        "e_mc {m0:.2} ± {s0:.2} mm (max {x0:.2}) clear, {m1:.2} ± {s1:.2} mm (max {x1:.2}) with 20% occluder, {secs:.1} s"
    );
    require!(m0 <= 10.0 && m1 <= 10.0, "mean above the 10 mm gate: {detail}");
    require!((m1 - m0).abs() <= 3.0, "occluded mean differs by more than 3 mm: {detail}");
    require!(secs < 30.0, "too slow: {detail}");
    Ok(detail)
}

fn c4_registration_runtime() -> Verdict {
    let params = MotionRegistrationParams::default();
    let mut worst = 0.0f64;
    for trial in 0..5u64 {
        let mut ph = gen_phantom(40 + trial, &PhantomParams::default()).unwrap();
        let before = camera_cloud(&ph, 2.0, None, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        apply_motion(&mut ph, &MotionStep::random(&mut rng, 1, [110.0, 140.0], 80.0)).unwrap();
        let after = camera_cloud(&ph, 2.0, Some(0.2), trial + 100);
        let t0 = Instant::now();
        register_motion(&before, &after, &params).map_err(|e| e.to_string())?;
        worst = worst.max(t0.elapsed().as_secs_f64());
    }
    require!(worst < 1.0, "slowest call {worst:.3} s");
    Ok(format!("slowest of 5 calls {:.0} ms", worst * 1e3))
}

fn c5_lookahead_weights() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_sum = 0.0f64;
    let mut worst_ortho = 0.0f64;
    for _ in 0..1000 {
        let n = 16;
        let mut x = 0.0;
        let mut wps = Vec::with_capacity(n);
        for _ in 0..n {
            let frame = Mat3::from_columns(&[Vec3::x(), -Vec3::y(), -Vec3::z()]);
            wps.push(ScanWaypoint::new(RigidTransform::new(frame, Vec3::new(x, 0.0, 50.0)).unwrap()));
            x += rng.random_range(0.3..4.5);
        }
        let traj = Trajectory::new(wps, 1.0).unwrap();
        let theta = rng.random_range(-20.0..20.0);
        for n_up in 1..=10 {
            let arc: Vec<f64> = (1..=n_up).map(|j| traj.waypoints()[j].position().x).collect();
            let w = lookahead_weights(&arc).map_err(|e| e.to_string())?;
            worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
            let up = update_lookahead(&traj, 0, theta, n_up).map_err(|e| e.to_string())?;
            require!(
                (up.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
                "update weights sum to {}",
                up.weights.iter().sum::<f64>()
            );
            for (a, b) in up.trajectory.waypoints().iter().zip(traj.waypoints()) {
                require!(a.position() == b.position(), "waypoint moved");
                let r = a.orientation();
                worst_ortho = worst_ortho.max((r.transpose() * r - Mat3::identity()).abs().max());
            }
        }
    }
    require!(worst_sum <= 1e-12, "weights sum off by {worst_sum:e}");
    require!(worst_ortho <= 1e-9, "orientation off orthonormal by {worst_ortho:e}");
    Ok(format!("max |Σ−1| {worst_sum:.1e}, max orthonormality error {worst_ortho:.1e}"))
}

fn c6_confidence_properties() -> Verdict {
    let params = ConfidenceParams::default();
    let calib = CalibrationSet::default();
    let (w, h) = (calib.image_width, calib.image_height);
    let uniform = Grid::filled(w, h, 0.5);
    let t0 = Instant::now();
    let map = confidence_map(&uniform, &params).map_err(|e| e.to_string())?;
    let solve = t0.elapsed().as_secs_f64();
    let d = map.data();
    require!((0..w).all(|x| map.get(0, x) == 1.0 && map.get(h - 1, x) == 0.0), "boundary rows not 1/0");
    require!(d.iter().all(|c| (0.0..=1.0).contains(c)), "value outside [0, 1]");
    let asym = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| (map.get(y, x) - map.get(y, w - 1 - x)).abs())
        .fold(0.0, f64::max);
    require!(asym <= 1e-6, "lateral asymmetry {asym:e}");
    let flat = analyze_frame(&uniform, &params, 0.5, &calib).map_err(|e| e.to_string())?;
    require!(flat.theta_deg.abs() < 1e-9, "θ_c {} on a symmetric map", flat.theta_deg);

    // one-sided shadow from a tilted probe on the simulated arm
    let ph = gen_phantom(1, &PhantomParams::default()).unwrap();
    let r = Mat3::from_columns(&[Vec3::x(), -Vec3::y(), -Vec3::z()]);
    let upright = ph.pose.compose(&RigidTransform::new(r, Vec3::new(0.0, 0.0, 80.0)).unwrap());
    let tilted = upright.compose(&RigidTransform::from_axis_angle(&Vec3::x(), 10f64.to_radians(), Vec3::zeros()));
    let seated = simulate_contact_step(&tilted, &ph, &ContactParams::default()).map_err(|e| e.to_string())?;
    let frame = render_bmode(&ph, &seated, &calib, &BmodeParams::default(), 1).map_err(|e| e.to_string())?;
    let shadow = analyze_frame(&frame.image, &params, 0.5, &calib).map_err(|e| e.to_string())?;
    let mirrored = analyze_frame(&frame.image.mirrored(), &params, 0.5, &calib).map_err(|e| e.to_string())?;
    require!(
        (5.0..=15.0).contains(&shadow.theta_deg.abs()),
        "θ_c {:.2}° outside [5°, 15°]",
        shadow.theta_deg
    );
    require!(
        shadow.theta_deg * mirrored.theta_deg < 0.0,
        "mirroring gave {:.2}° and {:.2}°",
        shadow.theta_deg,
        mirrored.theta_deg
    );
    require!(solve < 0.1, "solve took {:.0} ms", solve * 1e3);
    Ok(format!(
        "θ_c {:.2}° for a 10° tilt, {:.2}° mirrored, asymmetry {asym:.1e}, solve {:.0} ms at {}x downsampling",
        shadow.theta_deg,
        mirrored.theta_deg,
        solve * 1e3,
        params.downsample
    ))
}

fn c7_motion_detection() -> Verdict {
    let rect = |x0: usize, x1: usize| Grid::from_fn(20, 10, |_, x| (x0..x1).contains(&x));
    let dice = |a: &Grid<bool>, b: &Grid<bool>| dice_coefficient(a, b).map_err(|e| e.to_string());
    let (left, right, mid) = (rect(0, 10), rect(10, 20), rect(5, 15));
    require!(dice(&left, &left)? == 1.0, "identical");
    require!(dice(&left, &right)? == 0.0, "disjoint");
    require!(dice(&left, &mid)? == 0.5, "half overlap");

    let cam = CameraModel::default();
    let mut ph = gen_phantom(7, &PhantomParams::default()).unwrap();
    let still: Vec<_> = (0..4)
        .map(|s| render_camera_view(&ph, &cam, &CameraRenderParams { depth_noise: 2.0, seed: s, ..Default::default() }).unwrap().mask)
        .collect();
    let mut det = MotionDetector::new(0.95, DetectionMode::Reference).map_err(|e| e.to_string())?;
    for i in 0..10_000 {
        require!(det.observe(&still[i % still.len()]).map_err(|e| e.to_string())?.is_none(), "static frame {i} triggered");
    }
    apply_motion(&mut ph, &MotionStep { trigger: 1, translation: [0.0, 15.0], yaw_deg: 0.0 }).unwrap();
    let moved = render_camera_view(&ph, &cam, &CameraRenderParams::default()).unwrap().mask;
    let overlap = dice(&still[0], &moved)?;
    require!(overlap < 0.9, "scripted shift only reduced overlap to {overlap:.3}");
    let ev = det.observe(&moved).map_err(|e| e.to_string())?;
    require!(ev.as_ref().is_some_and(|e| e.frame == 10_000), "first moved frame not flagged: {ev:?}");
    Ok(format!("10⁴ static frames quiet, 15 mm shift (dice {overlap:.3}) flagged on frame 10000"))
}

fn blank_frame(waypoint: usize, pose: RigidTransform, centroid: (f64, f64)) -> SweepFrame {
    let calib = CalibrationSet::default();
    SweepFrame {
        waypoint,
        pose,
        image: Grid::filled(calib.image_width, calib.image_height, 0.5),
        vessel_mask: Grid::filled(calib.image_width, calib.image_height, false),
        centroid: Some(centroid),
    }
}

fn c8_fine_adjustment() -> Verdict {
    let calib = CalibrationSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut pose_err, mut centroid_err, mut gap) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let before = SweepRecord {
            frames: (0..5)
                .map(|i| {
                    let c = (rng.random_range(20.0..350.0), rng.random_range(50.0..500.0));
                    blank_frame(i, random_offset(&mut rng, 300.0, 180.0), c)
                })
                .collect(),
        };
        let t_mc = random_offset(&mut rng, 100.0, 80.0);
        let t_af = random_offset(&mut rng, 400.0, 180.0);
        let ca = (rng.random_range(20.0..350.0), rng.random_range(50.0..500.0));
        let after = SweepRecord { frames: vec![blank_frame(4, t_af, ca)] };
        let last = before.last().unwrap().pose;
        let fine = fine_adjust_poses(&before, &t_mc, &last, &t_af).map_err(|e| e.to_string())?;
        pose_err = pose_err.max((fine.last().unwrap().pose.to_homogeneous() - t_af.to_homogeneous()).abs().max());
        let cb = before.last().unwrap().centroid;
        let adjusted = inplane_adjust(&fine, cb, Some(ca), &calib, t_af.rotation()).map_err(|e| e.to_string())?;
        let pb = pixel_to_base(cb.unwrap().0, cb.unwrap().1, &adjusted.last().unwrap().pose, &calib).unwrap();
        let pa = pixel_to_base(ca.0, ca.1, &t_af, &calib).unwrap();
        centroid_err = centroid_err.max((pa - pb).norm());
        gap = gap.max(stitching_gap(&adjusted, &after, &calib).map_err(|e| e.to_string())?);
    }
    require!(pose_err <= 1e-9, "last pose off by {pose_err:e}");
    require!(centroid_err <= 1e-6, "boundary centroids {centroid_err:e} mm apart");
    require!(gap < 1e-3, "stitching gap {gap:e} mm");
    Ok(format!("200 cases: pose {pose_err:.1e}, centroid {centroid_err:.1e} mm, gap {gap:.1e} mm"))
}

fn c9_end_to_end() -> Verdict {
    let cfg = SessionConfig {
        motion: MotionScript { steps: vec![MotionStep { trigger: 40, translation: [35.0, -25.0], yaw_deg: 20.0 }] },
        occluder_fraction: 0.2,
        ..Default::default()
    };
    let t0 = Instant::now();
    let out = run_session(&cfg).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let r = &out.report;
    require!(r.outcome == Outcome::Completed, "outcome {:?} {:?}", r.outcome, r.error);
    require!(r.events.len() == 1, "{} motion events", r.events.len());
    let e_mc = r.events[0].e_mc;
    let rms = r.vessel_rms.ok_or("no vessel reconstructed")?;
    require!(rms <= e_mc + 1.0, "vessel rms {rms:.2} mm above e_mc {e_mc:.2} + 1 mm");
    require!(secs < 120.0, "session took {secs:.0} s");

    let control = run_session(&SessionConfig { compensate: false, ..cfg }).map_err(|e| e.to_string())?;
    let gap = control.report.stitching_gaps.first().copied().ok_or("control has no stitch")?;
    require!(gap > 10.0, "uncompensated gap only {gap:.2} mm");
    Ok(format!(
        "{} frames, e_mc {e_mc:.2} mm, vessel rms {rms:.3} mm, gap {:.1e} mm; control gap {gap:.1} mm, rms {:.1} mm; {secs:.1} s",
        r.frames,
        r.stitching_gaps[0],
        control.report.vessel_rms.unwrap_or(f64::NAN)
    ))
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn c10_determinism() -> Verdict {
    let cfg = SessionConfig {
        seed: 5,
        max_waypoints: Some(20),
        occluder_fraction: 0.2,
        motion: MotionScript { steps: vec![MotionStep { trigger: 10, translation: [-30.0, 40.0], yaw_deg: -25.0 }] },
        ..Default::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_session(&cfg).map_err(|e| e.to_string())?.save(d.path()).map_err(|e| e.to_string())?;
    }
    let (a, b) = (read_tree(dirs[0].path()), read_tree(dirs[1].path()));
    require!(a.keys().eq(b.keys()), "different file sets");
    let differing: Vec<_> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k.clone()).collect();
    require!(differing.is_empty(), "files differ: {differing:?}");
    Ok(format!("{} files byte-identical across two runs", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("registration convergence", c1_registration_convergence),
        ("crop robustness", c2_crop_robustness),
        ("compensation error", c3_compensation_error),
        ("registration runtime", c4_registration_runtime),
        ("lookahead weights", c5_lookahead_weights),
        ("confidence map properties", c6_confidence_properties),
        ("dice and motion detection", c7_motion_detection),
        ("fine adjustment exactness", c8_fine_adjustment),
        ("end-to-end geometry", c9_end_to_end),
        ("determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let tag = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == tag || name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {tag:>2} PASS {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {tag:>2} FAIL {name}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
