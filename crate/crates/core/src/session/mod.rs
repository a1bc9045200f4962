//! End-to-end scan sessions on the simulated world: plan from a template,
//! sweep with confidence correction and camera monitoring, compensate
//! detected motions, compound and score against ground truth.

mod config;
mod report;

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use config::{HandEyeParams, RandomMotion, SessionConfig, Thresholds};
pub use report::{EventReport, Outcome, PlanningReport, SessionReport};

use crate::compensate::{
    compound_sweeps, evaluate_emc_with_gate, fine_adjust_poses, inplane_adjust, register_motion, retarget_trajectory,
    stitching_gap, BreakPoint, CompensateError, CompoundVolume, SweepFrame, SweepRecord,
};
use crate::confidence::{analyze_frame, update_lookahead, ConfidenceError};
use crate::geom::ply::{load_ply, save_ply};
use crate::geom::{poisson_disc_sample, GeomError, KdTree, PointCloud, RigidTransform, Vec3};
use crate::imaging::{load_mask, load_pgm16, save_mask, save_pgm16, ImageError};
use crate::monitor::{mask_to_cloud, CameraModel, DepthMap, DetectionMode, Mask, MonitorError, MotionDetector};
use crate::planner::{
    extract_centerline, hand_eye_calibrate, orient_waypoints, project_centerline_to_surface, transfer_trajectory,
    CalibrationSet, HandEyeFit, PlannerError, Trajectory,
};
use crate::registration::{align, AlignParams, RegistrationError, RegistrationResult};
use crate::simworld::{
    apply_motion, depth_from_u16, depth_to_u16, gen_phantom, render_bmode, render_camera_view, simulate_contact_step,
    CameraRenderParams, MotionStep, Occluder, Phantom, SimError,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Compensate(#[from] CompensateError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Independent stream seeds derived from the session seed.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_CAPTURE: u64 = 1;
const TAG_BMODE: u64 = 2;
const TAG_MOTION: u64 = 3;
const TAG_HAND_EYE: u64 = 4;
const TAG_TEMPLATE: u64 = 5;

/// One depth-camera capture and the arm cloud extracted from it.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraCapture {
    pub mask: Mask,
    /// Optical depth, mm.
    pub depth: DepthMap,
    /// Arm cloud in the (calibrated) base frame.
    pub cloud: PointCloud<f64>,
}

impl CameraCapture {
    /// Writes `mask.pgm`, `depth.pgm` (16-bit mm) and `cloud.ply`.
    pub fn save(&self, dir: &Path) -> Result<(), SessionError> {
        std::fs::create_dir_all(dir)?;
        save_mask(&dir.join("mask.pgm"), &self.mask)?;
        save_pgm16(&dir.join("depth.pgm"), &depth_to_u16(&self.depth))?;
        save_ply(dir.join("cloud.ply"), &self.cloud)?;
        Ok(())
    }

    /// Reads a saved capture; depth comes back rounded to whole mm.
    pub fn load(dir: &Path) -> Result<Self, SessionError> {
        Ok(Self {
            mask: load_mask(&dir.join("mask.pgm"))?,
            depth: depth_from_u16(&load_pgm16(&dir.join("depth.pgm"))?),
            cloud: load_ply(dir.join("cloud.ply"))?,
        })
    }
}

/// Everything the planning stage produces.
#[derive(Clone, Debug)]
pub struct Plan {
    pub phantom: Phantom,
    /// Calibration with the estimated hand-eye transform.
    pub calib: CalibrationSet,
    pub hand_eye: Option<HandEyeFit<f64>>,
    /// The camera as the system believes it is placed.
    pub camera: CameraModel,
    pub capture: CameraCapture,
    /// Exposed (upper) template surface, as registered.
    pub template_surface: PointCloud<f64>,
    pub template_artery: PointCloud<f64>,
    pub camera_from_template: RigidTransform<f64>,
    pub registration: RegistrationResult<f64>,
    pub trajectory: Trajectory<f64>,
}

fn load_calibration(cfg: &SessionConfig) -> Result<CalibrationSet, SessionError> {
    let calib = match &cfg.calibration_file {
        Some(p) => CalibrationSet::load(p)?,
        None => CalibrationSet::default(),
    };
    calib.validate()?;
    Ok(calib)
}

/// Hand-eye pairs from markers spread over the table workspace.
fn calibrate_hand_eye(cfg: &SessionConfig) -> Result<HandEyeFit<f64>, SessionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, TAG_HAND_EYE));
    let noise = Normal::new(0.0, cfg.hand_eye.noise / 3f64.sqrt()).map_err(|e| SessionError::Config(e.to_string()))?;
    let unit = rand_distr::Uniform::new(-1.0, 1.0).expect("valid range");
    let inv = cfg.camera.pose.inverse();
    let pairs: Vec<(Vec3<f64>, Vec3<f64>)> = (0..cfg.hand_eye.pairs)
        .map(|_| {
            let base = Vec3::new(
                500.0 + 250.0 * unit.sample(&mut rng),
                200.0 * unit.sample(&mut rng),
                100.0 + 100.0 * unit.sample(&mut rng),
            );
            let e = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            (inv.apply(&base) + e, base)
        })
        .collect();
    Ok(hand_eye_calibrate(&pairs)?)
}

fn capture(
    phantom: &Phantom,
    cfg: &SessionConfig,
    perceived: &CameraModel,
    occluder: Option<Occluder>,
    seed: u64,
) -> Result<CameraCapture, SessionError> {
    let params = CameraRenderParams {
        depth_noise: cfg.depth_noise,
        occluder,
        seed,
    };
    let view = render_camera_view(phantom, &cfg.camera, &params)?;
    let cloud = mask_to_cloud(&view.mask, &view.depth, perceived, &cfg.cloud)?;
    Ok(CameraCapture {
        mask: view.mask,
        depth: view.depth,
        cloud,
    })
}

/// Noise-free silhouette, as the monitor sees it.
fn monitor_mask(phantom: &Phantom, cam: &CameraModel) -> Result<Mask, SessionError> {
    let params = CameraRenderParams {
        depth_noise: 0.0,
        ..Default::default()
    };
    Ok(render_camera_view(phantom, cam, &params)?.mask)
}

/// Planning: hand-eye calibration, template-to-camera registration,
/// centerline extraction, surface projection, probe orientation and
/// transfer into the robot base frame.
pub fn plan_session(cfg: &SessionConfig) -> Result<Plan, SessionError> {
    cfg.validate()?;
    let phantom = gen_phantom(cfg.seed, &cfg.phantom)?;
    let mut calib = load_calibration(cfg)?;
    let hand_eye = if cfg.hand_eye.pairs > 0 {
        let fit = calibrate_hand_eye(cfg)?;
        info!("hand-eye residual {:.3} mm", fit.residual_rms);
        calib.hand_eye = fit.transform;
        Some(fit)
    } else {
        None
    };
    let camera = CameraModel {
        pose: calib.hand_eye,
        ..cfg.camera.clone()
    };
    let capture = capture(&phantom, cfg, &camera, None, sub_seed(cfg.seed, TAG_CAPTURE))?;

    // the preoperative template: the phantom's own model, of which only
    // the exposed upper surface can be matched to a top-down view
    let full = phantom.surface_local();
    let normals = full.normals().expect("phantom surface carries normals");
    let upper = full.filter(|i, _| normals[i].z > 0.0);
    let template_seed = sub_seed(cfg.seed, TAG_TEMPLATE);
    let template_surface = poisson_disc_sample(&upper.without_normals(), cfg.template_spacing, template_seed);
    let template_artery = phantom.artery_local(1.0, 12);

    let camera_cloud = poisson_disc_sample(&capture.cloud, cfg.template_spacing, template_seed)
        .transformed(&calib.hand_eye.inverse());
    let al = align(&camera_cloud, &template_surface, None, &AlignParams::default())?;
    let camera_from_template = al.transform.inverse();
    info!(
        "template registration: {} + {} points, rms {:.3} mm after {} iterations",
        camera_cloud.len(),
        template_surface.len(),
        al.icp.final_mse(),
        al.icp.iterations
    );

    let d_in = cfg.thresholds.d_in;
    let centers = extract_centerline(&template_artery, d_in)?;
    let keys = project_centerline_to_surface(&centers, full, cfg.thresholds.k_st)?;
    let local = orient_waypoints(&keys, full, d_in)?;
    let mut trajectory = transfer_trajectory(&local, &camera_from_template, &calib.hand_eye);
    if let Some(n) = cfg.max_waypoints {
        if n < trajectory.len() {
            trajectory = Trajectory::new(trajectory.waypoints()[..n].to_vec(), trajectory.spacing())?;
        }
    }
    Ok(Plan {
        phantom,
        calib,
        hand_eye,
        camera,
        capture,
        template_surface,
        template_artery,
        camera_from_template,
        registration: al.icp,
        trajectory,
    })
}

/// One motion event with the data needed to replay its compensation.
#[derive(Clone, Debug)]
pub struct EventData {
    pub report: EventReport,
    /// Ground-truth motion of the phantom.
    pub truth: RigidTransform<f64>,
    pub before: CameraCapture,
    pub after: CameraCapture,
    /// Remaining trajectory after retargeting; absent when aborted.
    pub retargeted: Option<Trajectory<f64>>,
}

/// Full result of a session.
#[derive(Clone, Debug)]
pub struct SessionOutput {
    pub config: SessionConfig,
    pub report: SessionReport,
    pub plan: Plan,
    /// Phantom at the end of the session.
    pub phantom: Phantom,
    pub events: Vec<EventData>,
    /// Sweeps with the poses they were imaged at.
    pub sweeps: Vec<SweepRecord>,
    /// Sweeps after fine and in-plane adjustment.
    pub compensated: Vec<SweepRecord>,
    pub volume: CompoundVolume,
    pub uncompensated_volume: CompoundVolume,
}

struct Pending {
    t_mc: RigidTransform<f64>,
}

/// Where the scan loop is.
struct ScanState<'a> {
    cfg: &'a SessionConfig,
    plan: &'a Plan,
    phantom: Phantom,
    trajectory: Trajectory<f64>,
    /// Plan index of `trajectory[0]`.
    offset: usize,
    sweeps: Vec<SweepRecord>,
    compensated: Vec<SweepRecord>,
    events: Vec<EventData>,
    frames: u64,
    shadow_corrections: usize,
    stitching_gaps: Vec<f64>,
    uncompensated_gaps: Vec<f64>,
}

impl ScanState<'_> {
    /// Contact step, B-mode and confidence check at local waypoint `i`;
    /// a detected shadow corrects the orientation ahead and re-images once.
    fn image_waypoint(&mut self, i: usize) -> Result<SweepFrame, SessionError> {
        let cfg = self.cfg;
        let bmode = crate::simworld::BmodeParams {
            seed: sub_seed(cfg.seed, TAG_BMODE),
            ..cfg.bmode.clone()
        };
        let mut attempt = 0;
        loop {
            let target = self.trajectory.waypoints()[i].pose;
            let exec = simulate_contact_step(&target, &self.phantom, &cfg.contact)?;
            let frame = render_bmode(&self.phantom, &exec, &self.plan.calib, &bmode, self.frames)?;
            self.frames += 1;
            let check = analyze_frame(&frame.image, &cfg.confidence, cfg.thresholds.t_com, &self.plan.calib);
            match check {
                Ok(c) if c.shadow_detected && attempt == 0 => {
                    info!("waypoint {}: shadow, correcting by {:.1} deg", self.offset + i, -c.theta_deg);
                    self.trajectory = update_lookahead(&self.trajectory, i, c.theta_deg, cfg.thresholds.n_up)?.trajectory;
                    self.shadow_corrections += 1;
                    attempt += 1;
                    continue;
                }
                Ok(_) => {}
                Err(e) => warn!("waypoint {}: confidence check skipped: {e}", self.offset + i),
            }
            return Ok(SweepFrame::new(self.offset + i, exec, frame.image, frame.vessel_mask));
        }
    }

    /// Lands the earlier sweeps on the newly started one.
    fn stitch(&mut self, pending: Pending) -> Result<(), SessionError> {
        let s = self.sweeps.len() - 1;
        let first = self.sweeps[s].first().expect("resumed sweep has a frame").clone();
        let last = self.sweeps[s - 1].last().expect("break point frame").clone();
        let calib = &self.plan.calib;
        // the finished sweep enters the compensated set with its imaged poses
        while self.compensated.len() < s {
            self.compensated.push(self.sweeps[self.compensated.len()].clone());
        }
        if self.cfg.compensate {
            // earlier sweeps already share the finished sweep's frame, so
            // the same rigid correction applies to all of them
            for j in 0..s {
                let adjusted = fine_adjust_poses(&self.compensated[j], &pending.t_mc, &last.pose, &first.pose)?;
                self.compensated[j] =
                    inplane_adjust(&adjusted, last.centroid, first.centroid, calib, first.pose.rotation())?;
            }
        }
        for (gaps, before) in [
            (&mut self.stitching_gaps, &self.compensated[s - 1]),
            (&mut self.uncompensated_gaps, &self.sweeps[s - 1]),
        ] {
            match stitching_gap(before, &self.sweeps[s], calib) {
                Ok(g) => gaps.push(g),
                Err(e) => {
                    warn!("{e}");
                    gaps.push(f64::NAN)
                }
            }
        }
        Ok(())
    }

    /// Stops on a detected motion, registers the clouds and either
    /// retargets the rest of the plan or aborts.
    fn handle_motion(
        &mut self,
        waypoint: usize,
        event: crate::monitor::MotionEvent,
        truth: RigidTransform<f64>,
        before: &CameraCapture,
        fiducial_before: Vec3<f64>,
    ) -> Result<Option<Pending>, SessionError> {
        let cfg = self.cfg;
        let last = self.sweeps.last().and_then(|s| s.last()).expect("motion after the first frame").clone();
        let occluder = if cfg.occluder_fraction > 0.0 {
            let full = monitor_mask(&self.phantom, &cfg.camera)?;
            let clamp = |x: f64, n: usize| x.round().clamp(0.0, n as f64 - 1.0) as usize;
            // the robot stays at the break point; its probe hides the arm there
            cfg.camera.project(last.pose.translation()).and_then(|(u, v, _)| {
                let site = (clamp(u, full.width()), clamp(v, full.height()));
                Occluder::around(&full, site, cfg.occluder_fraction, 400.0)
            })
        } else {
            None
        };
        let seed = sub_seed(cfg.seed, TAG_CAPTURE + 16 * (self.events.len() as u64 + 1));
        let after = capture(&self.phantom, cfg, &self.plan.camera, occluder, seed)?;
        let reg = register_motion(&before.cloud, &after.cloud, &cfg.registration)?;
        let t_mc = if cfg.sabotage_registration {
            warn!("registration sabotaged: using the identity");
            RigidTransform::identity()
        } else {
            reg.transform
        };
        let gate = cfg.thresholds.emc_gate;
        let fiducial_after = self.phantom.fiducial();
        let result = evaluate_emc_with_gate(&fiducial_before, &fiducial_after, &t_mc, gate);
        info!(
            "motion at waypoint {waypoint} (dice {:.3}): e_mc {:.2} mm, {}",
            event.dice,
            result.e_mc,
            if result.accepted { "accepted" } else { "rejected" }
        );
        let bp = BreakPoint {
            waypoint: last.waypoint,
            probe_pose: last.pose,
            frame: self.sweeps.last().map_or(0, |s| s.len() - 1),
        };
        let report = EventReport {
            waypoint,
            detection_frame: event.frame,
            dice: event.dice,
            break_waypoint: bp.waypoint,
            source_points: reg.source_points,
            target_points: reg.target_points,
            mse_history: reg.mse_history,
            plane_history: reg.plane_history,
            transform: t_mc,
            fiducial_before,
            fiducial_after,
            e_mc: result.e_mc,
            accepted: result.accepted,
        };
        let local = BreakPoint {
            waypoint: bp.waypoint - self.offset,
            ..bp
        };
        let retargeted = match retarget_trajectory(&self.trajectory, &local, &result, gate) {
            Ok(t) => Some(t),
            Err(CompensateError::Rejected { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        self.events.push(EventData {
            report,
            truth,
            before: before.clone(),
            after,
            retargeted: retargeted.clone(),
        });
        let Some(traj) = retargeted else {
            return Ok(None);
        };
        self.trajectory = traj;
        self.offset = bp.waypoint;
        self.sweeps.push(SweepRecord::new());
        Ok(Some(Pending { t_mc }))
    }
}

fn motion_script(cfg: &SessionConfig) -> Vec<MotionStep> {
    let mut steps = cfg.motion.steps.clone();
    if let Some(r) = &cfg.random_motion {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, TAG_MOTION));
        steps.push(MotionStep::random(&mut rng, r.trigger, r.rect, r.max_yaw_deg));
    }
    steps
}

/// RMS distance of the points to the phantom's current centerline.
pub fn vessel_rms(points: &[Vec3<f64>], phantom: &Phantom) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let tree = KdTree::new(&phantom.centerline_base(0.1));
    let sum: f64 = points.iter().map(|p| tree.nearest(p).map_or(0.0, |n| n.dist_sq)).sum();
    Some((sum / points.len() as f64).sqrt())
}

/// Runs planning, scanning, compensation, compounding and scoring.
///
/// Planning errors are returned; later stage errors end the session with
/// [`Outcome::Failed`] and are recorded in the report.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutput, SessionError> {
    let mut runtimes = Vec::new();
    let t0 = Instant::now();
    let plan = plan_session(cfg)?;
    runtimes.push(("plan".to_string(), t0.elapsed().as_secs_f64()));

    let t1 = Instant::now();
    let mut st = ScanState {
        cfg,
        plan: &plan,
        phantom: plan.phantom.clone(),
        trajectory: plan.trajectory.clone(),
        offset: 0,
        sweeps: vec![SweepRecord::new()],
        compensated: Vec::new(),
        events: Vec::new(),
        frames: 0,
        shadow_corrections: 0,
        stitching_gaps: Vec::new(),
        uncompensated_gaps: Vec::new(),
    };
    let (outcome, error) = match scan(&mut st) {
        Ok(o) => (o, None),
        Err(e) => {
            warn!("session failed: {e}");
            (Outcome::Failed, Some(e.to_string()))
        }
    };
    runtimes.push(("scan".to_string(), t1.elapsed().as_secs_f64()));

    let t2 = Instant::now();
    // sweeps not yet stitched keep their imaged poses
    while st.compensated.len() < st.sweeps.len() {
        st.compensated.push(st.sweeps[st.compensated.len()].clone());
    }
    let volume = compound_sweeps(&st.compensated, &plan.calib, cfg.compound_mode)?;
    let uncompensated_volume = compound_sweeps(&st.sweeps, &plan.calib, cfg.compound_mode)?;
    runtimes.push(("compound".to_string(), t2.elapsed().as_secs_f64()));

    let report = SessionReport {
        seed: cfg.seed,
        outcome,
        error,
        planning: PlanningReport {
            hand_eye_rms: plan.hand_eye.as_ref().map_or(0.0, |h| h.residual_rms),
            camera_points: plan.capture.cloud.len(),
            template_points: plan.template_surface.len(),
            registration_history: plan.registration.mse_history.clone(),
            waypoints: plan.trajectory.len(),
        },
        frames: st.sweeps.iter().map(SweepRecord::len).sum(),
        shadow_corrections: st.shadow_corrections,
        sweeps: st.sweeps.len(),
        events: st.events.iter().map(|e| e.report.clone()).collect(),
        stitching_gaps: st.stitching_gaps.clone(),
        uncompensated_gaps: st.uncompensated_gaps.clone(),
        volume_points: volume.len(),
        vessel_rms: vessel_rms(&volume.points, &st.phantom),
        vessel_rms_uncompensated: vessel_rms(&uncompensated_volume.points, &st.phantom),
        runtimes,
    };
    for (stage, secs) in &report.runtimes {
        info!("{stage}: {secs:.2} s");
    }
    Ok(SessionOutput {
        config: cfg.clone(),
        report,
        phantom: st.phantom,
        events: st.events,
        sweeps: st.sweeps,
        compensated: st.compensated,
        volume,
        uncompensated_volume,
        plan,
    })
}

fn scan(st: &mut ScanState) -> Result<Outcome, SessionError> {
    let cfg = st.cfg;
    let steps = motion_script(cfg);
    let mut applied = vec![false; steps.len()];
    let mut detector = MotionDetector::new(cfg.thresholds.t_dice, DetectionMode::Reference)?;
    detector.observe(&st.plan.capture.mask)?;
    let mut before = st.plan.capture.clone();
    let mut fiducial = st.phantom.fiducial();
    let mut truth = RigidTransform::identity();
    let mut pending = None;
    let mut i = 0;
    while i < st.trajectory.len() {
        let waypoint = st.offset + i;
        for (k, step) in steps.iter().enumerate() {
            if !applied[k] && step.trigger <= waypoint {
                truth = apply_motion(&mut st.phantom, step)?.compose(&truth);
                applied[k] = true;
            }
        }
        let mask = monitor_mask(&st.phantom, &cfg.camera)?;
        if let Some(event) = detector.observe(&mask)? {
            match st.handle_motion(waypoint, event, truth, &before, fiducial)? {
                Some(p) => pending = Some(p),
                None => return Ok(Outcome::Aborted),
            }
            before = st.events.last().expect("event recorded").after.clone();
            fiducial = st.phantom.fiducial();
            truth = RigidTransform::identity();
            detector.reset(&mask);
            i = 0;
            continue;
        }
        let frame = st.image_waypoint(i)?;
        st.sweeps.last_mut().expect("a sweep is open").push(frame);
        if let Some(p) = pending.take() {
            st.stitch(p)?;
        }
        i += 1;
    }
    if steps.iter().zip(&applied).any(|(_, a)| !a) {
        warn!("motion steps after the last waypoint were not applied");
    }
    Ok(Outcome::Completed)
}

impl Plan {
    /// Writes the planning artifacts under `dir`:
    ///
    /// ```text
    /// config.toml  calibration.toml
    /// phantom/{surface.ply, centerline_start.csv}
    /// plan/{camera/, template_surface.ply, template_artery.ply,
    ///       trajectory.csv, registration_history.csv}
    /// ```
    pub fn save(&self, dir: &Path, cfg: &SessionConfig) -> Result<(), SessionError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
        self.calib.save(&dir.join("calibration.toml"))?;

        let ph = dir.join("phantom");
        std::fs::create_dir_all(&ph)?;
        save_ply(ph.join("surface.ply"), &self.phantom.surface_base())?;
        std::fs::write(ph.join("centerline_start.csv"), points_csv(&self.phantom.centerline_base(1.0)))?;

        let pl = dir.join("plan");
        self.capture.save(&pl.join("camera"))?;
        save_ply(pl.join("template_surface.ply"), &self.template_surface)?;
        save_ply(pl.join("template_artery.ply"), &self.template_artery)?;
        self.trajectory.save_csv(&pl.join("trajectory.csv"))?;
        std::fs::write(pl.join("registration_history.csv"), self.registration.history_csv())?;
        Ok(())
    }
}

/// `x,y,z` rows.
pub fn points_csv(points: &[Vec3<f64>]) -> String {
    let mut s = String::from("x,y,z\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    s
}

impl SessionOutput {
    /// Persists every artifact under `dir`:
    ///
    /// ```text
    /// (everything Plan::save writes)  report.toml  metrics.csv
    /// phantom/centerline_end.csv
    /// events/event_NN/{before/, after/, trajectory.csv, icp_history.csv,
    ///                  plane_history.csv}
    /// sweeps/sweep_NN/{poses.csv, poses_compensated.csv, frame_*.pgm, mask_*.pgm}
    /// volume.ply  volume_uncompensated.ply
    /// ```
    pub fn save(&self, dir: &Path) -> Result<(), SessionError> {
        self.plan.save(dir, &self.config)?;
        std::fs::write(dir.join("report.toml"), self.report.to_toml())?;
        std::fs::write(dir.join("metrics.csv"), self.report.metrics_csv())?;
        std::fs::write(
            dir.join("phantom").join("centerline_end.csv"),
            points_csv(&self.phantom.centerline_base(1.0)),
        )?;

        for (k, e) in self.events.iter().enumerate() {
            let ed = dir.join("events").join(format!("event_{k:02}"));
            e.before.save(&ed.join("before"))?;
            e.after.save(&ed.join("after"))?;
            if let Some(t) = &e.retargeted {
                t.save_csv(&ed.join("trajectory.csv"))?;
            }
            std::fs::write(ed.join("icp_history.csv"), history_csv(&e.report.mse_history))?;
            std::fs::write(ed.join("plane_history.csv"), history_csv(&e.report.plane_history))?;
        }
        for (k, (raw, comp)) in self.sweeps.iter().zip(&self.compensated).enumerate() {
            let sd = dir.join("sweeps").join(format!("sweep_{k:02}"));
            raw.save(&sd)?;
            std::fs::write(sd.join("poses_compensated.csv"), comp.poses_csv())?;
        }
        self.volume.save(&dir.join("volume.ply"))?;
        self.uncompensated_volume.save(&dir.join("volume_uncompensated.ply"))?;
        Ok(())
    }
}

/// `iteration,mse` rows.
pub fn history_csv(history: &[f64]) -> String {
    let mut s = String::from("iteration,mse\n");
    for (i, v) in history.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    s
}

/// Sweeps of a saved session, with imaged or compensated poses.
pub fn load_sweeps(dir: &Path, compensated: bool) -> Result<Vec<SweepRecord>, SessionError> {
    let root = dir.join("sweeps");
    let mut out = Vec::new();
    for k in 0.. {
        let sd = root.join(format!("sweep_{k:02}"));
        if !sd.is_dir() {
            break;
        }
        let poses = if compensated { "poses_compensated.csv" } else { "poses.csv" };
        out.push(SweepRecord::load_with_poses(&sd, poses)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
