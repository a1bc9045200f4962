//! `scanpilot`: runs simulated motion-aware ultrasound scan sessions and
//! their stages from the command line.
//!
//! Exit status is 0 on success, 2 when a compensation failed the fiducial
//! gate and the sweep was aborted, and 1 on any error. `SCANPILOT_LOG`
//! sets the log level (default `info`); logs go to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use scanpilot_core::compensate::{compound_sweeps, evaluate_emc_with_gate, register_motion, stitching_gap, CompoundVolume};
use scanpilot_core::geom::ply::save_ply;
use scanpilot_core::planner::CalibrationSet;
use scanpilot_core::session::{
    load_sweeps, plan_session, points_csv, run_session, CameraCapture, Outcome, SessionConfig, SessionReport,
};
use scanpilot_core::simworld::gen_phantom;

#[derive(Parser, Debug)]
#[command(name = "scanpilot", version, about = "Simulated motion-aware robotic ultrasound scanning")]
struct Cli {
    /// Session config (TOML). Commands that read a session directory
    /// default to its config.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output or session directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stage to replay (replay only).
    #[arg(long, global = true, value_enum)]
    stage: Option<Stage>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the phantom: surface PLY and centerline CSV.
    GenPhantom,
    /// Calibrate, register the template and plan the trajectory.
    Plan,
    /// Run a full session and persist every artifact.
    Scan,
    /// Recompound the saved sweeps of a session.
    Compound,
    /// Print a saved report and rewrite its metrics CSV.
    Report,
    /// Re-run a stage from saved artifacts and check it against the report.
    Replay,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Plan,
    Register,
    Compound,
    Stitch,
    All,
}

const DEFAULT_OUT: &str = "scanpilot-out";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCANPILOT_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Completed) => ExitCode::SUCCESS,
        Ok(Outcome::Aborted) => ExitCode::from(2),
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if cli.stage.is_some() && !matches!(cli.command, Command::Replay) {
        warn!("--stage only applies to replay; ignored");
    }
    match cli.command {
        Command::GenPhantom => gen_phantom_cmd(cli),
        Command::Plan => plan_cmd(cli),
        Command::Scan => scan_cmd(cli),
        Command::Compound => compound_cmd(cli),
        Command::Report => report_cmd(cli),
        Command::Replay => replay_cmd(cli),
    }
}

/// Config from `--config` (or `fallback` when given and present), with
/// `--seed` applied.
fn load_config(cli: &Cli, fallback: Option<&Path>) -> Result<SessionConfig> {
    let path = cli.config.clone().or_else(|| fallback.filter(|p| p.is_file()).map(Path::to_path_buf));
    let mut cfg = match &path {
        Some(p) => SessionConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => SessionConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&SessionConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Directory of an existing session.
fn session_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = out_dir(cli, None);
    ensure!(dir.join("report.toml").is_file(), "{} holds no saved session (report.toml missing)", dir.display());
    Ok(dir)
}

fn gen_phantom_cmd(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli, None)?;
    let out = out_dir(cli, Some(&cfg));
    let ph = gen_phantom(cfg.seed, &cfg.phantom)?;
    std::fs::create_dir_all(&out)?;
    save_ply(out.join("surface.ply"), &ph.surface_base())?;
    std::fs::write(out.join("centerline.csv"), points_csv(&ph.centerline_base(1.0)))?;
    let f = ph.fiducial();
    std::fs::write(out.join("fiducial.csv"), points_csv(&[f]))?;
    println!("phantom: {} surface points, seed {}", ph.surface_local().len(), cfg.seed);
    println!("written to {}", out.display());
    Ok(Outcome::Completed)
}

fn plan_cmd(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli, None)?;
    let out = out_dir(cli, Some(&cfg));
    let plan = plan_session(&cfg)?;
    plan.save(&out, &cfg)?;
    println!("hand-eye residual: {:.3} mm", plan.hand_eye.as_ref().map_or(0.0, |h| h.residual_rms));
    println!(
        "template registration: {:.3} mm after {} iterations",
        plan.registration.final_mse(),
        plan.registration.iterations
    );
    println!("waypoints: {}", plan.trajectory.len());
    println!("written to {}", out.display());
    Ok(Outcome::Completed)
}

fn scan_cmd(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli, None)?;
    let out = out_dir(cli, Some(&cfg));
    let result = run_session(&cfg)?;
    result.save(&out)?;
    print!("{}", summary(&result.report));
    println!("written to {}", out.display());
    if let Some(e) = &result.report.error {
        eprintln!("error: {e}");
    }
    Ok(result.report.outcome)
}

fn compound_cmd(cli: &Cli) -> Result<Outcome> {
    let dir = session_dir(cli)?;
    let cfg = load_config(cli, Some(&dir.join("config.toml")))?;
    let calib = CalibrationSet::load(&dir.join("calibration.toml"))?;
    let compensated = load_sweeps(&dir, true)?;
    let raw = load_sweeps(&dir, false)?;
    ensure!(!raw.is_empty(), "no sweeps under {}", dir.join("sweeps").display());
    let vol = compound_sweeps(&compensated, &calib, cfg.compound_mode)?;
    let raw_vol = compound_sweeps(&raw, &calib, cfg.compound_mode)?;
    vol.save(&dir.join("volume.ply"))?;
    raw_vol.save(&dir.join("volume_uncompensated.ply"))?;
    println!("volume: {} points from {} sweeps ({:?})", vol.len(), compensated.len(), cfg.compound_mode);
    for k in 1..raw.len() {
        let g = stitching_gap(&compensated[k - 1], &raw[k], &calib)?;
        let u = stitching_gap(&raw[k - 1], &raw[k], &calib)?;
        println!("gap {k}: {g:.6} mm (uncompensated {u:.3} mm)");
    }
    Ok(Outcome::Completed)
}

fn report_cmd(cli: &Cli) -> Result<Outcome> {
    let dir = session_dir(cli)?;
    let report = SessionReport::load(&dir.join("report.toml"))?;
    std::fs::write(dir.join("metrics.csv"), report.metrics_csv())?;
    print!("{}", summary(&report));
    Ok(Outcome::Completed)
}

fn summary(r: &SessionReport) -> String {
    let mut s = String::new();
    let mut line = |l: String| {
        s.push_str(&l);
        s.push('\n');
    };
    line(format!("outcome: {:?}", r.outcome).to_lowercase());
    line(format!("seed: {}", r.seed));
    line(format!(
        "planning: {} waypoints, template rms {:.3} mm",
        r.planning.waypoints,
        r.planning.registration_history.last().copied().unwrap_or(f64::NAN)
    ));
    line(format!("frames: {} in {} sweeps, {} shadow corrections", r.frames, r.sweeps, r.shadow_corrections));
    for (i, e) in r.events.iter().enumerate() {
        line(format!(
            "motion {i}: waypoint {}, dice {:.3}, e_mc {:.2} mm, {}",
            e.waypoint,
            e.dice,
            e.e_mc,
            if e.accepted { "accepted" } else { "rejected" }
        ));
    }
    for (i, (g, u)) in r.stitching_gaps.iter().zip(&r.uncompensated_gaps).enumerate() {
        line(format!("stitching gap {i}: {g:.3e} mm (uncompensated {u:.2} mm)"));
    }
    if let Some(v) = r.vessel_rms {
        line(format!("vessel rms: {v:.3} mm"));
    }
    if let Some(v) = r.vessel_rms_uncompensated {
        line(format!("vessel rms uncompensated: {v:.3} mm"));
    }
    s
}

fn replay_cmd(cli: &Cli) -> Result<Outcome> {
    let dir = session_dir(cli)?;
    let cfg = load_config(cli, Some(&dir.join("config.toml")))?;
    let report = SessionReport::load(&dir.join("report.toml"))?;
    let stage = cli.stage.unwrap_or(Stage::All);
    let mut mismatches = 0;
    let all = stage == Stage::All;
    if all || stage == Stage::Plan {
        mismatches += replay_plan(&dir, &cfg)?;
    }
    if all || stage == Stage::Register {
        mismatches += replay_register(&dir, &cfg, &report)?;
    }
    if all || stage == Stage::Compound {
        mismatches += replay_compound(&dir, &cfg)?;
    }
    if all || stage == Stage::Stitch {
        mismatches += replay_stitch(&dir, &report)?;
    }
    if mismatches > 0 {
        bail!("{mismatches} replayed value(s) differ from the saved session");
    }
    Ok(Outcome::Completed)
}

fn check(name: &str, ok: bool, detail: String) -> usize {
    println!("{name}: {} ({detail})", if ok { "match" } else { "MISMATCH" });
    usize::from(!ok)
}

fn replay_plan(dir: &Path, cfg: &SessionConfig) -> Result<usize> {
    let plan = plan_session(cfg)?;
    let saved = std::fs::read_to_string(dir.join("plan").join("trajectory.csv"))?;
    Ok(check(
        "plan",
        plan.trajectory.to_csv() == saved,
        format!("{} waypoints", plan.trajectory.len()),
    ))
}

fn replay_register(dir: &Path, cfg: &SessionConfig, report: &SessionReport) -> Result<usize> {
    let mut bad = 0;
    for (k, e) in report.events.iter().enumerate() {
        let ed = dir.join("events").join(format!("event_{k:02}"));
        let before = CameraCapture::load(&ed.join("before"))?;
        let after = CameraCapture::load(&ed.join("after"))?;
        let reg = register_motion(&before.cloud, &after.cloud, &cfg.registration)?;
        let t = if cfg.sabotage_registration {
            scanpilot_core::RigidTransform::identity()
        } else {
            reg.transform
        };
        let res = evaluate_emc_with_gate(&e.fiducial_before, &e.fiducial_after, &t, cfg.thresholds.emc_gate);
        let dt = (t.translation() - e.transform.translation()).norm() + t.angle_to(&e.transform);
        let ok = dt < 1e-9 && (res.e_mc - e.e_mc).abs() < 1e-9 && res.accepted == e.accepted;
        bad += check(&format!("register {k}"), ok, format!("e_mc {:.3} mm", res.e_mc));
    }
    if report.events.is_empty() {
        info!("no motion events to replay");
    }
    Ok(bad)
}

fn replay_compound(dir: &Path, cfg: &SessionConfig) -> Result<usize> {
    let calib = CalibrationSet::load(&dir.join("calibration.toml"))?;
    let vol = compound_sweeps(&load_sweeps(dir, true)?, &calib, cfg.compound_mode)?;
    let saved = CompoundVolume::load(&dir.join("volume.ply"))?;
    let worst = vol
        .points
        .iter()
        .zip(&saved.points)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let ok = vol.len() == saved.len() && vol.sweep_ids == saved.sweep_ids && worst < 1e-6;
    Ok(check("compound", ok, format!("{} points, max deviation {worst:.2e} mm", vol.len())))
}

fn replay_stitch(dir: &Path, report: &SessionReport) -> Result<usize> {
    let calib = CalibrationSet::load(&dir.join("calibration.toml"))?;
    let comp = load_sweeps(dir, true)?;
    let raw = load_sweeps(dir, false)?;
    let mut bad = 0;
    for k in 1..raw.len() {
        let g = stitching_gap(&comp[k - 1], &raw[k], &calib)?;
        let want = report.stitching_gaps.get(k - 1).copied().unwrap_or(f64::NAN);
        bad += check(&format!("stitch {k}"), (g - want).abs() < 1e-6, format!("gap {g:.3e} mm"));
    }
    Ok(bad)
}
