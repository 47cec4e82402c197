//! The simulate, estimate, eval and batch workflows, both in memory and on
//! files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lgpose_core::filter::run_filter;
use lgpose_core::lie::Vec3;
use lgpose_core::sim::{corrupt, generate};
use lgpose_core::{BodyParams, GroundTruth, ImuFrame, Pose3, PoseState, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{read_imu, read_poses, write_imu, write_json, write_poses, PoseRow, ANGLE_COLUMNS};
use crate::metrics::{evaluate, MetricsReport};

pub const TRUTH_FILE: &str = "truth.csv";
pub const IMU_FILE: &str = "imu.csv";

/// Ground truth and the corrupted sensor stream for one config.
pub fn simulate(cfg: &RunConfig) -> Result<(GroundTruth, Vec<ImuFrame>), CliError> {
    let truth = generate(&cfg.gait_params())?;
    let frames = corrupt(&truth, &cfg.sensor, cfg.gait.seed);
    Ok((truth, frames))
}

pub fn truth_rows(truth: &GroundTruth) -> Result<Vec<PoseRow>, CliError> {
    let body = &truth.params.body;
    truth
        .t
        .iter()
        .zip(&truth.states)
        .enumerate()
        .map(|(k, (&t, x))| PoseRow::new(t, *x, body).map_err(|e| e.at_frame(k).into()))
        .collect()
}

/// Standing start from the first frame's orientations: pelvis at its nominal
/// height above the origin, each leg straight along its shank axis, all
/// velocities zero.
pub fn initial_state(frame: &ImuFrame, body: &BodyParams) -> PoseState {
    let mut x = PoseState::identity();
    x.pelvis = Pose3::new(frame.rot_p, Vec3::new(0.0, 0.0, body.z_pelvis));
    for side in Side::BOTH {
        let rot = *frame.rot(side.shank());
        let hip = x.pelvis.transform_homogeneous(&body.hip_point(side)).xyz();
        let leg = body.thigh_length(side) + body.shank_length(side);
        *x.pose_mut(side.shank()) = Pose3::new(rot, hip - rot.axis(2) * leg);
    }
    x
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub rows: Vec<PoseRow>,
    pub runtime_ms: f64,
}

/// Runs the filter over `frames`, starting from `init` or, without one, from
/// [`initial_state`].
pub fn estimate(frames: &[ImuFrame], cfg: &RunConfig, init: Option<PoseState>) -> Result<Estimate, CliError> {
    let first = frames.first().ok_or_else(|| lgpose_core::Error::InvalidParams("no input frames".into()))?;
    let filter = cfg.filter_config();
    let mu = init.unwrap_or_else(|| initial_state(first, &cfg.body));
    let start = Instant::now();
    let (states, _) = run_filter(frames, filter.initial_belief(mu), &filter)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let rows = frames
        .iter()
        .zip(states)
        .enumerate()
        .map(|(k, (f, x))| PoseRow::new(f.t, x, &cfg.body).map_err(|e| e.at_frame(k)))
        .collect::<lgpose_core::Result<Vec<_>>>()?;
    Ok(Estimate { rows, runtime_ms })
}

/// Sidecar written next to an estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub frames: usize,
    pub runtime_ms: f64,
}

/// `est.csv` → `est.meta.json`.
pub fn meta_path(est: &Path) -> PathBuf {
    est.with_extension("meta.json")
}

pub fn run_simulate(config: &Path, out_dir: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let (truth, frames) = simulate(&cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write_poses(&out_dir.join(TRUTH_FILE), &truth_rows(&truth)?)?;
    write_imu(&out_dir.join(IMU_FILE), &frames)
}

pub fn run_estimate(imu: &Path, config: &Path, out: &Path, init: Option<&Path>) -> Result<Estimate, CliError> {
    let cfg = RunConfig::load(config)?;
    let frames = read_imu(imu)?;
    let init = match init {
        Some(path) => Some(read_poses(path)?[0].state),
        None => None,
    };
    let est = estimate(&frames, &cfg, init)?;
    write_poses(out, &est.rows)?;
    let meta = EstimateMeta {
        frames: est.rows.len(),
        runtime_ms: est.runtime_ms,
    };
    write_json(&meta_path(out), &meta)?;
    Ok(est)
}

pub fn run_eval(est: &Path, reference: &Path, out: &Path) -> Result<MetricsReport, CliError> {
    let est_rows = read_poses(est)?;
    let ref_rows = read_poses(reference)?;
    let mut report = evaluate(&est_rows, &ref_rows)?;
    report.runtime_ms = std::fs::read_to_string(meta_path(est))
        .ok()
        .and_then(|text| serde_json::from_str::<EstimateMeta>(&text).ok())
        .map(|m| m.runtime_ms);
    write_json(out, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Spread { mean, std: var.sqrt() })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub trials: Vec<TrialSummary>,
    pub rmse_deg: std::collections::BTreeMap<String, Spread>,
    pub cc: std::collections::BTreeMap<String, Spread>,
}

/// Simulates, estimates and scores `trials` independent sequences with seeds
/// `gait.seed, gait.seed + 1, …`. Each trial writes its files under
/// `out_dir/trial_NNN/`; the summary goes to `out_dir/summary.json`.
pub fn run_batch(config: &Path, out_dir: &Path, trials: usize, threads: Option<usize>) -> Result<BatchSummary, CliError> {
    let cfg = RunConfig::load(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::io(out_dir, std::io::Error::other(e)))?;
    let results: Vec<TrialSummary> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| run_trial(&cfg, cfg.gait.seed + i as u64, &out_dir.join(format!("trial_{i:03}"))))
            .collect::<Result<_, _>>()
    })?;

    let mut summary = BatchSummary::default();
    for name in ANGLE_COLUMNS {
        let rmse: Vec<f64> = results.iter().map(|t| t.metrics.rmse_deg[name]).collect();
        let cc: Vec<f64> = results.iter().filter_map(|t| t.metrics.cc[name]).collect();
        if let Some(s) = Spread::of(&rmse) {
            summary.rmse_deg.insert(name.to_string(), s);
        }
        if let Some(s) = Spread::of(&cc) {
            summary.cc.insert(name.to_string(), s);
        }
    }
    summary.trials = results;
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn run_trial(base: &RunConfig, seed: u64, dir: &Path) -> Result<TrialSummary, CliError> {
    let mut cfg = *base;
    cfg.gait.seed = seed;
    let (truth, frames) = simulate(&cfg)?;
    let reference = truth_rows(&truth)?;
    let est = estimate(&frames, &cfg, None)?;
    let mut metrics = evaluate(&est.rows, &reference)?;
    metrics.runtime_ms = Some(est.runtime_ms);
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_poses(&dir.join(TRUTH_FILE), &reference)?;
    write_imu(&dir.join(IMU_FILE), &frames)?;
    write_poses(&dir.join("est.csv"), &est.rows)?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    Ok(TrialSummary { seed, metrics })
}
