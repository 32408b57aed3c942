//! Experiment suites: single runs, the accuracy grid, and success-ratio
//! batches over random initial poses.
//!
//! Suites return the full traces alongside their reports; every report is a
//! pure function of those traces, so it can be recomputed or audited later.

mod config;
mod report;

use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;

pub use config::{
    AccuracySection, BatchEntry, BatchSection, ExperimentConfig, OffsetSpec, PoseSpec, RunSection, StartSpec,
    CONFIG_SCHEMA_VERSION,
};
pub use report::{AccuracyReport, AccuracyRow, BatchReport, BatchRow};

use crate::geometry::Pose;
use crate::rng;
use crate::sim::{run_servo, Scene, ServoTrace, SimError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Samples a camera displacement: translation direction uniform on the
/// sphere, magnitude uniform in `band_cm`, rotation-vector components uniform
/// in `±bounds_deg`. Applied as `target ∘ delta`, so the camera center moves
/// by exactly the sampled magnitude.
pub fn sample_offset<R: Rng>(rng: &mut R, band_cm: [f64; 2], bounds_deg: [f64; 3]) -> Pose {
    let dir = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let n: f64 = v.norm();
        if n <= 1.0 && n > 1e-3 {
            break v / n;
        }
    };
    let mag = rng.random_range(band_cm[0]..=band_cm[1]) / 100.0;
    let mut rv = Vector3::zeros();
    for i in 0..3 {
        let b = bounds_deg[i];
        rv[i] = if b > 0.0 {
            rng.random_range(-b..=b).to_radians()
        } else {
            0.0
        };
    }
    Pose::from_translation(dir * mag).compose(&Pose::from_rotation_vector(rv))
}

/// One servo run as configured by `[run]`.
pub fn run_single(cfg: &ExperimentConfig) -> Result<(ServoTrace, Pose), ExperimentError> {
    let scene = cfg.run_scene()?;
    let target = cfg.run.target.resolve()?;
    let initial = cfg.resolve_start(&cfg.run.initial, &target)?;
    let servo = cfg.servo_config(target, initial, cfg.run.settle_cycles, cfg.run.seed);
    Ok((run_servo(&scene, &servo)?, target))
}

/// A finished run of a suite, with the trace its report row was built from.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub trace: ServoTrace,
    pub target: Pose,
}

#[derive(Debug, Clone)]
pub struct AccuracyOutcome {
    pub report: AccuracyReport,
    pub runs: Vec<SuiteRun>,
}

/// Runs every scene × goal × start combination of `[accuracy]`.
pub fn run_accuracy_suite(cfg: &ExperimentConfig) -> Result<AccuracyOutcome, ExperimentError> {
    let acc = &cfg.accuracy;
    let mut jobs = Vec::new();
    for (si, &scene_seed) in acc.scene_seeds.iter().enumerate() {
        for (gi, goal) in acc.goals.iter().enumerate() {
            for (ti, start) in acc.starts.iter().enumerate() {
                jobs.push((si, scene_seed, gi, goal, ti, start));
            }
        }
    }
    let scenes = acc
        .scene_seeds
        .iter()
        .map(|&seed| {
            let mut sc = cfg.scene.clone();
            sc.seed = seed;
            sc.generate().map_err(|e| ExperimentError::Config(e.to_string()))
        })
        .collect::<Result<Vec<Scene>, _>>()?;
    let results = jobs
        .par_iter()
        .map(|&(si, scene_seed, gi, goal, ti, start)| {
            let target = goal.resolve()?;
            let initial = cfg.resolve_start(start, &target)?;
            let seed = rng::derive(rng::derive(rng::derive(cfg.run.seed, si as u64), gi as u64), ti as u64);
            let servo = cfg.servo_config(target, initial, acc.settle_cycles, seed);
            let trace = run_servo(&scenes[si], &servo)?;
            let row = AccuracyRow::from_trace(scene_seed, gi, ti, &trace, &target);
            Ok((row, SuiteRun { trace, target }))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let (rows, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(AccuracyOutcome {
        report: AccuracyReport::new(rows),
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub report: BatchReport,
    /// Grouped like the report rows: `runs[row][trial]`.
    pub runs: Vec<Vec<SuiteRun>>,
}

/// Seed of trial `trial` in batch `batch`. Independent of the clutter mode so
/// both modes start from identical poses.
pub fn trial_seed(base: u64, batch: usize, trial: usize) -> u64 {
    rng::derive(rng::derive(base, 1000 + batch as u64), trial as u64)
}

/// Runs every batch of `[batch]` once per clutter mode, on the `[scene]`
/// scene and the `[run]` target. Results do not depend on the thread count.
pub fn run_batch_suite(cfg: &ExperimentConfig) -> Result<BatchOutcome, ExperimentError> {
    let scene = cfg
        .scene
        .generate()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let clean = scene.without_clutter();
    let target = cfg.run.target.resolve()?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (bi, entry) in cfg.batch.batches.iter().enumerate() {
        for &clutter in &cfg.batch.clutter {
            let scene = if clutter { &scene } else { &clean };
            let traces = (0..entry.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = trial_seed(cfg.run.seed, bi, t);
                    let mut r = rng::rng(seed);
                    let initial = target.compose(&sample_offset(&mut r, entry.band_cm, entry.rotation_bounds_deg));
                    let servo = cfg.servo_config(target, initial, cfg.run.settle_cycles, seed);
                    Ok(run_servo(scene, &servo)?)
                })
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            rows.push(BatchRow::from_traces(bi, entry, clutter, &traces));
            runs.push(traces.into_iter().map(|trace| SuiteRun { trace, target }).collect());
        }
    }
    Ok(BatchOutcome {
        report: BatchReport { rows },
        runs,
    })
}

/// Writes `twist.csv` and `error.csv` for one trace into `dir`.
pub fn export_profiles(trace: &ServoTrace, dir: &Path) -> Result<(), ExperimentError> {
    write_file(&dir.join("twist.csv"), &trace.twist_profile_csv())?;
    write_file(&dir.join("error.csv"), &trace.error_profile_csv())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| ExperimentError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{viewpoint, RunStatus, DEFAULT_VIEW_DIRECTION};

    #[test]
    fn sampled_offsets_respect_band_and_bounds() {
        let target = viewpoint(DEFAULT_VIEW_DIRECTION, 0.3).unwrap();
        let mut r = rng::rng(5);
        for _ in 0..500 {
            let d = sample_offset(&mut r, [1.0, 2.0], [8.0, 10.0, 8.0]);
            let start = target.compose(&d);
            let moved = (start.translation() - target.translation()).norm();
            assert!((0.01 - 1e-12..=0.02 + 1e-12).contains(&moved));
            assert!(d.rotation_angle().to_degrees() <= (64.0f64 + 100.0 + 64.0).sqrt() + 1e-9);
        }
    }

    #[test]
    fn sampler_is_seeded() {
        let a = sample_offset(&mut rng::rng(9), [0.0, 6.0], [8.0, 10.0, 8.0]);
        let b = sample_offset(&mut rng::rng(9), [0.0, 6.0], [8.0, 10.0, 8.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn small_batch_runs_and_reports() {
        let mut cfg = ExperimentConfig::default();
        cfg.batch.batches.truncate(1);
        cfg.batch.batches[0].trials = 2;
        let out = run_batch_suite(&cfg).unwrap();
        assert_eq!(out.report.rows.len(), 2);
        for (row, runs) in out.report.rows.iter().zip(&out.runs) {
            let converged = runs.iter().filter(|r| r.trace.status == RunStatus::Converged).count();
            assert_eq!(row.converged, converged);
            assert_eq!(row.trials, 2);
        }
    }

    #[test]
    fn export_reports_io_errors() {
        let trace = ServoTrace {
            records: vec![],
            status: RunStatus::MaxCycles,
        };
        let dir = tempfile::tempdir().unwrap();
        export_profiles(&trace, dir.path()).unwrap();
        assert!(dir.path().join("twist.csv").exists());
        let file = dir.path().join("plain");
        std::fs::write(&file, "x").unwrap();
        assert!(matches!(
            export_profiles(&trace, &file.join("sub")),
            Err(ExperimentError::Io(_))
        ));
    }
}
