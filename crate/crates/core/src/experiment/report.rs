use std::fmt::Write as _;

use serde::Serialize;

use super::BatchEntry;
use crate::geometry::Pose;
use crate::sim::{RunStatus, ServoTrace};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub scene_seed: u64,
    pub goal: usize,
    pub start: usize,
    pub status: RunStatus,
    pub cycles: usize,
    /// Final mean error over all inliers, pixels.
    pub avg1_px: Option<f64>,
    /// Final mean error over ground-truth-correct inliers, pixels.
    pub avg2_px: Option<f64>,
    pub translation_error_m: Option<f64>,
    pub rotation_error_deg: Option<f64>,
}

impl AccuracyRow {
    pub fn from_trace(scene_seed: u64, goal: usize, start: usize, trace: &ServoTrace, target: &Pose) -> Self {
        let (avg1_px, avg2_px) = trace.final_errors();
        let rel = trace.final_record().map(|r| r.pose.relative(target));
        Self {
            scene_seed,
            goal,
            start,
            status: trace.status,
            cycles: trace.cycles(),
            avg1_px,
            avg2_px,
            translation_error_m: rel.map(|p| p.translation_norm()),
            rotation_error_deg: rel.map(|p| p.rotation_angle().to_degrees()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
    pub converged: usize,
    /// Means over converged runs only.
    pub mean_avg1_px: Option<f64>,
    pub mean_avg2_px: Option<f64>,
}

impl AccuracyReport {
    pub fn new(rows: Vec<AccuracyRow>) -> Self {
        let conv: Vec<&AccuracyRow> = rows.iter().filter(|r| r.status == RunStatus::Converged).collect();
        let mean = |f: fn(&AccuracyRow) -> Option<f64>| {
            let v: Vec<f64> = conv.iter().filter_map(|r| f(r)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Self {
            converged: conv.len(),
            mean_avg1_px: mean(|r| r.avg1_px),
            mean_avg2_px: mean(|r| r.avg2_px),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema: featservo.accuracy/1\n");
        out.push_str("scene_seed,goal,start,status,cycles,avg1_px,avg2_px,translation_error_m,rotation_error_deg\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scene_seed,
                r.goal + 1,
                r.start + 1,
                r.status.as_str(),
                r.cycles,
                opt(r.avg1_px),
                opt(r.avg2_px),
                opt(r.translation_error_m),
                opt(r.rotation_error_deg)
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRow {
    pub batch: usize,
    pub band_cm: [f64; 2],
    pub rotation_bounds_deg: [f64; 3],
    pub clutter: bool,
    pub trials: usize,
    pub converged: usize,
    pub success_ratio: f64,
    pub statuses: Vec<RunStatus>,
}

impl BatchRow {
    pub fn from_traces(batch: usize, entry: &BatchEntry, clutter: bool, traces: &[ServoTrace]) -> Self {
        let statuses: Vec<RunStatus> = traces.iter().map(|t| t.status).collect();
        let converged = statuses.iter().filter(|s| **s == RunStatus::Converged).count();
        Self {
            batch,
            band_cm: entry.band_cm,
            rotation_bounds_deg: entry.rotation_bounds_deg,
            clutter,
            trials: traces.len(),
            converged,
            success_ratio: if traces.is_empty() {
                0.0
            } else {
                converged as f64 / traces.len() as f64
            },
            statuses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub rows: Vec<BatchRow>,
}

impl BatchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema: featservo.batch/1\n");
        out.push_str("batch,band_low_cm,band_high_cm,clutter,trials,converged,success_ratio\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.4}",
                r.batch + 1,
                r.band_cm[0],
                r.band_cm[1],
                if r.clutter { "on" } else { "off" },
                r.trials,
                r.converged,
                r.success_ratio
            )
            .unwrap();
        }
        out
    }

    pub fn row(&self, batch: usize, clutter: bool) -> Option<&BatchRow> {
        self.rows.iter().find(|r| r.batch == batch && r.clutter == clutter)
    }
}
