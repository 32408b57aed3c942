use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::Serialize;

use crate::geometry::{Pose, Twist};

pub const TRACE_SCHEMA: &str = "featservo.trace/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    Converged,
    MaxCycles,
    TrackingLost,
    InsufficientFeatures,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "Converged",
            RunStatus::MaxCycles => "MaxCycles",
            RunStatus::TrackingLost => "TrackingLost",
            RunStatus::InsufficientFeatures => "InsufficientFeatures",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CycleEvent {
    None,
    /// Tracking chain broke; this and later cycles use full matching.
    TrackingLost,
    /// Too few inliers to command a twist; zero twist issued.
    InsufficientFeatures,
}

impl CycleEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            CycleEvent::None => "none",
            CycleEvent::TrackingLost => "tracking_lost",
            CycleEvent::InsufficientFeatures => "insufficient_features",
        }
    }
}

/// One inlier of a cycle, with simulator ground truth attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InlierPair {
    /// Index into the full target feature set.
    pub target: usize,
    pub current_pixel: Vector2<f64>,
    pub target_pixel: Vector2<f64>,
    pub current_landmark: Option<u32>,
    pub target_landmark: Option<u32>,
}

impl InlierPair {
    pub fn pixel_error(&self) -> f64 {
        (self.current_pixel - self.target_pixel).norm()
    }

    /// Both sides observe the same landmark.
    pub fn is_true_match(&self) -> bool {
        self.current_landmark.is_some() && self.current_landmark == self.target_landmark
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Camera pose when the image was taken.
    pub pose: Pose,
    pub twist: Twist,
    pub correspondences: usize,
    pub inliers: Vec<InlierPair>,
    /// Mean inlier pixel error; `None` when there were no inliers.
    pub mean_error: Option<f64>,
    /// Matching was restricted by tracking this cycle.
    pub tracking: bool,
    pub event: CycleEvent,
}

impl CycleRecord {
    pub fn inlier_count(&self) -> usize {
        self.inliers.len()
    }

    /// Full-set target indices of the inliers, ascending.
    pub fn inlier_targets(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.inliers.iter().map(|p| p.target).collect();
        t.sort_unstable();
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoTrace {
    pub records: Vec<CycleRecord>,
    pub status: RunStatus,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| v.to_string())
}

impl ServoTrace {
    pub fn final_record(&self) -> Option<&CycleRecord> {
        self.records.last()
    }

    pub fn cycles(&self) -> usize {
        self.records.len()
    }

    /// One row per cycle. Column order:
    /// `cycle, r00..r22, tx, ty, tz, vx, vy, vz, wx, wy, wz,
    /// correspondences, inliers, mean_error_px, tracking, event`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# schema: {TRACE_SCHEMA}").unwrap();
        writeln!(
            out,
            "cycle,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz,vx,vy,vz,wx,wy,wz,correspondences,inliers,mean_error_px,tracking,event"
        )
        .unwrap();
        for r in &self.records {
            write!(out, "{}", r.cycle).unwrap();
            for v in r.pose.to_array() {
                write!(out, ",{v}").unwrap();
            }
            for v in r.twist.to_vector().iter() {
                write!(out, ",{v}").unwrap();
            }
            writeln!(
                out,
                ",{},{},{},{},{}",
                r.correspondences,
                r.inlier_count(),
                fmt_opt(r.mean_error),
                u8::from(r.tracking),
                r.event.as_str()
            )
            .unwrap();
        }
        out
    }

    /// Twist profile: `cycle, vx, vy, vz, wx, wy, wz`.
    pub fn twist_profile_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# schema: featservo.twist_profile/1").unwrap();
        writeln!(out, "cycle,vx,vy,vz,wx,wy,wz").unwrap();
        for r in &self.records {
            write!(out, "{}", r.cycle).unwrap();
            for v in r.twist.to_vector().iter() {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Error profile: `cycle, mean_error_px, correspondences, inliers, tracking`.
    pub fn error_profile_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# schema: featservo.error_profile/1").unwrap();
        writeln!(out, "cycle,mean_error_px,correspondences,inliers,tracking").unwrap();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.cycle,
                fmt_opt(r.mean_error),
                r.correspondences,
                r.inlier_count(),
                u8::from(r.tracking)
            )
            .unwrap();
        }
        out
    }

    /// Final inlier errors: over all pairs, and over ground-truth pairs only.
    pub fn final_errors(&self) -> (Option<f64>, Option<f64>) {
        let Some(last) = self.final_record() else {
            return (None, None);
        };
        let mean = |it: &mut dyn Iterator<Item = f64>| {
            let (s, n) = it.fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
            (n > 0).then(|| s / n as f64)
        };
        let avg1 = mean(&mut last.inliers.iter().map(InlierPair::pixel_error));
        let avg2 = mean(
            &mut last
                .inliers
                .iter()
                .filter(|p| p.is_true_match())
                .map(InlierPair::pixel_error),
        );
        (avg1, avg2)
    }

    pub fn summary_json(&self, target_pose: &Pose) -> serde_json::Value {
        let last = self.final_record();
        let (avg1, avg2) = self.final_errors();
        let pose_error = last.map(|r| r.pose.relative(target_pose));
        serde_json::json!({
            "schema": "featservo.run_summary/1",
            "status": self.status.as_str(),
            "cycles": self.cycles(),
            "final_mean_error_px": last.and_then(|r| r.mean_error),
            "final_inliers": last.map(CycleRecord::inlier_count),
            "avg1_px": avg1,
            "avg2_px": avg2,
            "final_pose": last.map(|r| r.pose.to_array()),
            "translation_error_m": pose_error.map(|p| p.translation_norm()),
            "rotation_error_deg": pose_error.map(|p| p.rotation_angle().to_degrees()),
        })
    }
}
