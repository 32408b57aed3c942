use featservo::experiment::{
    export_profiles, run_accuracy_suite, run_batch_suite, AccuracyReport, AccuracyRow, ExperimentConfig,
};
use featservo::features::SyntheticDetectorConfig;
use featservo::sim::RunStatus;

#[test]
fn noiseless_clutter_free_grid_is_sub_half_pixel() {
    let mut cfg = ExperimentConfig {
        detector: SyntheticDetectorConfig::noiseless(0),
        ..Default::default()
    };
    cfg.scene.clutter_landmarks = 0;
    let out = run_accuracy_suite(&cfg).unwrap();
    assert_eq!(out.report.rows.len(), 18);
    assert!(out.report.mean_avg2_px.unwrap() < 0.5, "{:?}", out.report.mean_avg2_px);
}

#[test]
fn accuracy_report_is_rebuilt_from_traces() {
    let mut cfg = ExperimentConfig::default();
    cfg.accuracy.scene_seeds = vec![2];
    cfg.accuracy.goals.truncate(1);
    let out = run_accuracy_suite(&cfg).unwrap();
    let rows: Vec<AccuracyRow> = out
        .runs
        .iter()
        .zip(&out.report.rows)
        .map(|(run, row)| AccuracyRow::from_trace(row.scene_seed, row.goal, row.start, &run.trace, &run.target))
        .collect();
    assert_eq!(AccuracyReport::new(rows), out.report);
    for (run, row) in out.runs.iter().zip(&out.report.rows) {
        let last = run.trace.final_record().unwrap();
        let errs: Vec<f64> = last
            .inliers
            .iter()
            .filter(|p| p.current_landmark.is_some() && p.current_landmark == p.target_landmark)
            .map(|p| (p.current_pixel - p.target_pixel).norm())
            .collect();
        let avg2 = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!((row.avg2_px.unwrap() - avg2).abs() < 1e-12);
        assert!(row.avg1_px.unwrap() >= 0.0 && avg2 >= 0.0);
    }
}

#[test]
fn max_cycle_runs_are_listed_but_not_averaged() {
    let mut cfg = ExperimentConfig::default();
    cfg.accuracy.scene_seeds = vec![1];
    cfg.accuracy.goals.truncate(1);
    cfg.accuracy.settle_cycles = 0;
    cfg.run.max_cycles = 5;
    let out = run_accuracy_suite(&cfg).unwrap();
    assert!(out.report.rows.iter().all(|r| r.status == RunStatus::MaxCycles));
    assert_eq!(out.report.converged, 0);
    assert_eq!(out.report.mean_avg2_px, None);
    assert_eq!(out.report.to_csv().matches("MaxCycles").count(), 3);
}

#[test]
fn first_two_bands_converge_without_clutter() {
    let mut cfg = ExperimentConfig::default();
    cfg.batch.batches.truncate(2);
    cfg.batch.clutter = vec![false];
    let out = run_batch_suite(&cfg).unwrap();
    for (row, runs) in out.report.rows.iter().zip(&out.runs) {
        let recount = runs.iter().filter(|r| r.trace.status == RunStatus::Converged).count();
        assert_eq!(row.converged, recount);
        assert_eq!(row.success_ratio, 1.0, "band {:?}", row.band_cm);
    }
}

#[test]
fn profiles_match_the_trace() {
    let cfg = ExperimentConfig::default();
    let (trace, _) = featservo::experiment::run_single(&cfg).unwrap();
    assert_eq!(trace.status, RunStatus::Converged);
    let dir = tempfile::tempdir().unwrap();
    export_profiles(&trace, dir.path()).unwrap();
    let twist = std::fs::read_to_string(dir.path().join("twist.csv")).unwrap();
    let error = std::fs::read_to_string(dir.path().join("error.csv")).unwrap();
    assert_eq!(twist.lines().count(), trace.cycles() + 2);
    let last: f64 = error
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(last < cfg.run.success_threshold);

    let again = tempfile::tempdir().unwrap();
    export_profiles(&trace, again.path()).unwrap();
    assert_eq!(std::fs::read(again.path().join("twist.csv")).unwrap(), twist.as_bytes());
    assert_eq!(std::fs::read(again.path().join("error.csv")).unwrap(), error.as_bytes());

    let one = featservo::sim::ServoTrace {
        records: trace.records[..1].to_vec(),
        status: RunStatus::MaxCycles,
    };
    export_profiles(&one, dir.path()).unwrap();
    for f in ["twist.csv", "error.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2, "{f}");
    }
}
