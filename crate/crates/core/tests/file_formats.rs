use monofcw::calibration::{parse_points, write_points, CalibrationPoint};
use monofcw::detector::{train_features, BoostedClassifier, TrainConfig, WindowModel};
use monofcw::geometry::CameraParams;
use monofcw::planner::{
    default_anchors, parse_anchors, plan_windows, write_anchors, PlanConfig, WindowPlan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn calibration_file_round_trip() {
    let p = CameraParams::new(1.225, 0.11937812345678901, 1_094.313, 363.331, 1280, 720).unwrap();
    let text = p.to_calibration_text();
    let back = CameraParams::from_calibration_text(&text).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.to_calibration_text(), text);
}

#[test]
fn plan_file_round_trip() {
    let p = CameraParams::new(1.2, 0.12, 1000.0, 360.0, 1280, 720).unwrap();
    let plan = plan_windows(&p, &default_anchors(), &PlanConfig::default()).unwrap();
    let text = plan.to_text();
    let back = WindowPlan::from_text(&text).unwrap();
    assert_eq!(back.to_text(), text);
    assert_eq!(back.windows().collect::<Vec<_>>(), plan.windows().collect::<Vec<_>>());
}

#[test]
fn anchor_and_point_files_round_trip() {
    let text = write_anchors(&default_anchors());
    assert_eq!(write_anchors(&parse_anchors(&text).unwrap()), text);
    let pts = vec![CalibrationPoint::new(4.0, 461.0), CalibrationPoint::new(5.5, 428.25)];
    let text = write_points(&pts);
    assert_eq!(parse_points(&text).unwrap(), pts);
    assert_eq!(write_points(&parse_points(&text).unwrap()), text);
}

#[test]
fn classifier_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = WindowModel { w: 8, h: 8, shrink: 4, n_channels: 10 };
    let n = model.n_features();
    let pos: Vec<Vec<f64>> = (0..30).map(|_| (0..n).map(|_| rng.gen_range(0.3..1.0)).collect()).collect();
    let neg: Vec<Vec<f64>> = (0..40).map(|_| (0..n).map(|_| rng.gen_range(0.0..0.7)).collect()).collect();
    let clf = train_features(&pos, &neg, model, &TrainConfig { rounds: 12, ..TrainConfig::default() })
        .unwrap()
        .classifier;
    let text = clf.to_text();
    let back = BoostedClassifier::from_text(&text).unwrap();
    assert_eq!(back.to_text(), text);
    for x in pos.iter().chain(&neg) {
        assert_eq!(back.score(x).to_bits(), clf.score(x).to_bits());
    }
}

#[test]
fn format_errors_name_the_line() {
    let err = CameraParams::from_calibration_text("h_m = 1.2\nalpha_rad = oops\n").unwrap_err();
    assert_eq!(err.line, 2);
    let err = BoostedClassifier::from_text("#monofcw-clf v1\nwindow 8 8 4 10\nnonsense\n").unwrap_err();
    assert_eq!(err.line, 3);
    assert!(WindowPlan::from_text("not a plan\n").is_err());
}
