#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use monofcw::calibration::{solve_three_point, CalibrationPoint};
use monofcw::detector::{compute_channels, nms, scan, window_features, ChannelConfig, ChannelStack, ScanOptions};
use monofcw::geometry::{distance_from_row, row_from_distance, CameraParams};
use monofcw::harness::{
    benchmark_anchors, distance_errors, evaluate, example_camera, quantization_study, render_scene, standard_corpus,
    study_table, train_toy_classifier, CorpusConfig, ScoredBox, StudyConfig, ToyTrainConfig, TruthBox,
};
use monofcw::planner::{default_anchors, exhaustive_plan, plan_windows, PlanConfig, WindowPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets.
const CAL_TRUTHS: usize = 10_000;
const CAL_REL_TOL: f64 = 1e-9;
const CAL_BUDGET: Duration = Duration::from_secs(5);
const STUDY_TRIALS: usize = 10_000;
const STUDY_ROW_NOISE: f64 = 2.0;
const E_STAR_17_RANGE: (f64, f64) = (0.05, 0.5);
const PLAN_FRACTION_MAX: f64 = 0.10;
const PLAN_BUDGET: Duration = Duration::from_secs(1);
const DETECTION_RATE_MIN: f64 = 0.95;
const FPPI_MAX: f64 = 0.1;
const MATCH_IOU: f64 = 0.5;
const SCAN_TIME_RATIO_MAX: f64 = 0.5;
const GEOMETRY_SAMPLES: usize = 1_000_000;
const GEOMETRY_REL_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_camera(rng: &mut ChaCha8Rng) -> CameraParams {
    CameraParams::new(
        rng.gen_range(0.8..2.5),
        rng.gen_range(-0.05..0.25),
        rng.gen_range(500.0..2500.0),
        rng.gen_range(250.0..470.0),
        1280,
        720,
    )
    .unwrap()
}

fn calibration_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..CAL_TRUTHS {
        let truth = random_camera(&mut rng);
        let ds = [rng.gen_range(3.0..6.0), rng.gen_range(8.0..14.0), rng.gen_range(18.0..35.0)];
        let pts = ds.map(|d| CalibrationPoint::new(d, row_from_distance(&truth, d).unwrap()));
        match solve_three_point(truth.h, pts, truth.image_w, truth.image_h) {
            Ok(r) => {
                let e = rel(r.params.alpha, truth.alpha)
                    .max(rel(r.params.f_y, truth.f_y))
                    .max(rel(r.params.v0, truth.v0));
                worst = worst.max(e);
                if !(e < CAL_REL_TOL) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < CAL_BUDGET,
        format!("{CAL_TRUTHS} truths, {failures} failures, worst rel err {worst:.2e}, {:.3}s", elapsed.as_secs_f64()),
    )
}

fn quantization_trend() -> Outcome {
    let ds = [5.0, 7.0, 9.0, 11.0, 15.0, 17.0];
    let cfg = StudyConfig { trials: STUDY_TRIALS, row_noise: STUDY_ROW_NOISE, round: true, seed: 7 };
    let rows = match quantization_study(&example_camera(), &ds, &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("study failed: {e}")),
    };
    print!("{}", study_table(&rows));
    let increasing = rows.windows(2).all(|w| w[1].mean_e_rel > w[0].mean_e_rel);
    let e17 = rows[5].mean_e_star;
    let in_range = (E_STAR_17_RANGE.0..=E_STAR_17_RANGE.1).contains(&e17);
    outcome(
        increasing && in_range,
        format!("e_r increasing: {increasing}, mean e* at 17 m = {e17:.4} m"),
    )
}

fn table_arithmetic() -> Outcome {
    // (d, d', e*, e_r %)
    let table = [
        (5.00, 5.00, 0.00, 0.00),
        (7.00, 6.98, 0.02, 0.29),
        (9.00, 9.08, 0.08, 0.89),
        (11.00, 11.11, 0.11, 1.00),
        (15.00, 15.26, 0.26, 1.73),
        (17.00, 17.31, 0.31, 1.82),
    ];
    let pairs: Vec<(f64, f64)> = table.iter().map(|r| (r.0, r.1)).collect();
    let errs = distance_errors(&pairs);
    let mut bad = Vec::new();
    for (row, e) in table.iter().zip(&errs) {
        let e_star = format!("{:.2}", e.e_star);
        let e_rel = format!("{:.2}", 100.0 * e.e_rel);
        if e_star != format!("{:.2}", row.2) || e_rel != format!("{:.2}", row.3) {
            bad.push(format!("d={} got ({e_star}, {e_rel})", row.0));
        }
    }
    outcome(bad.is_empty(), format!("{} rows, mismatches: {bad:?}", table.len()))
}

fn planner_efficiency() -> Outcome {
    let p = CameraParams::new(1.2, 0.12, 1000.0, 360.0, 1280, 720).unwrap();
    let start = Instant::now();
    let plan = plan_windows(&p, &default_anchors(), &PlanConfig::default());
    let full = exhaustive_plan(&p, &default_anchors(), 5.0, 40.0, 8, 0.125);
    let (plan, full) = match (plan, full) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return outcome(false, format!("planning failed: {:?} {:?}", a.err(), b.err())),
    };
    let n_plan = plan.windows().count();
    let n_full = full.windows().count();
    let elapsed = start.elapsed();
    let frac = n_plan as f64 / n_full as f64;
    outcome(
        frac <= PLAN_FRACTION_MAX && elapsed < PLAN_BUDGET,
        format!("{n_plan} / {n_full} windows = {:.2}%, {:.3}s", 100.0 * frac, elapsed.as_secs_f64()),
    )
}

struct Bench {
    plan: WindowPlan,
    full: WindowPlan,
    clf: monofcw::detector::BoostedClassifier,
    stacks: Vec<ChannelStack>,
    truths: Vec<TruthBox>,
}

fn build_bench() -> Result<Bench, String> {
    let p = example_camera();
    let anchors = benchmark_anchors(&p);
    let plan = plan_windows(&p, &anchors, &PlanConfig::default()).map_err(|e| e.to_string())?;
    let full = exhaustive_plan(&p, &anchors, 5.0, 40.0, 8, 0.125).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let trained = train_toy_classifier(&plan, &ToyTrainConfig::default()).map_err(|e| e.to_string())?;
    println!(
        "  trained {} trees ({:?}) in {:.1}s",
        trained.classifier.trees.len(),
        trained.stop,
        start.elapsed().as_secs_f64()
    );
    let corpus = standard_corpus(&p, &CorpusConfig::default()).map_err(|e| e.to_string())?;
    let mut stacks = Vec::with_capacity(corpus.len());
    let mut truths = Vec::new();
    for (i, spec) in corpus.iter().enumerate() {
        let (img, gts) = render_scene(spec).map_err(|e| e.to_string())?;
        truths.extend(gts.iter().map(|g| TruthBox { image: i, bbox: g.bbox, d: g.d }));
        stacks.push(compute_channels(&img, &ChannelConfig::default()).map_err(|e| e.to_string())?);
    }
    Ok(Bench { plan, full, clf: trained.classifier, stacks, truths })
}

fn end_to_end(b: &Bench) -> Outcome {
    let opts = ScanOptions::default();
    let mut dets = Vec::new();
    let mut t_plan = Duration::ZERO;
    let mut t_full = Duration::ZERO;
    for (i, stack) in b.stacks.iter().enumerate() {
        let start = Instant::now();
        let raw = scan(stack, &b.plan, &b.clf, &opts);
        t_plan += start.elapsed();
        let start = Instant::now();
        let raw_full = scan(stack, &b.full, &b.clf, &opts);
        t_full += start.elapsed();
        let (Ok(raw), Ok(_)) = (raw, raw_full) else {
            return outcome(false, format!("scan failed on image {i}"));
        };
        dets.extend(nms(&raw, 0.5).into_iter().map(|d| ScoredBox {
            image: i,
            bbox: d.bbox,
            score: d.score,
            distance: d.distance,
        }));
    }
    let r = evaluate(&dets, &b.truths, MATCH_IOU, b.stacks.len());
    let ratio = t_plan.as_secs_f64() / t_full.as_secs_f64();
    let mean_rel = r.distance_errors.iter().map(|e| e.e_rel).sum::<f64>() / r.distance_errors.len().max(1) as f64;
    outcome(
        r.detection_rate >= DETECTION_RATE_MIN && r.fppi <= FPPI_MAX && ratio <= SCAN_TIME_RATIO_MAX,
        format!(
            "rate {:.4} ({}/{}), FPPI {:.3}, scan time plan/exhaustive {:.4} ({:.2} ms vs {:.2} ms per frame), mean e_r {:.2}%",
            r.detection_rate,
            r.matched,
            r.total_gt,
            r.fppi,
            ratio,
            1e3 * t_plan.as_secs_f64() / b.stacks.len() as f64,
            1e3 * t_full.as_secs_f64() / b.stacks.len() as f64,
            100.0 * mean_rel
        ),
    )
}

fn cascade_soundness(b: &Bench) -> Outcome {
    let exhaustive_opts = ScanOptions { cascade_margin: f64::INFINITY, ..ScanOptions::default() };
    let default_opts = ScanOptions::default();
    let model = b.clf.model;
    let mut compared = 0usize;
    let mut pruned_survivors = 0usize;
    for (i, stack) in b.stacks.iter().enumerate() {
        let reference: Vec<(usize, f64)> = b
            .plan
            .windows()
            .enumerate()
            .map(|(k, (_, w))| (k, b.clf.score(&window_features(stack, &model, w))))
            .filter(|&(_, s)| s >= exhaustive_opts.score_min)
            .collect();
        let (Ok(open), Ok(pruned)) = (scan(stack, &b.plan, &b.clf, &exhaustive_opts), scan(stack, &b.plan, &b.clf, &default_opts)) else {
            return outcome(false, format!("scan failed on image {i}"));
        };
        let open_pairs: Vec<(usize, f64)> = open.iter().map(|d| (d.order, d.score)).collect();
        if open_pairs.len() != reference.len()
            || open_pairs.iter().zip(&reference).any(|(a, r)| a.0 != r.0 || a.1.to_bits() != r.1.to_bits())
        {
            return outcome(false, format!("image {i}: unpruned scan differs from exhaustive evaluation"));
        }
        for d in &pruned {
            match reference.binary_search_by(|r| r.0.cmp(&d.order)) {
                Ok(k) if reference[k].1.to_bits() == d.score.to_bits() => {}
                _ => return outcome(false, format!("image {i}: pruned detection {} not in exhaustive set", d.order)),
            }
        }
        compared += reference.len();
        pruned_survivors += pruned.len();
    }
    outcome(
        true,
        format!("{compared} detections bit-identical; {pruned_survivors} survive default margin, all in exhaustive set"),
    )
}

/// Independent stump search: every (feature, midpoint) pair, weighted
/// majority leaves with ties voting -1, first minimum kept.
fn brute_force_stump(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> (usize, f64, f64, f64, f64) {
    let mut best: Option<(usize, f64, f64, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|s| s[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = pair[0] + 0.5 * (pair[1] - pair[0]);
            let mut side = [[0.0; 2]; 2]; // [left/right][neg/pos]
            for i in 0..x.len() {
                let s = usize::from(x[i][f] > t);
                side[s][usize::from(y[i] > 0.0)] += w[i];
            }
            let vote = |s: [f64; 2]| if s[1] > s[0] { 1.0 } else { -1.0 };
            let (l, r) = (vote(side[0]), vote(side[1]));
            let err = side[0][if l > 0.0 { 0 } else { 1 }] + side[1][if r > 0.0 { 0 } else { 1 }];
            if best.is_none_or(|b| err < b.2 - 1e-12) {
                best = Some((f, t, err, l, r));
            }
        }
    }
    best.unwrap()
}

fn boosting_oracle() -> Outcome {
    use monofcw::detector::{train_features, TrainConfig, WindowModel};
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let model = WindowModel { w: 2, h: 2, shrink: 1, n_channels: 1 };
    let n_f = model.n_features();
    let sample = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<f64> {
        (0..n_f).map(|f| (rng.gen_range(0.0..10.0) + if f == 1 { shift } else { 0.0 }).round() / 2.0).collect()
    };
    let pos: Vec<Vec<f64>> = (0..10).map(|_| sample(&mut rng, 3.0)).collect();
    let neg: Vec<Vec<f64>> = (0..10).map(|_| sample(&mut rng, 0.0)).collect();
    let out = match train_features(&pos, &neg, model, &TrainConfig { rounds: 3, depth: 1, ..TrainConfig::default() }) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let x: Vec<Vec<f64>> = pos.iter().chain(&neg).cloned().collect();
    let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { -1.0 }).collect();
    let mut w = vec![1.0 / 20.0; 20];
    if out.rounds.len() != 3 {
        return outcome(false, format!("expected 3 rounds, got {} ({:?})", out.rounds.len(), out.stop));
    }
    for (k, round) in out.rounds.iter().enumerate() {
        let (f, t, err, l, r) = brute_force_stump(&x, &y, &w);
        if round.feature != f || round.threshold != t || (round.error - err).abs() > 1e-12 {
            return outcome(
                false,
                format!("round {k}: trainer ({}, {}, {}) vs oracle ({f}, {t}, {err})", round.feature, round.threshold, round.error),
            );
        }
        let alpha = 0.5 * ((1.0 - err) / err).ln();
        for i in 0..20 {
            let h = if x[i][f] <= t { l } else { r };
            w[i] *= (-alpha * y[i] * h).exp();
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
    }
    outcome(true, "3 rounds match brute-force enumeration".to_string())
}

fn geometry_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..GEOMETRY_SAMPLES {
        let p = random_camera(&mut rng);
        let d = rng.gen_range(1.0..200.0);
        let d2 = d * rng.gen_range(1.0001..2.0);
        match (row_from_distance(&p, d), row_from_distance(&p, d2)) {
            (Ok(v), Ok(v2)) => {
                let back = distance_from_row(&p, v).map(|b| rel(b, d)).unwrap_or(f64::INFINITY);
                worst = worst.max(back);
                if !(back < GEOMETRY_REL_TOL) || !(v2 < v) || !(v > p.horizon_row()) {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0,
        format!("{GEOMETRY_SAMPLES} samples, {failures} failures, worst round-trip rel err {worst:.2e}"),
    )
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |n: usize, name: &str, o: Outcome| {
        all_pass &= o.pass;
        println!("criterion {n} {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "calibration round trip", calibration_round_trip());
    report(2, "quantization error trend", quantization_trend());
    report(3, "metric arithmetic", table_arithmetic());
    report(4, "planner efficiency", planner_efficiency());
    match build_bench() {
        Ok(bench) => {
            report(5, "end-to-end benchmark", end_to_end(&bench));
            report(6, "cascade soundness", cascade_soundness(&bench));
        }
        Err(e) => {
            report(5, "end-to-end benchmark", outcome(false, format!("setup failed: {e}")));
            report(6, "cascade soundness", outcome(false, format!("setup failed: {e}")));
        }
    }
    report(7, "boosting oracle", boosting_oracle());
    report(8, "geometry properties", geometry_properties());
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
