#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use monofcw::calibration::{parse_points, refine_least_squares, solve_three_point, CalibrationReport};
use monofcw::detector::{BoostedClassifier, Detector, ScanOptions, TrainConfig};
use monofcw::fcw::{nearest_in_path, FcwConfig, FcwTracker};
use monofcw::geometry::CameraParams;
use monofcw::harness::{
    benchmark_anchors, evaluate, example_camera, parse_annotations, parse_detections, quantization_study, render_scene,
    standard_corpus, study_table, train_toy_classifier, write_annotations, write_detections, Annotation, CorpusConfig,
    DetectionRecord, SampleConfig, ScoredBox, StudyConfig, ToyTrainConfig, TruthBox,
};
use monofcw::image::RgbImage;
use monofcw::planner::{default_anchors, parse_anchors, plan_windows, PlanConfig, WindowPlan};

use config::{pick, require, Config};

/// Monocular forward-vehicle distance measurement, detection and warning.
#[derive(Parser)]
#[command(name = "monofcw", version)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve camera pitch, focal length and principal row from ground points.
    Calibrate(CalibrateArgs),
    /// Distance in meters to the ground point on an image row.
    Measure(MeasureArgs),
    /// Horizon row of a calibration.
    Horizon(HorizonArgs),
    /// Build a distance-prior window plan.
    Plan(PlanArgs),
    /// Render a seeded synthetic scene corpus with annotations.
    Synth(SynthArgs),
    /// Train a classifier on synthetic scenes.
    Train(TrainArgs),
    /// Detect vehicles in PPM images.
    Detect(DetectArgs),
    /// Score detections against annotations.
    Eval(EvalArgs),
    /// Monte Carlo distance error under row measurement noise.
    QuantizeStudy(StudyArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Camera height above the ground, meters.
    #[arg(long)]
    height: f64,
    /// Points file, one `d_m v_px` pair per line; 3 points solve exactly,
    /// more are refined by least squares.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 1280)]
    image_w: u32,
    #[arg(long, default_value_t = 720)]
    image_h: u32,
    /// Iteration cap for the least-squares refinement.
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Write the calibration file here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Image row (pixels, growing downward).
    #[arg(long, allow_negative_numbers = true)]
    row: f64,
}

#[derive(Args)]
struct HorizonArgs {
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct PlannerFlags {
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    bins_per_octave: Option<u32>,
    #[arg(long)]
    v_tol_frac: Option<f64>,
    #[arg(long)]
    stride_frac: Option<f64>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Size-anchor file, one `d_m w_px h_px` per line.
    #[arg(long, conflicts_with = "pinhole_anchors")]
    anchors: Option<PathBuf>,
    /// Anchors projected from a 1.8 m x 1.5 m vehicle rear instead of the
    /// built-in table.
    #[arg(long)]
    pinhole_anchors: bool,
    #[command(flatten)]
    planner: PlannerFlags,
    /// Write the plan file here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Camera to render with; defaults to the built-in 1280x720 camera.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    scenes: usize,
    #[arg(long, default_value_t = 1)]
    min_vehicles: usize,
    #[arg(long, default_value_t = 4)]
    max_vehicles: usize,
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Plan whose calibration and windows drive sample extraction.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    depth: Option<u8>,
    #[arg(long, default_value_t = 500)]
    positives: usize,
    #[arg(long, default_value_t = 2000)]
    negatives: usize,
    /// Share of negatives mined as false positives of a first-stage model.
    #[arg(long, default_value_t = 0.5)]
    bootstrap_frac: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Image list: the first field of each line is a PPM path, relative to
    /// the list's directory. Annotation files work as lists.
    #[arg(long)]
    list: Option<PathBuf>,
    /// PPM images, processed after those from --list.
    images: Vec<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    score_min: Option<f64>,
    /// Soft-cascade slack; `inf` disables pruning.
    #[arg(long)]
    cascade_margin: Option<f64>,
    /// Non-maximum suppression overlap limit.
    #[arg(long)]
    iou: Option<f64>,
    /// Treat the images as consecutive frames and append a warning level.
    #[arg(long)]
    fcw: bool,
    /// Seconds between frames for --fcw.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Minimum overlap for a match.
    #[arg(long)]
    iou: Option<f64>,
    /// Number of images; defaults to the distinct paths in both files.
    #[arg(long)]
    n_images: Option<usize>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "5,7,9,11,15,17")]
    distances: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Half-width of the uniform row noise, pixels.
    #[arg(long, default_value_t = 2.0)]
    row_noise: f64,
    /// Keep measured rows fractional instead of rounding to whole pixels.
    #[arg(long)]
    no_round: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_calibration(path: &Path) -> anyhow::Result<CameraParams> {
    CameraParams::from_calibration_text(&read_text(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_plan(path: &Path) -> anyhow::Result<WindowPlan> {
    WindowPlan::from_text(&read_text(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_image(path: &Path) -> anyhow::Result<RgbImage> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    RgbImage::read_ppm(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// `MONOFCW_THREADS`, 0 meaning one worker per available core.
fn scan_threads() -> anyhow::Result<usize> {
    match std::env::var("MONOFCW_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .with_context(|| format!("MONOFCW_THREADS must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

fn calibrate(a: CalibrateArgs) -> anyhow::Result<()> {
    let mut points = parse_points(&read_text(&a.points)?).with_context(|| format!("in {}", a.points.display()))?;
    if points.len() < 3 {
        bail!("{} has {} points, need at least 3", a.points.display(), points.len());
    }
    let report: CalibrationReport = if points.len() == 3 {
        solve_three_point(a.height, [points[0], points[1], points[2]], a.image_w, a.image_h)?
    } else {
        // Nearest, middle and farthest points seed the refinement.
        points.sort_by(|p, q| p.d.total_cmp(&q.d));
        let seed = [points[0], points[points.len() / 2], points[points.len() - 1]];
        let init = solve_three_point(a.height, seed, a.image_w, a.image_h)?;
        refine_least_squares(a.height, &points, &init.params, a.max_iter, 1e-10)?
    };
    write_output(a.out.as_deref(), &report.params.to_calibration_text())?;
    if a.out.is_some() {
        println!(
            "{:?}: alpha {:.6} rad, f_y {:.6} px, v0 {:.6} px, rms {:.6} px",
            report.method,
            report.params.alpha,
            report.params.f_y,
            report.params.v0,
            report.rms_residual()
        );
    }
    Ok(())
}

fn plan_config(f: &PlannerFlags, cfg: &Config) -> PlanConfig {
    let d = PlanConfig::default();
    let s = &cfg.planner;
    PlanConfig {
        d_min: pick(f.d_min, s.d_min, d.d_min),
        d_max: pick(f.d_max, s.d_max, d.d_max),
        bins_per_octave: pick(f.bins_per_octave, s.bins_per_octave, d.bins_per_octave),
        v_tol_frac: pick(f.v_tol_frac, s.v_tol_frac, d.v_tol_frac),
        stride_frac: pick(f.stride_frac, s.stride_frac, d.stride_frac),
    }
}

fn plan(a: PlanArgs, cfg: &Config) -> anyhow::Result<()> {
    let params = load_calibration(&require(a.calibration, cfg.calibration.clone(), "calibration")?)?;
    let anchors = if let Some(path) = &a.anchors {
        parse_anchors(&read_text(path)?).with_context(|| format!("in {}", path.display()))?
    } else if a.pinhole_anchors {
        benchmark_anchors(&params)
    } else {
        default_anchors()
    };
    let plan = plan_windows(&params, &anchors, &plan_config(&a.planner, cfg))?;
    write_output(a.out.as_deref(), &plan.to_text())?;
    if a.out.is_some() {
        println!("{} bands, {} windows", plan.bands.len(), plan.window_count());
    }
    Ok(())
}

fn synth(a: SynthArgs, cfg: &Config) -> anyhow::Result<()> {
    let params = match a.calibration.or(cfg.calibration.clone()) {
        Some(p) => load_calibration(&p)?,
        None => example_camera(),
    };
    let defaults = CorpusConfig::default();
    let corpus_cfg = CorpusConfig {
        n_scenes: a.scenes,
        min_vehicles: a.min_vehicles,
        max_vehicles: a.max_vehicles,
        d_min: pick(a.d_min, cfg.planner.d_min, defaults.d_min),
        d_max: pick(a.d_max, cfg.planner.d_max, defaults.d_max),
        seed: pick(a.seed, cfg.seed, defaults.seed),
    };
    if !(1..=corpus_cfg.max_vehicles).contains(&corpus_cfg.min_vehicles) {
        bail!("need 1 <= --min-vehicles <= --max-vehicles");
    }
    if !(corpus_cfg.d_min > 0.0 && corpus_cfg.d_min <= corpus_cfg.d_max) {
        bail!("need 0 < d_min <= d_max");
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let corpus = standard_corpus(&params, &corpus_cfg)?;
    let mut annotations = Vec::new();
    for (i, spec) in corpus.iter().enumerate() {
        let (img, gts) = render_scene(spec)?;
        let name = format!("scene_{i:04}.ppm");
        let path = a.out_dir.join(&name);
        fs::write(&path, img.to_ppm_bytes()).with_context(|| format!("writing {}", path.display()))?;
        annotations.extend(gts.iter().map(|g| Annotation { image: name.clone(), bbox: g.bbox, d: g.d }));
    }
    let ann_path = a.out_dir.join("annotations.txt");
    fs::write(&ann_path, write_annotations(&annotations).map_err(anyhow::Error::msg)?)
        .with_context(|| format!("writing {}", ann_path.display()))?;
    fs::write(a.out_dir.join("calibration.txt"), params.to_calibration_text())?;
    println!("{} images, {} vehicles", corpus.len(), annotations.len());
    Ok(())
}

fn train(a: TrainArgs, cfg: &Config) -> anyhow::Result<()> {
    let plan = load_plan(&require(a.plan, cfg.plan.clone(), "plan")?)?;
    let out = require(a.out, cfg.classifier.clone(), "out")?;
    let defaults = ToyTrainConfig::default();
    let seed = pick(a.seed, cfg.seed, defaults.samples.seed);
    let toy = ToyTrainConfig {
        samples: SampleConfig { n_pos: a.positives, n_neg: a.negatives, seed, ..defaults.samples },
        train: TrainConfig {
            rounds: pick(a.rounds, cfg.detector.rounds, defaults.train.rounds),
            depth: pick(a.depth, cfg.detector.depth, defaults.train.depth),
            seed,
            ..defaults.train
        },
        bootstrap_frac: a.bootstrap_frac,
        ..defaults
    };
    if toy.samples.n_pos == 0 || toy.samples.n_neg == 0 {
        bail!("--positives and --negatives must be at least 1");
    }
    let outcome = train_toy_classifier(&plan, &toy)?;
    fs::write(&out, outcome.classifier.to_text()).with_context(|| format!("writing {}", out.display()))?;
    let last = outcome.rounds.last();
    println!(
        "{} trees, stop {:?}, final training error {:.6}",
        outcome.classifier.trees.len(),
        outcome.stop,
        last.map_or(f64::NAN, |r| r.training_error)
    );
    Ok(())
}

/// Paths listed in `list` (first field per content line, resolved against
/// the list's directory) followed by `extra`, keeping first occurrences.
fn image_inputs(list: Option<&Path>, extra: &[PathBuf]) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    if let Some(list) = list {
        let base = list.parent().unwrap_or(Path::new(""));
        for line in read_text(list)?.lines() {
            let content = line.split('#').next().unwrap_or("").trim();
            let Some(name) = content.split_whitespace().next() else { continue };
            if seen.insert(name.to_string()) {
                out.push((name.to_string(), base.join(name)));
            }
        }
    }
    for p in extra {
        let name = p.to_string_lossy().into_owned();
        if seen.insert(name.clone()) {
            out.push((name, p.clone()));
        }
    }
    Ok(out)
}

fn detect(a: DetectArgs, cfg: &Config) -> anyhow::Result<()> {
    let plan = load_plan(&require(a.plan, cfg.plan.clone(), "plan")?)?;
    let clf_path = require(a.classifier, cfg.classifier.clone(), "classifier")?;
    let classifier =
        BoostedClassifier::from_text(&read_text(&clf_path)?).with_context(|| format!("in {}", clf_path.display()))?;
    let inputs = image_inputs(a.list.as_deref(), &a.images)?;
    if inputs.is_empty() {
        bail!("no input images (give --list or image paths)");
    }
    let image_w = plan.params.image_w as f64;
    let mut detector = Detector::new(plan, classifier);
    let defaults = ScanOptions::default();
    detector.scan = ScanOptions {
        score_min: pick(a.score_min, cfg.detector.score_min, defaults.score_min),
        cascade_margin: pick(a.cascade_margin, cfg.detector.cascade_margin, defaults.cascade_margin),
        threads: scan_threads()?,
        with_distance: true,
    };
    detector.nms_iou = pick(a.iou, cfg.detector.iou, Detector::DEFAULT_NMS_IOU);
    let (fcw_cfg, corridor) = fcw_config(cfg);
    fcw_cfg.validate().map_err(anyhow::Error::msg)?;
    if a.fcw && !(a.dt > 0.0) {
        bail!("--dt must be > 0");
    }
    let mut tracker = FcwTracker::new(fcw_cfg);

    let mut records = Vec::new();
    for (name, path) in &inputs {
        let img = read_image(path)?;
        let dets = detector.detect(&img).with_context(|| format!("detecting in {}", path.display()))?;
        let level = if a.fcw {
            let nearest = nearest_in_path(&dets, image_w, corridor).and_then(|d| d.distance);
            Some(tracker.step(nearest, a.dt))
        } else {
            None
        };
        records.extend(dets.iter().map(|d| DetectionRecord {
            image: name.clone(),
            bbox: d.bbox,
            score: d.score,
            distance: d.distance,
            level,
        }));
    }
    write_output(a.out.as_deref(), &write_detections(&records).map_err(anyhow::Error::msg)?)?;
    if a.out.is_some() {
        println!("{} images, {} detections", inputs.len(), records.len());
    }
    Ok(())
}

fn fcw_config(cfg: &Config) -> (FcwConfig, f64) {
    let d = FcwConfig::default();
    let s = &cfg.fcw;
    (
        FcwConfig {
            d_alert: s.d_alert.unwrap_or(d.d_alert),
            d_caution: s.d_caution.unwrap_or(d.d_caution),
            headway_alert: s.headway_alert.unwrap_or(d.headway_alert),
            smoothing: s.smoothing.unwrap_or(d.smoothing),
            coast_limit: s.coast_limit.unwrap_or(d.coast_limit),
        },
        s.corridor_frac.unwrap_or(0.3),
    )
}

fn eval(a: EvalArgs, cfg: &Config) -> anyhow::Result<()> {
    let ann_path = require(a.annotations, cfg.annotations.clone(), "annotations")?;
    let anns = parse_annotations(&read_text(&ann_path)?).with_context(|| format!("in {}", ann_path.display()))?;
    let dets = parse_detections(&read_text(&a.detections)?).with_context(|| format!("in {}", a.detections.display()))?;
    let iou = pick(a.iou, cfg.detector.iou, 0.5);
    if !(iou > 0.0 && iou < 1.0) {
        bail!("--iou must be in (0, 1)");
    }
    let names: BTreeSet<&str> = anns.iter().map(|x| x.image.as_str()).chain(dets.iter().map(|x| x.image.as_str())).collect();
    let index = |name: &str| names.iter().position(|n| *n == name).expect("name collected above");
    let truths: Vec<TruthBox> = anns.iter().map(|x| TruthBox { image: index(&x.image), bbox: x.bbox, d: x.d }).collect();
    let scored: Vec<ScoredBox> = dets
        .iter()
        .map(|x| ScoredBox { image: index(&x.image), bbox: x.bbox, score: x.score, distance: x.distance })
        .collect();
    let n_images = a.n_images.unwrap_or(names.len());
    let r = evaluate(&scored, &truths, iou, n_images);
    let n = r.distance_errors.len().max(1) as f64;
    println!("detection_rate {:.6}", r.detection_rate);
    println!("fppi {:.6}", r.fppi);
    println!("matched {} of {}", r.matched, r.total_gt);
    println!("false_positives {}", r.false_positives);
    println!("images {}", r.n_images);
    println!("mean_e_star_m {:.6}", r.distance_errors.iter().map(|e| e.e_star).sum::<f64>() / n);
    println!("mean_e_rel_pct {:.6}", 100.0 * r.distance_errors.iter().map(|e| e.e_rel).sum::<f64>() / n);
    Ok(())
}

fn quantize_study(a: StudyArgs, cfg: &Config) -> anyhow::Result<()> {
    let params = match a.calibration.or(cfg.calibration.clone()) {
        Some(p) => load_calibration(&p)?,
        None => example_camera(),
    };
    let study = StudyConfig {
        trials: a.trials,
        row_noise: a.row_noise,
        round: !a.no_round,
        seed: pick(a.seed, cfg.seed, 0),
    };
    let rows = quantization_study(&params, &a.distances, &study)?;
    print!("{}", study_table(&rows));
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Measure(a) => {
            let params = load_calibration(&require(a.calibration, cfg.calibration.clone(), "calibration")?)?;
            println!("{:.6}", params.distance_from_row(a.row)?);
            Ok(())
        }
        Command::Horizon(a) => {
            let params = load_calibration(&require(a.calibration, cfg.calibration.clone(), "calibration")?)?;
            println!("{:.6}", params.horizon_row());
            Ok(())
        }
        Command::Plan(a) => plan(a, &cfg),
        Command::Synth(a) => synth(a, &cfg),
        Command::Train(a) => train(a, &cfg),
        Command::Detect(a) => detect(a, &cfg),
        Command::Eval(a) => eval(a, &cfg),
        Command::QuantizeStudy(a) => quantize_study(a, &cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("monofcw: {e:#}");
            ExitCode::FAILURE
        }
    }
}
