//! Seeded scene corpora and training-sample extraction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{render_scene, vehicle_box, GroundTruth, SceneSpec, VehicleSpec};
use crate::bbox::BBox;
use crate::detector::{
    compute_channels, scan, train_features, window_features, BoostedClassifier, ChannelConfig, ChannelError, Detection,
    ScanError, ScanOptions, TrainConfig, TrainError, TrainOutcome, WindowModel,
};
use crate::geometry::{CameraParams, GeometryError};
use crate::planner::{enumerate_windows, pinhole_anchors, SizeAnchor, Window, WindowPlan};

/// Nominal vehicle rear face used for benchmark anchors, meters.
pub const NOMINAL_W: f64 = 1.8;
pub const NOMINAL_H: f64 = 1.5;

/// 1280x720 camera with the example mounting (h = 1.225 m).
pub fn example_camera() -> CameraParams {
    CameraParams::new(1.225, 0.1194, 1094.313, 363.331, 1280, 720).expect("valid constants")
}

/// Size anchors for the nominal vehicle under `params`.
pub fn benchmark_anchors(params: &CameraParams) -> Vec<SizeAnchor> {
    pinhole_anchors(params.f_y, NOMINAL_W, NOMINAL_H, &[5.0, 10.0, 20.0, 40.0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    pub n_scenes: usize,
    pub min_vehicles: usize,
    pub max_vehicles: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_scenes: 200,
            min_vehicles: 1,
            max_vehicles: 4,
            d_min: 5.0,
            d_max: 40.0,
            seed: 1,
        }
    }
}

/// Pixels kept free around each vehicle so boxes never touch.
const GAP_PX: f64 = 8.0;
const PLACEMENT_ATTEMPTS: usize = 200;

fn random_vehicle(params: &CameraParams, cfg: &CorpusConfig, rng: &mut ChaCha8Rng) -> VehicleSpec {
    let d = rng.gen_range(cfg.d_min..=cfg.d_max);
    let real_w = rng.gen_range(1.7..=1.9);
    let real_h = rng.gen_range(1.4..=1.6);
    let half_w = 0.5 * params.f_y * real_w / d;
    let cx = rng.gen_range(half_w + 1.0..=params.image_w as f64 - half_w - 1.0);
    let lateral = (cx - params.image_w as f64 / 2.0) * d / params.f_y;
    let shade = if rng.gen_bool(0.5) {
        rng.gen_range(150..=230)
    } else {
        rng.gen_range(15..=45)
    };
    VehicleSpec { d, lateral, real_w, real_h, shade }
}

fn fits(b: &BBox, params: &CameraParams) -> bool {
    b.x >= 0.0 && b.y >= 0.0 && b.right() <= params.image_w as f64 && b.bottom() <= params.image_h as f64
}

fn padded(b: &BBox) -> BBox {
    BBox::new(b.x - GAP_PX, b.y - GAP_PX, b.w + 2.0 * GAP_PX, b.h + 2.0 * GAP_PX)
}

/// One scene with `min..=max` vehicles fully inside the frame and not
/// touching each other. Placement is by rejection; a scene keeps whatever it
/// could place (at least one vehicle, since the first always fits).
pub fn random_scene(params: &CameraParams, cfg: &CorpusConfig, rng: &mut ChaCha8Rng) -> Result<SceneSpec, GeometryError> {
    let n = rng.gen_range(cfg.min_vehicles..=cfg.max_vehicles);
    let mut vehicles: Vec<VehicleSpec> = Vec::with_capacity(n);
    let mut boxes: Vec<BBox> = Vec::with_capacity(n);
    for _ in 0..PLACEMENT_ATTEMPTS {
        if vehicles.len() == n {
            break;
        }
        let v = random_vehicle(params, cfg, rng);
        let b = vehicle_box(params, &v)?;
        if fits(&b, params) && boxes.iter().all(|o| padded(o).intersection(&b) == 0.0) {
            vehicles.push(v);
            boxes.push(b);
        }
    }
    Ok(SceneSpec {
        params: *params,
        vehicles,
        background: rng.gen_range(80..=120),
        seed: rng.gen(),
    })
}

pub fn standard_corpus(params: &CameraParams, cfg: &CorpusConfig) -> Result<Vec<SceneSpec>, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_scenes).map(|_| random_scene(params, cfg, &mut rng)).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Channels(#[from] ChannelError),
    #[error("no plan window qualifies as a negative")]
    NoNegatives,
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    /// Jittered positives per ground-truth vehicle.
    pub per_vehicle: usize,
    /// Negatives drawn per scene.
    pub neg_per_scene: usize,
    /// Windows with IoU below this against every vehicle may be negatives.
    pub neg_iou_max: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_pos: 500,
            n_neg: 2000,
            per_vehicle: 2,
            neg_per_scene: 20,
            neg_iou_max: 0.3,
            seed: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

/// Ground-truth box perturbed by up to an eighth of an octave in scale and a
/// few percent in position, then snapped to integer pixels.
fn jittered_window(b: &BBox, rng: &mut ChaCha8Rng, image_w: u32, image_h: u32) -> Option<Window> {
    let s = 2f64.powf(rng.gen_range(-0.125..=0.125));
    let w = b.w * s;
    let h = b.h * s;
    let cx = b.x + b.w / 2.0 + rng.gen_range(-0.06..=0.06) * b.w;
    let bottom = b.bottom() + rng.gen_range(-0.04..=0.04) * b.h;
    let (x, y) = ((cx - w / 2.0).round(), (bottom - h).round());
    let (w, h) = (w.round(), h.round());
    (x >= 0.0 && y >= 0.0 && x + w <= image_w as f64 && y + h <= image_h as f64 && w >= 1.0 && h >= 1.0)
        .then_some(Window { x: x as u32, y: y as u32, w: w as u32, h: h as u32 })
}

fn window_box(w: &Window) -> BBox {
    BBox::new(w.x as f64, w.y as f64, w.w as f64, w.h as f64)
}

/// Renders fresh scenes (seeded independently of any test corpus) until the
/// positive and negative quotas are met. Positives are jittered vehicle
/// boxes, the first one per vehicle unjittered; negatives are plan windows
/// overlapping no vehicle by `neg_iou_max` or more, half of them drawn from
/// windows that touch a vehicle when such windows exist.
pub fn training_set(
    plan: &WindowPlan,
    model: &WindowModel,
    channel_cfg: &ChannelConfig,
    corpus: &CorpusConfig,
    cfg: &SampleConfig,
) -> Result<TrainingSet, SampleError> {
    let params = plan.params;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let windows = enumerate_windows(plan);
    let mut set = TrainingSet::default();
    let max_scenes = 10 * (cfg.n_pos + cfg.n_neg) + 10;
    for _ in 0..max_scenes {
        if set.positives.len() >= cfg.n_pos && set.negatives.len() >= cfg.n_neg {
            break;
        }
        let spec = random_scene(&params, corpus, &mut rng)?;
        let (img, gts) = render_scene(&spec)?;
        let stack = compute_channels(&img, channel_cfg)?;

        for g in &gts {
            for k in 0..cfg.per_vehicle {
                if set.positives.len() >= cfg.n_pos {
                    break;
                }
                let win = if k == 0 {
                    exact_window(&g.bbox)
                } else {
                    jittered_window(&g.bbox, &mut rng, params.image_w, params.image_h)
                };
                if let Some(win) = win {
                    set.positives.push(window_features(&stack, model, win));
                }
            }
        }

        if set.negatives.len() < cfg.n_neg {
            let (hard, easy) = negative_pools(&windows, &gts, cfg.neg_iou_max);
            let want = cfg.neg_per_scene.min(cfg.n_neg - set.negatives.len());
            let n_hard = (want / 2).min(hard.len());
            for w in hard.choose_multiple(&mut rng, n_hard) {
                set.negatives.push(window_features(&stack, model, *w));
            }
            for w in easy.choose_multiple(&mut rng, want - n_hard) {
                set.negatives.push(window_features(&stack, model, *w));
            }
        }
    }
    if set.negatives.is_empty() {
        return Err(SampleError::NoNegatives);
    }
    Ok(set)
}

fn exact_window(b: &BBox) -> Option<Window> {
    let (x, y, w, h) = (b.x.round(), b.y.round(), b.w.round(), b.h.round());
    (x >= 0.0 && y >= 0.0 && w >= 1.0 && h >= 1.0).then_some(Window { x: x as u32, y: y as u32, w: w as u32, h: h as u32 })
}

/// Splits candidate negatives into those overlapping some vehicle (hard)
/// and those overlapping none (easy).
fn negative_pools(windows: &[Window], gts: &[GroundTruth], iou_max: f64) -> (Vec<Window>, Vec<Window>) {
    let mut hard = Vec::new();
    let mut easy = Vec::new();
    for w in windows {
        let b = window_box(w);
        let best = gts.iter().map(|g| b.iou(&g.bbox)).fold(0.0, f64::max);
        if best >= iou_max {
            continue;
        }
        if best > 0.0 {
            hard.push(*w);
        } else {
            easy.push(*w);
        }
    }
    (hard, easy)
}

/// The `per_scene` highest-scoring plan windows of each fresh scene among
/// those overlapping every vehicle by less than `iou_max`.
#[allow(clippy::too_many_arguments)]
pub fn mine_hard_negatives(
    plan: &WindowPlan,
    clf: &BoostedClassifier,
    channel_cfg: &ChannelConfig,
    corpus: &CorpusConfig,
    n: usize,
    per_scene: usize,
    iou_max: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SampleError> {
    let params = plan.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = ScanOptions { score_min: f64::NEG_INFINITY, cascade_margin: f64::INFINITY, threads: 1, with_distance: false };
    let mut out = Vec::with_capacity(n);
    let max_scenes = 10 * n + 10;
    for _ in 0..max_scenes {
        if out.len() >= n {
            break;
        }
        let spec = random_scene(&params, corpus, &mut rng)?;
        let (img, gts) = render_scene(&spec)?;
        let stack = compute_channels(&img, channel_cfg)?;
        let mut hits: Vec<Detection> = scan(&stack, plan, clf, &opts)?
            .into_iter()
            .filter(|d| gts.iter().all(|g| d.bbox.iou(&g.bbox) < iou_max))
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));
        for d in hits.iter().take(per_scene.min(n - out.len())) {
            let b = d.bbox;
            let win = Window { x: b.x as u32, y: b.y as u32, w: b.w as u32, h: b.h as u32 };
            out.push(window_features(&stack, &clf.model, win));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyTrainConfig {
    pub window: (u32, u32),
    pub channels: ChannelConfig,
    pub samples: SampleConfig,
    pub train: TrainConfig,
    /// Scene layout for sampling; scenes are seeded from `samples.seed`.
    pub corpus: CorpusConfig,
    /// Share of the negative budget filled by hard negatives mined with a
    /// first-stage classifier. 0 trains a single stage on random negatives.
    pub bootstrap_frac: f64,
    pub mine_per_scene: usize,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            window: (48, 40),
            channels: ChannelConfig::default(),
            samples: SampleConfig::default(),
            train: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            bootstrap_frac: 0.5,
            mine_per_scene: 10,
        }
    }
}

/// Trains a classifier on synthetic scenes. With bootstrapping, stage one
/// trains on the random negatives, stage two retrains on those plus mined
/// false positives; both stages use the same positives.
pub fn train_toy_classifier(plan: &WindowPlan, cfg: &ToyTrainConfig) -> Result<TrainOutcome, SampleError> {
    let model = WindowModel {
        w: cfg.window.0,
        h: cfg.window.1,
        shrink: cfg.channels.shrink,
        n_channels: cfg.channels.n_channels(),
    };
    if !(0.0..1.0).contains(&cfg.bootstrap_frac) {
        return Err(SampleError::InvalidConfig("bootstrap_frac must be in [0, 1)".into()));
    }
    let n_hard = (cfg.samples.n_neg as f64 * cfg.bootstrap_frac).round() as usize;
    let first = SampleConfig { n_neg: cfg.samples.n_neg - n_hard, ..cfg.samples };
    let mut set = training_set(plan, &model, &cfg.channels, &cfg.corpus, &first)?;
    let stage1 = train_features(&set.positives, &set.negatives, model, &cfg.train)?;
    if n_hard == 0 {
        return Ok(stage1);
    }
    let hard = mine_hard_negatives(
        plan,
        &stage1.classifier,
        &cfg.channels,
        &cfg.corpus,
        n_hard,
        cfg.mine_per_scene,
        cfg.samples.neg_iou_max,
        cfg.samples.seed.wrapping_add(1),
    )?;
    set.negatives.extend(hard);
    Ok(train_features(&set.positives, &set.negatives, model, &cfg.train)?)
}
