//! Plan-driven window scanning.

use std::num::NonZeroUsize;
use std::thread;

use super::boost::{BoostedClassifier, WindowModel};
use super::channels::ChannelStack;
use crate::bbox::BBox;
use crate::geometry::distance_from_row;
use crate::planner::{Window, WindowPlan};

/// Largest tolerated relative aspect-ratio difference between a band and the
/// classifier window.
pub const MAX_ASPECT_MISMATCH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScanError {
    #[error("band {band} ({w}x{h}) differs in aspect from the {mw}x{mh} classifier window by more than 50%")]
    ModelPlanMismatch { band: usize, w: u32, h: u32, mw: u32, mh: u32 },
    #[error("channel stack has {got} channels, classifier expects {expected}")]
    ChannelMismatch { got: usize, expected: usize },
    #[error("channel stack shrink {got} differs from classifier shrink {expected}")]
    ShrinkMismatch { got: u32, expected: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    /// Ground distance of the bottom edge, when a calibration is attached.
    pub distance: Option<f64>,
    /// Position in the plan's window enumeration; the deterministic tie-breaker.
    pub order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub score_min: f64,
    /// Prune once a prefix score falls below its cascade threshold minus
    /// this margin. `f64::INFINITY` disables pruning.
    pub cascade_margin: f64,
    /// Worker threads; 1 scans on the calling thread.
    pub threads: usize,
    /// Attach distances from the plan's calibration.
    pub with_distance: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            score_min: 0.0,
            cascade_margin: 0.1,
            threads: 1,
            with_distance: true,
        }
    }
}

/// Maps classifier feature indices onto stack cells for one window size by
/// nearest-cell lookup: model cell `c` samples the stack cell containing the
/// pixel at the center of the corresponding fraction of the window.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    col_offset: Vec<f64>,
    row_offset: Vec<f64>,
    grid_w: usize,
    per_plane: usize,
    shrink: f64,
}

impl FeatureMap {
    pub fn new(model: &WindowModel, w: u32, h: u32) -> Self {
        let (gw, gh) = (model.grid_w(), model.grid_h());
        let sx = w as f64 / gw as f64;
        let sy = h as f64 / gh as f64;
        Self {
            col_offset: (0..gw).map(|c| (c as f64 + 0.5) * sx).collect(),
            row_offset: (0..gh).map(|r| (r as f64 + 0.5) * sy).collect(),
            grid_w: gw,
            per_plane: gw * gh,
            shrink: model.shrink as f64,
        }
    }

    #[inline]
    pub fn lookup(&self, stack: &ChannelStack, x: u32, y: u32, f: usize) -> f64 {
        let c = f / self.per_plane;
        let cell = f % self.per_plane;
        let (cx, cy) = (cell % self.grid_w, cell / self.grid_w);
        let ix = ((x as f64 + self.col_offset[cx]) / self.shrink) as usize;
        let iy = ((y as f64 + self.row_offset[cy]) / self.shrink) as usize;
        stack.get(c, ix.min(stack.width - 1), iy.min(stack.height - 1))
    }

    /// All features of the window at `(x, y)`, in classifier order.
    pub fn features(&self, stack: &ChannelStack, x: u32, y: u32, n_channels: usize) -> Vec<f64> {
        (0..n_channels * self.per_plane)
            .map(|f| self.lookup(stack, x, y, f))
            .collect()
    }
}

/// Features of an arbitrary pixel window, as the scanner would see them.
pub fn window_features(stack: &ChannelStack, model: &WindowModel, window: Window) -> Vec<f64> {
    FeatureMap::new(model, window.w, window.h).features(stack, window.x, window.y, model.n_channels)
}

pub fn check_compatible(stack: &ChannelStack, plan: &WindowPlan, clf: &BoostedClassifier) -> Result<(), ScanError> {
    let m = &clf.model;
    if stack.n_channels != m.n_channels {
        return Err(ScanError::ChannelMismatch {
            got: stack.n_channels,
            expected: m.n_channels,
        });
    }
    if stack.shrink != m.shrink {
        return Err(ScanError::ShrinkMismatch {
            got: stack.shrink,
            expected: m.shrink,
        });
    }
    for (i, b) in plan.bands.iter().enumerate() {
        let ratio = (b.w as f64 / b.h as f64) / m.aspect();
        if (ratio - 1.0).abs() > MAX_ASPECT_MISMATCH {
            return Err(ScanError::ModelPlanMismatch {
                band: i,
                w: b.w,
                h: b.h,
                mw: m.w,
                mh: m.h,
            });
        }
    }
    Ok(())
}

/// Evaluates every window of `plan` and returns those scoring at least
/// `score_min`, in window order.
pub fn scan(
    stack: &ChannelStack,
    plan: &WindowPlan,
    clf: &BoostedClassifier,
    opts: &ScanOptions,
) -> Result<Vec<Detection>, ScanError> {
    check_compatible(stack, plan, clf)?;
    let maps: Vec<FeatureMap> = plan
        .bands
        .iter()
        .map(|b| FeatureMap::new(&clf.model, b.w, b.h))
        .collect();
    let windows: Vec<(usize, Window)> = plan.windows().collect();

    let eval_chunk = |start: usize, chunk: &[(usize, Window)]| -> Vec<Detection> {
        let mut out = Vec::new();
        for (k, &(band, win)) in chunk.iter().enumerate() {
            let map = &maps[band];
            let Some(score) = clf.score_cascade(|f| map.lookup(stack, win.x, win.y, f), opts.cascade_margin)
            else {
                continue;
            };
            if score < opts.score_min {
                continue;
            }
            let distance = if opts.with_distance {
                distance_from_row(&plan.params, win.bottom() as f64).ok()
            } else {
                None
            };
            out.push(Detection {
                bbox: BBox::new(win.x as f64, win.y as f64, win.w as f64, win.h as f64),
                score,
                distance,
                order: start + k,
            });
        }
        out
    };

    let threads = opts.threads.max(1).min(windows.len().max(1));
    if threads == 1 {
        return Ok(eval_chunk(0, &windows));
    }
    let chunk_len = windows.len().div_ceil(threads);
    let parts: Vec<Vec<Detection>> = thread::scope(|s| {
        let handles: Vec<_> = windows
            .chunks(chunk_len)
            .enumerate()
            .map(|(i, chunk)| {
                let eval_chunk = &eval_chunk;
                s.spawn(move || eval_chunk(i * chunk_len, chunk))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scan worker panicked"))
            .collect()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Worker count from a `MONOFCW_THREADS`-style setting: 0 means all cores.
pub fn resolve_threads(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        thread::available_parallelism().map_or(1, NonZeroUsize::get)
    }
}
