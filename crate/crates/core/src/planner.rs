//! Distance-indexed sliding-window plans.
//!
//! Instead of sliding every window size over the whole frame, each distance
//! bin gets one window size, placed only on the rows where a vehicle at that
//! distance touches the ground. Bins are spaced geometrically in distance.

use std::fmt::Write as _;

use crate::format::{self, FormatError};
use crate::geometry::{row_from_distance, CameraParams, GeometryError};

pub const PLAN_HEADER: &str = "#monofcw-plan v1";
const CAMERA_TAG: &str = "#camera";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no size anchors given")]
    NoAnchors,
    #[error("invalid size anchors: {0}")]
    InvalidAnchors(String),
    #[error("invalid plan configuration: {0}")]
    InvalidConfig(String),
    #[error("every band falls outside the image")]
    EmptyPlan,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Typical vehicle window size at a given distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeAnchor {
    pub d: f64,
    pub w: f64,
    pub h: f64,
}

impl SizeAnchor {
    pub const fn new(d: f64, w: f64, h: f64) -> Self {
        Self { d, w, h }
    }
}

/// Window sizes observed on a wide-angle dash camera at 5, 10 and 20 m.
pub fn default_anchors() -> Vec<SizeAnchor> {
    vec![
        SizeAnchor::new(5.0, 400.0, 275.0),
        SizeAnchor::new(10.0, 110.0, 95.0),
        SizeAnchor::new(20.0, 50.0, 45.0),
    ]
}

/// Anchors for an ideal pinhole view of a `real_w x real_h` meter object.
pub fn pinhole_anchors(f_y: f64, real_w: f64, real_h: f64, distances: &[f64]) -> Vec<SizeAnchor> {
    distances
        .iter()
        .map(|&d| SizeAnchor::new(d, f_y * real_w / d, f_y * real_h / d))
        .collect()
}

pub fn validate_anchors(anchors: &[SizeAnchor]) -> Result<(), PlanError> {
    if anchors.is_empty() {
        return Err(PlanError::NoAnchors);
    }
    for a in anchors {
        if !(a.d > 0.0 && a.w > 0.0 && a.h > 0.0) || !(a.d.is_finite() && a.w.is_finite() && a.h.is_finite()) {
            return Err(PlanError::InvalidAnchors(format!("{a:?} must be positive and finite")));
        }
    }
    if anchors.windows(2).any(|p| p[1].d <= p[0].d) {
        return Err(PlanError::InvalidAnchors("distances must be strictly increasing".into()));
    }
    Ok(())
}

/// Window `(w, h)` at distance `d`: log-log linear between bracketing
/// anchors, `1/d` scaling from the nearest anchor outside their range.
pub fn interpolate_size(anchors: &[SizeAnchor], d: f64) -> Result<(f64, f64), PlanError> {
    validate_anchors(anchors)?;
    if !(d.is_finite() && d > 0.0) {
        return Err(PlanError::Geometry(GeometryError::InvalidDistance(d)));
    }
    let first = anchors[0];
    let last = anchors[anchors.len() - 1];
    if d <= first.d {
        let k = first.d / d;
        return Ok((first.w * k, first.h * k));
    }
    if d >= last.d {
        let k = last.d / d;
        return Ok((last.w * k, last.h * k));
    }
    let hi = anchors.partition_point(|a| a.d < d);
    let (lo, hi) = (anchors[hi - 1], anchors[hi]);
    if hi.d == d {
        return Ok((hi.w, hi.h));
    }
    let s = (d / lo.d).ln() / (hi.d / lo.d).ln();
    let lerp = |a: f64, b: f64| (a.ln() + s * (b.ln() - a.ln())).exp();
    Ok((lerp(lo.w, hi.w), lerp(lo.h, hi.h)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub bins_per_octave: u32,
    /// Half-height of the vertical search band as a fraction of window height.
    pub v_tol_frac: f64,
    /// Window strides as a fraction of window size.
    pub stride_frac: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            d_min: 5.0,
            d_max: 40.0,
            bins_per_octave: 4,
            v_tol_frac: 0.25,
            stride_frac: 0.125,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.d_min > 0.0 && self.d_min <= self.d_max && self.d_max.is_finite()) {
            return Err(PlanError::InvalidConfig(format!(
                "need 0 < d_min <= d_max, got [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        if self.bins_per_octave == 0 {
            return Err(PlanError::InvalidConfig("bins_per_octave must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.v_tol_frac) {
            return Err(PlanError::InvalidConfig("v_tol_frac must be in [0, 1]".into()));
        }
        if !(self.stride_frac > 0.0 && self.stride_frac <= 1.0) {
            return Err(PlanError::InvalidConfig("stride_frac must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One distance bin of a plan. Windows are `w x h` with their bottom edge
/// within `v_tol` rows of `v_anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowBand {
    pub d: f64,
    /// Row of the window bottom edge (ground contact) for distance `d`.
    pub v_anchor: f64,
    pub v_tol: f64,
    pub w: u32,
    pub h: u32,
    pub x_stride: u32,
    pub v_stride: u32,
}

/// Pixel window: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Window {
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }
}

impl WindowBand {
    /// Window top rows of this band that keep the window inside an image of
    /// height `image_h`, ascending. Bottom edges sit at `v_anchor + j * v_stride`
    /// for `|j * v_stride| <= v_tol`, rounded to the nearest row.
    pub fn rows(&self, image_h: u32) -> Vec<u32> {
        let stride = self.v_stride.max(1) as f64;
        let reach = (self.v_tol / stride).floor() as i64;
        let mut out = Vec::new();
        for j in -reach..=reach {
            let bottom = (self.v_anchor + j as f64 * stride).round();
            if bottom < self.h as f64 || bottom > image_h as f64 {
                continue;
            }
            let top = bottom as u32 - self.h;
            if out.last() != Some(&top) {
                out.push(top);
            }
        }
        out
    }

    pub fn columns(&self, image_w: u32) -> impl Iterator<Item = u32> {
        let count = if self.w > image_w {
            0
        } else {
            (image_w - self.w) / self.x_stride.max(1) + 1
        };
        let stride = self.x_stride.max(1);
        (0..count).map(move |i| i * stride)
    }

    pub fn window_count(&self, image_w: u32, image_h: u32) -> usize {
        self.rows(image_h).len() * self.columns(image_w).count()
    }

    fn validate(&self) -> Result<(), String> {
        let reals = [self.d, self.v_anchor, self.v_tol];
        if !reals.iter().all(|x| x.is_finite()) || self.d <= 0.0 || self.v_tol < 0.0 {
            return Err(format!("band reals must be finite with d > 0, v_tol >= 0: {self:?}"));
        }
        if self.w == 0 || self.h == 0 || self.x_stride == 0 || self.v_stride == 0 {
            return Err("band sizes and strides must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub bands: Vec<WindowBand>,
    pub params: CameraParams,
}

fn px(x: f64) -> u32 {
    x.round().max(1.0) as u32
}

fn make_band(
    params: &CameraParams,
    d: f64,
    size: (f64, f64),
    v_tol: f64,
    stride_frac: f64,
) -> Result<WindowBand, PlanError> {
    let (w, h) = size;
    Ok(WindowBand {
        d,
        v_anchor: row_from_distance(params, d)?,
        v_tol,
        w: px(w),
        h: px(h),
        x_stride: px(stride_frac * w),
        v_stride: px(stride_frac * h),
    })
}

/// Builds the distance-prior plan.
///
/// Bin centers are `d_min * 2^(k / bins_per_octave)` up to `d_max`. Each band
/// searches `v_tol_frac * h` rows around its anchor row, but never past the
/// anchor rows of the neighbouring bins, so the bottom edge of every window
/// maps back to a distance between the neighbouring bin centers.
pub fn plan_windows(
    params: &CameraParams,
    anchors: &[SizeAnchor],
    cfg: &PlanConfig,
) -> Result<WindowPlan, PlanError> {
    params.validate()?;
    validate_anchors(anchors)?;
    cfg.validate()?;
    let step = 2f64.powf(1.0 / cfg.bins_per_octave as f64);
    let mut bands = Vec::new();
    for k in 0.. {
        let d = cfg.d_min * 2f64.powf(k as f64 / cfg.bins_per_octave as f64);
        if d > cfg.d_max * (1.0 + 1e-12) {
            break;
        }
        let size = interpolate_size(anchors, d)?;
        let v = row_from_distance(params, d)?;
        let gap_near = row_from_distance(params, d / step)? - v;
        let gap_far = v - row_from_distance(params, d * step)?;
        // Half a row of slack for rounding bottoms to whole pixels.
        let v_tol = (cfg.v_tol_frac * size.1).min(gap_near - 0.5).min(gap_far - 0.5).max(0.0);
        let band = make_band(params, d, size, v_tol, cfg.stride_frac)?;
        if !band.rows(params.image_h).is_empty() && band.w <= params.image_w {
            bands.push(band);
        }
    }
    if bands.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    Ok(WindowPlan {
        bands,
        params: *params,
    })
}

/// Conventional multi-scale baseline covering the same window sizes as
/// `plan_windows` over `[d_min, d_max]`: `scales_per_octave` window widths per
/// factor two, each slid over the whole frame.
pub fn exhaustive_plan(
    params: &CameraParams,
    anchors: &[SizeAnchor],
    d_min: f64,
    d_max: f64,
    scales_per_octave: u32,
    stride_frac: f64,
) -> Result<WindowPlan, PlanError> {
    params.validate()?;
    let cfg = PlanConfig {
        d_min,
        d_max,
        bins_per_octave: scales_per_octave,
        v_tol_frac: 0.0,
        stride_frac,
    };
    cfg.validate()?;
    let w_max = interpolate_size(anchors, d_min)?.0;
    let w_min = interpolate_size(anchors, d_max)?.0;
    let n = ((w_max / w_min).log2() * scales_per_octave as f64 + 1e-9).floor() as i64;
    let full = params.image_h as f64;
    let mut bands = Vec::new();
    for k in 0..=n {
        let w = w_max * 2f64.powf(-(k as f64) / scales_per_octave as f64);
        let d = distance_for_width(anchors, w, d_min, d_max)?;
        let size = interpolate_size(anchors, d)?;
        let mut band = make_band(params, d, size, full, stride_frac)?;
        band.v_anchor = full;
        if !band.rows(params.image_h).is_empty() && band.w <= params.image_w {
            bands.push(band);
        }
    }
    if bands.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    Ok(WindowPlan {
        bands,
        params: *params,
    })
}

/// Inverts the (monotone decreasing) width curve on `[lo, hi]` by bisection.
fn distance_for_width(anchors: &[SizeAnchor], w: f64, mut lo: f64, mut hi: f64) -> Result<f64, PlanError> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if interpolate_size(anchors, mid)?.0 > w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl WindowPlan {
    /// Windows in deterministic order: band, then top row, then left column.
    pub fn windows(&self) -> impl Iterator<Item = (usize, Window)> + '_ {
        let (iw, ih) = (self.params.image_w, self.params.image_h);
        self.bands.iter().enumerate().flat_map(move |(bi, band)| {
            let rows = band.rows(ih);
            rows.into_iter().flat_map(move |y| {
                band.columns(iw).map(move |x| {
                    (
                        bi,
                        Window {
                            x,
                            y,
                            w: band.w,
                            h: band.h,
                        },
                    )
                })
            })
        })
    }

    pub fn window_count(&self) -> usize {
        self.bands
            .iter()
            .map(|b| b.window_count(self.params.image_w, self.params.image_h))
            .sum()
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "{PLAN_HEADER}");
        let _ = writeln!(
            out,
            "{CAMERA_TAG} {} {} {} {} {} {}",
            format::real(p.h),
            format::real(p.alpha),
            format::real(p.f_y),
            format::real(p.v0),
            p.image_w,
            p.image_h
        );
        for b in &self.bands {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                format::real(b.d),
                format::real(b.v_anchor),
                format::real(b.v_tol),
                b.w,
                b.h,
                b.x_stride,
                b.v_stride
            );
        }
        out
    }

    /// Parses a plan file. The `#camera` line carries the calibration the
    /// plan was built for; other `#` lines are comments.
    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == PLAN_HEADER => {}
            _ => return Err(FormatError::new(1, format!("expected header {PLAN_HEADER:?}"))),
        }
        let mut params = None;
        let mut bands: Vec<WindowBand> = Vec::new();
        for (i, raw) in lines {
            let line = i + 1;
            let raw = raw.trim();
            if let Some(rest) = raw.strip_prefix(CAMERA_TAG) {
                let [h, a, f, v0, w, ih] = format::fields::<6>(rest, line)?;
                let p = CameraParams {
                    h: format::parse_finite(h, line, "h")?,
                    alpha: format::parse_finite(a, line, "alpha")?,
                    f_y: format::parse_finite(f, line, "f_y")?,
                    v0: format::parse_finite(v0, line, "v0")?,
                    image_w: format::parse_field(w, line, "image_w")?,
                    image_h: format::parse_field(ih, line, "image_h")?,
                };
                p.validate().map_err(|e| FormatError::new(line, e.to_string()))?;
                if params.replace(p).is_some() {
                    return Err(FormatError::new(line, "duplicate camera line"));
                }
                continue;
            }
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let [d, va, vt, w, h, xs, vs] = format::fields::<7>(content, line)?;
            let band = WindowBand {
                d: format::parse_finite(d, line, "d_m")?,
                v_anchor: format::parse_finite(va, line, "v_anchor")?,
                v_tol: format::parse_finite(vt, line, "v_tol")?,
                w: format::parse_field(w, line, "w")?,
                h: format::parse_field(h, line, "h")?,
                x_stride: format::parse_field(xs, line, "x_stride")?,
                v_stride: format::parse_field(vs, line, "v_stride")?,
            };
            band.validate().map_err(|m| FormatError::new(line, m))?;
            if let Some(prev) = bands.last() {
                if band.d <= prev.d {
                    return Err(FormatError::new(line, "band distances must be strictly increasing"));
                }
            }
            bands.push(band);
        }
        let params = params.ok_or_else(|| FormatError::new(1, "missing #camera line"))?;
        Ok(WindowPlan { bands, params })
    }
}

pub fn enumerate_windows(plan: &WindowPlan) -> Vec<Window> {
    plan.windows().map(|(_, w)| w).collect()
}

/// Anchor file: one `d_m w_px h_px` triple per line, `#` comments allowed.
pub fn parse_anchors(text: &str) -> Result<Vec<SizeAnchor>, FormatError> {
    let mut out: Vec<SizeAnchor> = Vec::new();
    for (line, content) in format::content_lines(text) {
        let [d, w, h] = format::fields::<3>(content, line)?;
        let a = SizeAnchor::new(
            format::parse_finite(d, line, "d_m")?,
            format::parse_finite(w, line, "w")?,
            format::parse_finite(h, line, "h")?,
        );
        out.push(a);
        validate_anchors(&out).map_err(|e| FormatError::new(line, e.to_string()))?;
    }
    Ok(out)
}

pub fn write_anchors(anchors: &[SizeAnchor]) -> String {
    let mut out = String::new();
    for a in anchors {
        let _ = writeln!(out, "{} {} {}", format::real(a.d), format::real(a.w), format::real(a.h));
    }
    out
}
