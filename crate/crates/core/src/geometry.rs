//! Ground-plane pinhole geometry.
//!
//! A camera mounted at height `h` above a flat road, pitched down by
//! `alpha`, sees a ground point at longitudinal distance `d` on image row
//!
//! ```text
//! v(d) = v0 + f_y * tan(atan(h / d) - alpha)
//! ```
//!
//! and conversely
//!
//! ```text
//! d(v) = h / tan(alpha + atan((v - v0) / f_y))
//! ```
//!
//! Rows grow downward, so every ground point ahead of the camera lies below
//! the horizon row `v0 - f_y * tan(alpha)`. Distances are measured from the
//! point on the ground directly below the optical center.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use crate::format::{self, FormatError};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid camera parameters: {0}")]
    InvalidParams(&'static str),
    #[error("row {row} is at or above the horizon row {horizon}")]
    AtOrAboveHorizon { row: f64, horizon: f64 },
    #[error("row {row} lies beneath the camera (viewing angle reaches 90 degrees)")]
    AngleOverflow { row: f64 },
    #[error("distance must be positive and finite, got {0}")]
    InvalidDistance(f64),
}

/// Calibrated ground-plane camera model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    /// Camera height above the ground, meters.
    pub h: f64,
    /// Downward pitch of the optical axis, radians.
    pub alpha: f64,
    /// Focal length in vertical pixel units (f / dy).
    pub f_y: f64,
    /// Principal-point row, pixels.
    pub v0: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraParams {
    pub fn new(
        h: f64,
        alpha: f64,
        f_y: f64,
        v0: f64,
        image_w: u32,
        image_h: u32,
    ) -> Result<Self, GeometryError> {
        let params = Self {
            h,
            alpha,
            f_y,
            v0,
            image_w,
            image_h,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(GeometryError::InvalidParams("camera height must be > 0"));
        }
        if !(self.f_y.is_finite() && self.f_y > 0.0) {
            return Err(GeometryError::InvalidParams("f_y must be > 0"));
        }
        if !(self.alpha.is_finite() && self.alpha.abs() < FRAC_PI_2) {
            return Err(GeometryError::InvalidParams("|alpha| must be < pi/2"));
        }
        if !self.v0.is_finite() {
            return Err(GeometryError::InvalidParams("v0 must be finite"));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(GeometryError::InvalidParams("image size must be positive"));
        }
        if !self.horizon_row().is_finite() {
            return Err(GeometryError::InvalidParams("horizon row is not finite"));
        }
        Ok(())
    }

    /// Row where the ground plane meets infinity.
    pub fn horizon_row(&self) -> f64 {
        horizon_row(self)
    }

    pub fn distance_from_row(&self, v: f64) -> Result<f64, GeometryError> {
        distance_from_row(self, v)
    }

    pub fn row_from_distance(&self, d: f64) -> Result<f64, GeometryError> {
        row_from_distance(self, d)
    }

    /// Writes the `key = value` calibration file.
    pub fn to_calibration_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "h_m = {}", format::real(self.h));
        let _ = writeln!(out, "alpha_rad = {}", format::real(self.alpha));
        let _ = writeln!(out, "fy_px = {}", format::real(self.f_y));
        let _ = writeln!(out, "v0_px = {}", format::real(self.v0));
        let _ = writeln!(out, "image_w = {}", self.image_w);
        let _ = writeln!(out, "image_h = {}", self.image_h);
        out
    }

    /// Parses a calibration file. Every key must appear exactly once; unknown
    /// keys are rejected.
    pub fn from_calibration_text(text: &str) -> Result<Self, FormatError> {
        let mut h = None;
        let mut alpha = None;
        let mut f_y = None;
        let mut v0 = None;
        let mut image_w = None;
        let mut image_h = None;
        let mut last_line = 0;
        for (line, content) in format::content_lines(text) {
            last_line = line;
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| FormatError::new(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            fn set<T>(slot: &mut Option<T>, v: T, key: &str, line: usize) -> Result<(), FormatError> {
                if slot.replace(v).is_some() {
                    return Err(FormatError::new(line, format!("duplicate key {key}")));
                }
                Ok(())
            }
            match key {
                "h_m" => set(&mut h, format::parse_finite(value, line, key)?, key, line)?,
                "alpha_rad" => set(&mut alpha, format::parse_finite(value, line, key)?, key, line)?,
                "fy_px" => set(&mut f_y, format::parse_finite(value, line, key)?, key, line)?,
                "v0_px" => set(&mut v0, format::parse_finite(value, line, key)?, key, line)?,
                "image_w" => set(&mut image_w, format::parse_field(value, line, key)?, key, line)?,
                "image_h" => set(&mut image_h, format::parse_field(value, line, key)?, key, line)?,
                other => return Err(FormatError::new(line, format!("unknown key {other:?}"))),
            }
        }
        let missing = |name: &str| FormatError::new(last_line, format!("missing key {name}"));
        let params = CameraParams {
            h: h.ok_or_else(|| missing("h_m"))?,
            alpha: alpha.ok_or_else(|| missing("alpha_rad"))?,
            f_y: f_y.ok_or_else(|| missing("fy_px"))?,
            v0: v0.ok_or_else(|| missing("v0_px"))?,
            image_w: image_w.ok_or_else(|| missing("image_w"))?,
            image_h: image_h.ok_or_else(|| missing("image_h"))?,
        };
        params
            .validate()
            .map_err(|e| FormatError::new(last_line, e.to_string()))?;
        Ok(params)
    }
}

/// Longitudinal ground distance to the point imaged on row `v`.
///
/// Evaluated as `h (1 - a s) / (a + s)` with `a = tan(alpha)` and
/// `s = (v - v0) / f_y`, which is `h / tan(alpha + atan(s))` expanded. The
/// composed angle lies in `(0, pi/2)` exactly when both `a + s` and
/// `1 - a s` are positive.
pub fn distance_from_row(params: &CameraParams, v: f64) -> Result<f64, GeometryError> {
    let horizon = horizon_row(params);
    if !(v > horizon) {
        return Err(GeometryError::AtOrAboveHorizon { row: v, horizon });
    }
    let a = params.alpha.tan();
    let s = (v - params.v0) / params.f_y;
    // a + s == (v - horizon) / f_y, which keeps precision near the horizon.
    let sin_part = (v - horizon) / params.f_y;
    let cos_part = 1.0 - a * s;
    if !(cos_part > 0.0) {
        return Err(GeometryError::AngleOverflow { row: v });
    }
    Ok(params.h * cos_part / sin_part)
}

/// Image row of the ground point at distance `d`. The result may fall outside
/// the image; callers clip.
pub fn row_from_distance(params: &CameraParams, d: f64) -> Result<f64, GeometryError> {
    if !(d.is_finite() && d > 0.0) {
        return Err(GeometryError::InvalidDistance(d));
    }
    let t = params.h / d;
    let a = params.alpha.tan();
    // tan(atan(t) - alpha) = (t - a) / (1 + t a)
    Ok(params.v0 + params.f_y * (t - a) / (1.0 + t * a))
}

pub fn horizon_row(params: &CameraParams) -> f64 {
    params.v0 - params.f_y * params.alpha.tan()
}
