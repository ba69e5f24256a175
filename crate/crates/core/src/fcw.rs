//! Forward-collision warning from per-frame nearest-vehicle distances.
//!
//! Policy: ALERT when the vehicle is closer than `d_alert` or the time
//! headway `d / closing_speed` drops under `headway_alert`; CAUTION when it
//! is closer than `d_caution`; otherwise NONE. Closing speed is the
//! exponentially smoothed frame-to-frame distance decrease.

use std::fmt;
use std::str::FromStr;

use crate::bbox::BBox;
use crate::detector::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WarningLevel {
    None,
    Caution,
    Alert,
}

impl fmt::Display for WarningLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarningLevel::None => "NONE",
            WarningLevel::Caution => "CAUTION",
            WarningLevel::Alert => "ALERT",
        })
    }
}

impl FromStr for WarningLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NONE" => Ok(WarningLevel::None),
            "CAUTION" => Ok(WarningLevel::Caution),
            "ALERT" => Ok(WarningLevel::Alert),
            other => Err(format!("unknown warning level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcwConfig {
    pub d_alert: f64,
    pub d_caution: f64,
    pub headway_alert: f64,
    /// Weight of the newest closing-speed sample, in (0, 1].
    pub smoothing: f64,
    /// Seconds without an observation before the track is dropped.
    pub coast_limit: f64,
}

impl Default for FcwConfig {
    fn default() -> Self {
        Self {
            d_alert: 7.0,
            d_caution: 15.0,
            headway_alert: 1.5,
            smoothing: 0.4,
            coast_limit: 1.0,
        }
    }
}

impl FcwConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_alert > 0.0 && self.d_alert < self.d_caution) {
            return Err("need 0 < d_alert < d_caution".into());
        }
        if !(self.headway_alert > 0.0) {
            return Err("headway_alert must be > 0".into());
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err("smoothing must be in (0, 1]".into());
        }
        if !(self.coast_limit > 0.0) {
            return Err("coast_limit must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackState {
    pub last_d: Option<f64>,
    /// Smoothed closing speed, m/s; positive when approaching.
    pub closing_speed: f64,
    /// Time since the last observation.
    pub since_obs: f64,
}

/// Warning level for distance `d` at closing speed `closing_speed`.
pub fn classify(d: f64, closing_speed: f64, cfg: &FcwConfig) -> WarningLevel {
    if d < cfg.d_alert || (closing_speed > 0.0 && d / closing_speed < cfg.headway_alert) {
        WarningLevel::Alert
    } else if d < cfg.d_caution {
        WarningLevel::Caution
    } else {
        WarningLevel::None
    }
}

/// One observation `dt` seconds after the previous one.
pub fn update(state: TrackState, d: f64, dt: f64, cfg: &FcwConfig) -> (TrackState, WarningLevel) {
    let closing_speed = match state.last_d {
        Some(last) => {
            let raw = (last - d) / dt;
            cfg.smoothing * raw + (1.0 - cfg.smoothing) * state.closing_speed
        }
        None => 0.0,
    };
    let next = TrackState {
        last_d: Some(d),
        closing_speed,
        since_obs: 0.0,
    };
    (next, classify(d, closing_speed, cfg))
}

/// A frame with no observation: the track coasts, and resets once
/// `coast_limit` has passed.
pub fn coast(state: TrackState, dt: f64, cfg: &FcwConfig) -> TrackState {
    let since_obs = state.since_obs + dt;
    // Tolerance so that ten 0.1 s frames count as a full second.
    if state.last_d.is_none() || since_obs >= cfg.coast_limit - 1e-9 {
        TrackState::default()
    } else {
        TrackState { since_obs, ..state }
    }
}

/// Stateful wrapper over `update`/`coast` for a single in-path track.
#[derive(Debug, Clone)]
pub struct FcwTracker {
    pub cfg: FcwConfig,
    pub state: TrackState,
}

impl FcwTracker {
    pub fn new(cfg: FcwConfig) -> Self {
        Self {
            cfg,
            state: TrackState::default(),
        }
    }

    /// Feeds one frame. The time since the previous observation accumulates
    /// across coasted frames.
    pub fn step(&mut self, distance: Option<f64>, dt: f64) -> WarningLevel {
        match distance {
            Some(d) => {
                let elapsed = self.state.since_obs + dt;
                let (s, level) = update(self.state, d, elapsed, &self.cfg);
                self.state = s;
                level
            }
            None => {
                self.state = coast(self.state, dt, &self.cfg);
                WarningLevel::None
            }
        }
    }
}

/// Nearest detection whose box overlaps the central corridor
/// `image_w/2 +- corridor_frac * image_w / 2`.
pub fn nearest_in_path(dets: &[Detection], image_w: f64, corridor_frac: f64) -> Option<&Detection> {
    let half = 0.5 * corridor_frac * image_w;
    let corridor = BBox::new(0.5 * image_w - half, f64::MIN / 4.0, 2.0 * half, f64::MAX / 2.0);
    dets.iter()
        .filter(|d| d.distance.is_some())
        .filter(|d| d.bbox.right() > corridor.x && d.bbox.x < corridor.right())
        .min_by(|a, b| {
            a.distance
                .unwrap()
                .total_cmp(&b.distance.unwrap())
                .then(a.order.cmp(&b.order))
        })
}
