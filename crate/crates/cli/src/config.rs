//! Optional TOML configuration. Command-line flags take precedence.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub calibration: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub fcw: FcwSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub d_min: Option<f64>,
    pub d_max: Option<f64>,
    pub bins_per_octave: Option<u32>,
    pub v_tol_frac: Option<f64>,
    pub stride_frac: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub rounds: Option<usize>,
    pub depth: Option<u8>,
    pub score_min: Option<f64>,
    pub cascade_margin: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcwSection {
    pub d_alert: Option<f64>,
    pub d_caution: Option<f64>,
    pub headway_alert: Option<f64>,
    pub smoothing: Option<f64>,
    pub coast_limit: Option<f64>,
    pub corridor_frac: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// First of flag, config value, default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// First of flag and config value, or an error naming the flag.
pub fn require<T>(flag: Option<T>, config: Option<T>, name: &str) -> anyhow::Result<T> {
    flag.or(config)
        .ok_or_else(|| anyhow::anyhow!("missing --{name} (not given on the command line or in the config)"))
}
