//! Monte Carlo study of distance error caused by row measurement error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{distance_from_row, row_from_distance, CameraParams, GeometryError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub trials: usize,
    /// Half-width of the uniform row perturbation, pixels.
    pub row_noise: f64,
    /// Round the perturbed row to an integer pixel.
    pub round: bool,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            row_noise: 2.0,
            round: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub d: f64,
    /// Mean measured distance over the valid trials.
    pub mean_d_est: f64,
    pub mean_e_star: f64,
    pub mean_e_rel: f64,
    pub valid: usize,
    /// Trials whose measured row fell at or above the horizon.
    pub horizon_failures: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StudyError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("row_noise must be finite and >= 0")]
    InvalidNoise,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per distance, perturbs the true row by `U(-row_noise, row_noise)`,
/// optionally rounds it, and measures the distance back. Distance `i` draws
/// from ChaCha stream `i` of `seed`, so rows do not depend on each other.
pub fn quantization_study(params: &CameraParams, distances: &[f64], cfg: &StudyConfig) -> Result<Vec<StudyRow>, StudyError> {
    if cfg.trials == 0 {
        return Err(StudyError::NoTrials);
    }
    if !(cfg.row_noise >= 0.0 && cfg.row_noise.is_finite()) {
        return Err(StudyError::InvalidNoise);
    }
    let mut out = Vec::with_capacity(distances.len());
    for (i, &d) in distances.iter().enumerate() {
        let v_true = row_from_distance(params, d)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let (mut sum_d, mut sum_e, mut sum_r) = (0.0, 0.0, 0.0);
        let mut valid = 0;
        let mut horizon_failures = 0;
        for _ in 0..cfg.trials {
            let mut v = v_true;
            if cfg.row_noise > 0.0 {
                v += rng.gen_range(-cfg.row_noise..=cfg.row_noise);
            }
            if cfg.round {
                v = v.round();
            }
            match distance_from_row(params, v) {
                Ok(est) => {
                    let e = (d - est).abs();
                    sum_d += est;
                    sum_e += e;
                    sum_r += e / d;
                    valid += 1;
                }
                Err(GeometryError::AtOrAboveHorizon { .. }) => horizon_failures += 1,
                Err(e) => return Err(e.into()),
            }
        }
        let n = valid.max(1) as f64;
        out.push(StudyRow {
            d,
            mean_d_est: if valid > 0 { sum_d / n } else { f64::NAN },
            mean_e_star: if valid > 0 { sum_e / n } else { f64::NAN },
            mean_e_rel: if valid > 0 { sum_r / n } else { f64::NAN },
            valid,
            horizon_failures,
        });
    }
    Ok(out)
}

/// Aligned table with columns d, d', e*, e_r (percent).
pub fn study_table(rows: &[StudyRow]) -> String {
    let mut s = format!("{:>8} {:>8} {:>8} {:>8} {:>8}\n", "d", "d'", "e*", "e_r(%)", "horizon");
    for r in rows {
        s.push_str(&format!(
            "{:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8}\n",
            r.d,
            r.mean_d_est,
            r.mean_e_star,
            100.0 * r.mean_e_rel,
            r.horizon_failures
        ));
    }
    s
}
