//! Aggregated channel features.
//!
//! Ten channels per image: LUV color (3), gradient magnitude (1) and a
//! six-bin gradient orientation histogram (6), each sum-pooled over
//! `shrink x shrink` pixel cells and optionally smoothed with a `[1 2 1]/4`
//! kernel.

use std::f64::consts::PI;

use crate::image::RgbImage;

pub const N_COLOR: usize = 3;
pub const MAG_CHANNEL: usize = 3;
pub const FIRST_ORIENT_CHANNEL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("image {width}x{height} is smaller than one {shrink}x{shrink} cell")]
    ImageTooSmall { width: u32, height: u32, shrink: u32 },
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub shrink: u32,
    pub n_orients: usize,
    /// Apply one `[1 2 1]/4` pass per axis after pooling.
    pub smooth: bool,
    /// Box radius for gradient normalisation; 0 leaves magnitudes raw.
    pub norm_radius: u32,
    pub norm_const: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            shrink: 4,
            n_orients: 6,
            smooth: true,
            norm_radius: 0,
            norm_const: 0.005,
        }
    }
}

impl ChannelConfig {
    pub fn n_channels(&self) -> usize {
        N_COLOR + 1 + self.n_orients
    }

    fn validate(&self) -> Result<(), ChannelError> {
        if self.shrink == 0 {
            return Err(ChannelError::InvalidConfig("shrink must be >= 1"));
        }
        if self.n_orients == 0 {
            return Err(ChannelError::InvalidConfig("need at least one orientation bin"));
        }
        if !(self.norm_const > 0.0) {
            return Err(ChannelError::InvalidConfig("norm_const must be > 0"));
        }
        Ok(())
    }
}

/// Pooled channel planes, stored plane-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    pub width: usize,
    pub height: usize,
    pub n_channels: usize,
    pub shrink: u32,
    data: Vec<f64>,
}

impl ChannelStack {
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Flattened features in `(channel, row, column)` order.
    pub fn to_features(&self) -> Vec<f64> {
        self.data.clone()
    }
}

// sRGB primaries to XYZ, D65.
const MR: [f64; 3] = [0.430574, 0.222015, 0.020183];
const MG: [f64; 3] = [0.341550, 0.706655, 0.129553];
const MB: [f64; 3] = [0.178325, 0.071330, 0.939180];
const UN: f64 = 0.197833;
const VN: f64 = 0.468331;
const LUV_SCALE: f64 = 1.0 / 270.0;

/// CIE LUV of an 8-bit RGB triple, rescaled to roughly `[0, 1]`.
pub fn rgb_to_luv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let x = MR[0] * r + MG[0] * g + MB[0] * b;
    let y = MR[1] * r + MG[1] * g + MB[1] * b;
    let z = MR[2] * r + MG[2] * g + MB[2] * b;
    let l = if y > 0.008856 {
        116.0 * y.cbrt() - 16.0
    } else {
        903.3 * y
    };
    let denom = x + 15.0 * y + 3.0 * z + 1e-35;
    let u = 13.0 * l * (4.0 * x / denom - UN);
    let v = 13.0 * l * (9.0 * y / denom - VN);
    [l * LUV_SCALE, (u + 88.0) * LUV_SCALE, (v + 134.0) * LUV_SCALE]
}

/// Per-pixel gradient of a single plane: central differences inside, one-sided
/// differences on the border.
fn gradient(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            gx[y * w + x] = if w < 2 {
                0.0
            } else if x == 0 {
                row[1] - row[0]
            } else if x == w - 1 {
                row[w - 1] - row[w - 2]
            } else {
                0.5 * (row[x + 1] - row[x - 1])
            };
        }
    }
    for y in 0..h {
        for x in 0..w {
            gy[y * w + x] = if h < 2 {
                0.0
            } else if y == 0 {
                plane[w + x] - plane[x]
            } else if y == h - 1 {
                plane[y * w + x] - plane[(y - 1) * w + x]
            } else {
                0.5 * (plane[(y + 1) * w + x] - plane[(y - 1) * w + x])
            };
        }
    }
    (gx, gy)
}

/// Mean over a `(2r+1)^2` box, clamped at the borders.
fn box_mean(plane: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for k in -(r as isize)..=(r as isize) {
                    let (sx, sy) = if horizontal {
                        ((x as isize + k).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + k).clamp(0, h as isize - 1) as usize)
                    };
                    acc += src[sy * w + sx];
                }
                out[y * w + x] = acc / (2 * r + 1) as f64;
            }
        }
        out
    };
    let tmp = pass(plane, true);
    pass(&tmp, false)
}

/// `[1 2 1] / 4` in both directions with edge replication.
fn smooth_121(plane: &mut [f64], w: usize, h: usize) {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = plane[y * w + x.saturating_sub(1)];
            let r = plane[y * w + (x + 1).min(w - 1)];
            tmp[y * w + x] = 0.25 * l + 0.5 * plane[y * w + x] + 0.25 * r;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let u = tmp[y.saturating_sub(1) * w + x];
            let d = tmp[(y + 1).min(h - 1) * w + x];
            plane[y * w + x] = 0.25 * u + 0.5 * tmp[y * w + x] + 0.25 * d;
        }
    }
}

/// Computes the channel stack of `image`.
pub fn compute_channels(image: &RgbImage, cfg: &ChannelConfig) -> Result<ChannelStack, ChannelError> {
    cfg.validate()?;
    let (width, height) = (image.width(), image.height());
    if width < cfg.shrink || height < cfg.shrink {
        return Err(ChannelError::ImageTooSmall {
            width,
            height,
            shrink: cfg.shrink,
        });
    }
    let (w, h) = (width as usize, height as usize);
    let shrink = cfg.shrink as usize;
    let (cw, ch) = (w / shrink, h / shrink);
    let n_channels = cfg.n_channels();
    let cells = cw * ch;

    let mut luv = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for y in 0..h {
        for x in 0..w {
            let c = rgb_to_luv(image.get(x as u32, y as u32));
            for k in 0..N_COLOR {
                luv[k][y * w + x] = c[k];
            }
        }
    }

    let (gx, gy) = gradient(&luv[0], w, h);
    let mut mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    if cfg.norm_radius > 0 {
        let s = box_mean(&mag, w, h, cfg.norm_radius as usize);
        for (m, s) in mag.iter_mut().zip(s) {
            *m /= s + cfg.norm_const;
        }
    }

    let mut data = vec![0.0; n_channels * cells];
    let bin_width = PI / cfg.n_orients as f64;
    for y in 0..ch * shrink {
        let cy = y / shrink;
        for x in 0..cw * shrink {
            let cell = cy * cw + x / shrink;
            let i = y * w + x;
            for k in 0..N_COLOR {
                data[k * cells + cell] += luv[k][i];
            }
            let m = mag[i];
            data[MAG_CHANNEL * cells + cell] += m;
            if m > 0.0 {
                let mut o = gy[i].atan2(gx[i]);
                if o < 0.0 {
                    o += PI;
                }
                if o >= PI {
                    o -= PI;
                }
                let pos = o / bin_width;
                let lo = pos.floor();
                let frac = pos - lo;
                let b0 = (lo as usize) % cfg.n_orients;
                let b1 = (b0 + 1) % cfg.n_orients;
                data[(FIRST_ORIENT_CHANNEL + b0) * cells + cell] += (1.0 - frac) * m;
                data[(FIRST_ORIENT_CHANNEL + b1) * cells + cell] += frac * m;
            }
        }
    }

    if cfg.smooth {
        for c in 0..n_channels {
            smooth_121(&mut data[c * cells..(c + 1) * cells], cw, ch);
        }
    }

    Ok(ChannelStack {
        width: cw,
        height: ch,
        n_channels,
        shrink: cfg.shrink,
        data,
    })
}
