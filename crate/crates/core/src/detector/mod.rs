//! Channel-feature vehicle detector driven by a window plan.

pub mod boost;
pub mod channels;
pub mod nms;
pub mod scan;

pub use boost::{train_features, BoostedClassifier, TrainConfig, TrainError, TrainOutcome, WindowModel};
pub use channels::{compute_channels, ChannelConfig, ChannelError, ChannelStack};
pub use nms::nms;
pub use scan::{scan, window_features, Detection, ScanError, ScanOptions};

use crate::image::RgbImage;
use crate::planner::WindowPlan;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error(transparent)]
    Channels(#[from] ChannelError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("training image is {got_w}x{got_h}, expected the {w}x{h} window")]
    WrongSampleSize { got_w: u32, got_h: u32, w: u32, h: u32 },
}

/// Trains on window-sized images: each sample is reduced to its channel
/// stack, which is exactly the model's feature grid.
pub fn train(
    positives: &[RgbImage],
    negatives: &[RgbImage],
    window: (u32, u32),
    channel_cfg: &ChannelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, DetectError> {
    let model = WindowModel {
        w: window.0,
        h: window.1,
        shrink: channel_cfg.shrink,
        n_channels: channel_cfg.n_channels(),
    };
    let extract = |imgs: &[RgbImage]| -> Result<Vec<Vec<f64>>, DetectError> {
        imgs.iter()
            .map(|img| {
                if (img.width(), img.height()) != window {
                    return Err(DetectError::WrongSampleSize {
                        got_w: img.width(),
                        got_h: img.height(),
                        w: window.0,
                        h: window.1,
                    });
                }
                Ok(compute_channels(img, channel_cfg)?.to_features())
            })
            .collect()
    };
    let pos = extract(positives)?;
    let neg = extract(negatives)?;
    Ok(train_features(&pos, &neg, model, cfg)?)
}

/// Full single-image pipeline: channels, plan scan, suppression.
#[derive(Debug, Clone)]
pub struct Detector {
    pub plan: WindowPlan,
    pub classifier: BoostedClassifier,
    pub channels: ChannelConfig,
    pub scan: ScanOptions,
    pub nms_iou: f64,
}

impl Detector {
    pub const DEFAULT_NMS_IOU: f64 = 0.5;

    pub fn new(plan: WindowPlan, classifier: BoostedClassifier) -> Self {
        Self {
            plan,
            classifier,
            channels: ChannelConfig::default(),
            scan: ScanOptions::default(),
            nms_iou: Self::DEFAULT_NMS_IOU,
        }
    }

    /// Raw (pre-suppression) detections.
    pub fn scan_image(&self, image: &RgbImage) -> Result<Vec<Detection>, DetectError> {
        let stack = compute_channels(image, &self.channels)?;
        Ok(scan(&stack, &self.plan, &self.classifier, &self.scan)?)
    }

    pub fn detect(&self, image: &RgbImage) -> Result<Vec<Detection>, DetectError> {
        Ok(nms(&self.scan_image(image)?, self.nms_iou))
    }
}
