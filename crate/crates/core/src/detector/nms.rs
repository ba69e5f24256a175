//! Greedy non-maximum suppression.

use super::scan::Detection;

/// Keeps detections in descending score order (ties by window order),
/// dropping any whose IoU with an already kept box exceeds `iou_max`.
pub fn nms(dets: &[Detection], iou_max: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) <= iou_max) {
            kept.push(*d);
        }
    }
    kept
}
