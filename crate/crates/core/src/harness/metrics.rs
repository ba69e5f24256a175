//! Detection and distance-error metrics.

use crate::bbox::BBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub image: usize,
    pub bbox: BBox,
    pub score: f64,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthBox {
    pub image: usize,
    pub bbox: BBox,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceError {
    pub d_true: f64,
    pub d_est: f64,
    /// `|d_true - d_est|`, meters.
    pub e_star: f64,
    /// `e_star / d_true`, a fraction.
    pub e_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub detection_rate: f64,
    pub fppi: f64,
    pub matched: usize,
    pub total_gt: usize,
    pub false_positives: usize,
    pub n_images: usize,
    /// Distance errors of matched pairs whose detection carries a distance.
    pub distance_errors: Vec<DistanceError>,
}

pub fn distance_error(d_true: f64, d_est: f64) -> DistanceError {
    let e_star = (d_true - d_est).abs();
    DistanceError {
        d_true,
        d_est,
        e_star,
        e_rel: e_star / d_true,
    }
}

pub fn distance_errors(pairs: &[(f64, f64)]) -> Vec<DistanceError> {
    pairs.iter().map(|&(t, e)| distance_error(t, e)).collect()
}

/// Greedy one-to-one matching per image: detections in descending score
/// (ties by input order) each take the unmatched ground truth of highest
/// IoU, if that IoU is at least `iou_min`.
pub fn evaluate(dets: &[ScoredBox], gts: &[TruthBox], iou_min: f64, n_images: usize) -> MetricsReport {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut matched = 0;
    let mut false_positives = 0;
    let mut distance_errors = Vec::new();
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] || g.image != d.image {
                continue;
            }
            let iou = d.bbox.iou(&g.bbox);
            // Ties go to the truth with the smaller box area, then the smaller
            // top-left corner, so the result does not depend on gts order.
            let better = match best {
                None => true,
                Some((k, b)) => {
                    iou > b
                        || (iou == b && truth_key(g) < truth_key(&gts[k]))
                }
            };
            if iou >= iou_min && better {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, _)) => {
                taken[j] = true;
                matched += 1;
                if let Some(est) = d.distance {
                    distance_errors.push(distance_error(gts[j].d, est));
                }
            }
            None => false_positives += 1,
        }
    }
    let total_gt = gts.len();
    MetricsReport {
        detection_rate: if total_gt == 0 { 0.0 } else { matched as f64 / total_gt as f64 },
        fppi: if n_images == 0 { 0.0 } else { false_positives as f64 / n_images as f64 },
        matched,
        total_gt,
        false_positives,
        n_images,
        distance_errors,
    }
}

fn truth_key(g: &TruthBox) -> (u64, u64, u64, u64) {
    (g.bbox.area().to_bits(), g.bbox.y.to_bits(), g.bbox.x.to_bits(), g.d.to_bits())
}
