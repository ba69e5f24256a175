//! Synthetic pinhole road scenes with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::BBox;
use crate::geometry::{row_from_distance, CameraParams, GeometryError};
use crate::image::RgbImage;

/// Amplitude of the uniform per-pixel texture noise.
pub const TEXTURE_NOISE: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSpec {
    /// Longitudinal distance of the rear face, meters.
    pub d: f64,
    /// Lateral offset of the vehicle center, meters (positive = right).
    pub lateral: f64,
    pub real_w: f64,
    pub real_h: f64,
    pub shade: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub params: CameraParams,
    pub vehicles: Vec<VehicleSpec>,
    pub background: u8,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub d: f64,
}

/// Unclipped image box of a vehicle (square pixels, `f_x = f_y`).
pub fn vehicle_box(params: &CameraParams, v: &VehicleSpec) -> Result<BBox, GeometryError> {
    let bottom = row_from_distance(params, v.d)?;
    let w = params.f_y * v.real_w / v.d;
    let h = params.f_y * v.real_h / v.d;
    let cx = params.image_w as f64 / 2.0 + params.f_y * v.lateral / v.d;
    Ok(BBox::new(cx - w / 2.0, bottom - h, w, h))
}

/// Color of the vehicle's rear face at box-relative position `(fx, fy)`.
fn rear_face(fx: f64, fy: f64, shade: u8) -> [u8; 3] {
    if fy > 0.86 {
        [22, 22, 24]
    } else if (0.14..0.44).contains(&fy) && (0.1..0.9).contains(&fx) {
        [38, 48, 60]
    } else if (0.52..0.64).contains(&fy) && !(0.2..0.8).contains(&fx) {
        [205, 32, 28]
    } else {
        [shade, shade, shade]
    }
}

fn add_noise(c: u8, n: i32) -> u8 {
    (c as i32 + n).clamp(0, 255) as u8
}

/// Draws the scene. Vehicles are painted far to near so nearer ones occlude;
/// a pixel belongs to a vehicle when its center lies inside the vehicle box.
/// Ground truth lists each vehicle's box clipped to the frame, in spec
/// order; vehicles entirely outside the frame are omitted.
pub fn render_scene(spec: &SceneSpec) -> Result<(RgbImage, Vec<GroundTruth>), GeometryError> {
    let p = &spec.params;
    let (w, h) = (p.image_w, p.image_h);
    let mut img = RgbImage::filled(w, h, [spec.background; 3]);

    let boxes: Vec<BBox> = spec
        .vehicles
        .iter()
        .map(|v| vehicle_box(p, v))
        .collect::<Result<_, _>>()?;
    let mut draw_order: Vec<usize> = (0..boxes.len()).collect();
    draw_order.sort_by(|&a, &b| spec.vehicles[b].d.total_cmp(&spec.vehicles[a].d).then(a.cmp(&b)));

    for &i in &draw_order {
        let b = boxes[i];
        let Some(c) = b.clip(w as f64, h as f64) else { continue };
        // Pixel centers (x + 0.5) inside [b.x, b.right()).
        let x0 = (c.x - 0.5).ceil().max(0.0) as u32;
        let x1 = ((c.right() - 0.5).ceil().max(0.0) as u32).min(w);
        let y0 = (c.y - 0.5).ceil().max(0.0) as u32;
        let y1 = ((c.bottom() - 0.5).ceil().max(0.0) as u32).min(h);
        for y in y0..y1 {
            let fy = (y as f64 + 0.5 - b.y) / b.h;
            for x in x0..x1 {
                let fx = (x as f64 + 0.5 - b.x) / b.w;
                img.put(x, y, rear_face(fx, fy, spec.vehicles[i].shade));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for y in 0..h {
        for x in 0..w {
            let px = img.get(x, y);
            let n = rng.gen_range(-TEXTURE_NOISE..=TEXTURE_NOISE);
            img.put(x, y, px.map(|c| add_noise(c, n)));
        }
    }

    let truth = boxes
        .iter()
        .zip(&spec.vehicles)
        .filter_map(|(b, v)| b.clip(w as f64, h as f64).map(|bbox| GroundTruth { bbox, d: v.d }))
        .collect();
    Ok((img, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::distance_from_row;

    fn params() -> CameraParams {
        CameraParams::new(1.2, 0.12, 1000.0, 360.0, 1280, 720).unwrap()
    }

    fn car(d: f64, lateral: f64) -> VehicleSpec {
        VehicleSpec {
            d,
            lateral,
            real_w: 1.8,
            real_h: 1.5,
            shade: 200,
        }
    }

    #[test]
    fn empty_scene() {
        let spec = SceneSpec { params: params(), vehicles: vec![], background: 90, seed: 1 };
        let (img, gt) = render_scene(&spec).unwrap();
        assert!(gt.is_empty());
        assert_eq!((img.width(), img.height()), (1280, 720));
        for y in (0..720).step_by(37) {
            for x in (0..1280).step_by(41) {
                let [r, g, b] = img.get(x, y);
                assert_eq!(r, g);
                assert_eq!(g, b);
                assert!((r as i32 - 90).abs() <= TEXTURE_NOISE);
            }
        }
    }

    #[test]
    fn pinhole_box_at_ten_meters() {
        let p = params();
        let spec = SceneSpec { params: p, vehicles: vec![car(10.0, 0.0)], background: 90, seed: 1 };
        let (_, gt) = render_scene(&spec).unwrap();
        assert_eq!(gt.len(), 1);
        let b = gt[0].bbox;
        assert!((b.w - 180.0).abs() < 1e-9 && (b.h - 150.0).abs() < 1e-9);
        assert!((b.x + b.w / 2.0 - 640.0).abs() < 1e-9);
        assert!((b.bottom() - row_from_distance(&p, 10.0).unwrap()).abs() < 1e-9);
        assert!((distance_from_row(&p, b.bottom()).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn nearer_vehicle_is_larger_and_lower() {
        let p = params();
        let spec = SceneSpec {
            params: p,
            vehicles: vec![car(5.0, -1.5), car(20.0, 2.0)],
            background: 90,
            seed: 3,
        };
        let (_, gt) = render_scene(&spec).unwrap();
        assert!((gt[0].bbox.w / gt[1].bbox.w - 4.0).abs() < 1e-9);
        assert!(gt[0].bbox.bottom() > gt[1].bbox.bottom());
    }

    #[test]
    fn drawn_pixels_match_box() {
        let p = params();
        let spec = SceneSpec { params: p, vehicles: vec![car(12.0, 0.7)], background: 90, seed: 5 };
        let (img, gt) = render_scene(&spec).unwrap();
        let b = gt[0].bbox;
        // Bumper rows are near-black, background is ~90.
        let inside_bottom = (b.bottom() - 1.0).floor() as u32;
        let cx = (b.x + b.w / 2.0) as u32;
        assert!(img.get(cx, inside_bottom)[0] < 40);
        let below = (b.bottom() + 0.5).ceil() as u32;
        assert!((img.get(cx, below)[0] as i32 - 90).abs() <= TEXTURE_NOISE);
    }

    #[test]
    fn clipped_and_hidden_vehicles() {
        let p = params();
        let spec = SceneSpec {
            params: p,
            vehicles: vec![car(10.0, 4.0), car(10.0, 400.0)],
            background: 90,
            seed: 5,
        };
        let (_, gt) = render_scene(&spec).unwrap();
        assert_eq!(gt.len(), 1);
        assert!(gt[0].bbox.right() <= 1280.0);
    }

    #[test]
    fn rendering_is_seeded() {
        let spec = SceneSpec { params: params(), vehicles: vec![car(8.0, 0.0)], background: 90, seed: 11 };
        let a = render_scene(&spec).unwrap().0;
        let b = render_scene(&spec).unwrap().0;
        assert_eq!(a, b);
        let c = render_scene(&SceneSpec { seed: 12, ..spec }).unwrap().0;
        assert_ne!(a, c);
    }
}
