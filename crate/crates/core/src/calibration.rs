//! Three-point ground-plane calibration.
//!
//! Given the camera height and three ground points at known distances, the
//! pitch, vertical focal ratio and principal row follow in closed form. With
//! `t_i = h / d_i` and `a = tan(alpha)` every point satisfies
//! `v_i = v0 + f_y (t_i - a) / (1 + t_i a)`, and differences of two such rows
//! eliminate `v0`:
//!
//! ```text
//! v_i - v_j = f_y (t_i - t_j)(1 + a^2) / ((1 + t_i a)(1 + t_j a))
//! ```
//!
//! The ratio of two differences eliminates `f_y` too, leaving an equation
//! that is linear in `a`.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::format::{self, FormatError};
use crate::geometry::{row_from_distance, CameraParams, GeometryError};

/// Re-projection tolerance for a closed-form solution, pixels.
pub const EXACT_RESIDUAL_TOL: f64 = 1e-6;
const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("calibration points share a distance")]
    DegenerateDistances,
    #[error("calibration points share an image row")]
    DegenerateRows,
    #[error("closed-form system is singular")]
    SingularSystem,
    #[error("implausible calibration: {0}")]
    ImplausibleSolution(String),
    #[error("least squares did not converge within {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        best: Box<CalibrationReport>,
    },
    #[error("normal equations are singular")]
    SingularNormalEquations,
    #[error("at least {needed} points are required, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One measured ground point: its distance and the image row it appears on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub d: f64,
    pub v: f64,
}

impl CalibrationPoint {
    pub fn new(d: f64, v: f64) -> Self {
        Self { d, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMethod {
    ThreePointExact,
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub params: CameraParams,
    /// Per-point `v_i - row_from_distance(d_i)`, in input order.
    pub residuals: Vec<f64>,
    pub method: CalibrationMethod,
    /// Gauss-Newton updates applied; zero for the closed form.
    pub iterations: usize,
}

impl CalibrationReport {
    pub fn rms_residual(&self) -> f64 {
        if self.residuals.is_empty() {
            return 0.0;
        }
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }
}

fn residuals(params: &CameraParams, points: &[CalibrationPoint]) -> Result<Vec<f64>, GeometryError> {
    points
        .iter()
        .map(|p| Ok(p.v - row_from_distance(params, p.d)?))
        .collect()
}

fn check_points(h: f64, points: &[CalibrationPoint]) -> Result<(), CalibrationError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(CalibrationError::InvalidInput(format!("camera height must be > 0, got {h}")));
    }
    for p in points {
        if !(p.d.is_finite() && p.d > 0.0) {
            return Err(CalibrationError::InvalidInput(format!("distance must be > 0, got {}", p.d)));
        }
        if !p.v.is_finite() {
            return Err(CalibrationError::InvalidInput(format!("row must be finite, got {}", p.v)));
        }
    }
    Ok(())
}

/// Solves `(alpha, f_y, v0)` exactly from three ground points.
///
/// Points are put in ascending distance order first, so the result does not
/// depend on the order they are given in. `image_w`/`image_h` are carried
/// into the returned parameters.
pub fn solve_three_point(
    h: f64,
    points: [CalibrationPoint; 3],
    image_w: u32,
    image_h: u32,
) -> Result<CalibrationReport, CalibrationError> {
    check_points(h, &points)?;
    let mut sorted = points;
    sorted.sort_by(|a, b| a.d.total_cmp(&b.d).then(b.v.total_cmp(&a.v)));
    let [p1, p2, p3] = sorted;

    if p1.d == p2.d || p2.d == p3.d {
        return Err(CalibrationError::DegenerateDistances);
    }
    if p1.v == p2.v || p1.v == p3.v || p2.v == p3.v {
        return Err(CalibrationError::DegenerateRows);
    }
    if !(p1.v > p2.v && p2.v > p3.v) {
        return Err(CalibrationError::ImplausibleSolution(
            "farther points must appear higher in the image".into(),
        ));
    }

    let (t1, t2, t3) = (h / p1.d, h / p2.d, h / p3.d);
    let r = (p1.v - p2.v) / (p1.v - p3.v);
    let numer = r * (t1 - t3) - (t1 - t2);
    let denom = (t1 - t2) * t3 - r * (t1 - t3) * t2;
    if denom.abs() < SINGULAR_EPS {
        return Err(CalibrationError::SingularSystem);
    }
    let a = numer / denom;
    let f_y = (p1.v - p3.v) * (1.0 + t1 * a) * (1.0 + t3 * a) / ((t1 - t3) * (1.0 + a * a));
    if !(f_y.is_finite() && f_y > 0.0) {
        return Err(CalibrationError::ImplausibleSolution(format!("f_y = {f_y}")));
    }
    let v0 = p1.v - f_y * (t1 - a) / (1.0 + t1 * a);
    let params = CameraParams::new(h, a.atan(), f_y, v0, image_w, image_h)
        .map_err(|e| CalibrationError::ImplausibleSolution(e.to_string()))?;

    let residuals = residuals(&params, &points)?;
    if let Some(worst) = residuals.iter().map(|r| r.abs()).reduce(f64::max) {
        if !(worst < EXACT_RESIDUAL_TOL) {
            return Err(CalibrationError::ImplausibleSolution(format!(
                "solution reproduces inputs only to {worst:e} px"
            )));
        }
    }
    Ok(CalibrationReport {
        params,
        residuals,
        method: CalibrationMethod::ThreePointExact,
        iterations: 0,
    })
}

/// Gauss-Newton refinement of `(alpha, f_y, v0)` over `N >= 3` points,
/// minimising the squared row residuals `v_i - row_from_distance(d_i)`.
///
/// The convergence test is on the largest row change the step would cause,
/// `max_i |J_i . step|`, so `tol` is in pixels. A step that would raise the
/// cost is halved until it does not (at most 30 times). Hitting `max_iter`
/// yields `NonConvergence` carrying the best parameters found.
pub fn refine_least_squares(
    h: f64,
    points: &[CalibrationPoint],
    init: &CameraParams,
    max_iter: usize,
    tol: f64,
) -> Result<CalibrationReport, CalibrationError> {
    if points.len() < 3 {
        return Err(CalibrationError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    check_points(h, points)?;
    init.validate()?;

    let mut params = CameraParams { h, ..*init };
    let mut res = residuals(&params, points)?;
    let mut cost = sum_sq(&res);

    for iter in 0..max_iter {
        let a = params.alpha.tan();
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        let mut rows = Vec::with_capacity(points.len());
        for (p, r) in points.iter().zip(&res) {
            let t = h / p.d;
            let u = (t - a) / (1.0 + t * a);
            // d v / d(alpha, f_y, v0)
            let j = Vector3::new(-params.f_y * (1.0 + u * u), u, 1.0);
            jtj += j * j.transpose();
            jtr += j * *r;
            rows.push(j);
        }
        let step = jtj
            .cholesky()
            .map(|c| c.solve(&jtr))
            .ok_or(CalibrationError::SingularNormalEquations)?;
        if !step.iter().all(|s| s.is_finite()) {
            return Err(CalibrationError::SingularNormalEquations);
        }
        let step_px = rows.iter().map(|j| j.dot(&step).abs()).fold(0.0, f64::max);
        let converged = step_px < tol;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let candidate = CameraParams {
                alpha: params.alpha + scale * step[0],
                f_y: params.f_y + scale * step[1],
                v0: params.v0 + scale * step[2],
                ..params
            };
            if candidate.validate().is_ok() {
                if let Ok(cand_res) = residuals(&candidate, points) {
                    let cand_cost = sum_sq(&cand_res);
                    if cand_cost <= cost {
                        accepted = Some((candidate, cand_res, cand_cost));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        let stalled = accepted.is_none();
        if let Some((p, r, c)) = accepted {
            params = p;
            res = r;
            cost = c;
        }
        if converged || stalled {
            return Ok(CalibrationReport {
                params,
                residuals: res,
                method: CalibrationMethod::LeastSquares,
                iterations: iter,
            });
        }
    }
    Err(CalibrationError::NonConvergence {
        iterations: max_iter,
        best: Box::new(CalibrationReport {
            params,
            residuals: res,
            method: CalibrationMethod::LeastSquares,
            iterations: max_iter,
        }),
    })
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Parses a points file: one `d_m v_px` pair per line, `#` comments allowed.
pub fn parse_points(text: &str) -> Result<Vec<CalibrationPoint>, FormatError> {
    format::content_lines(text)
        .map(|(line, content)| {
            let [d, v] = format::fields::<2>(content, line)?;
            let d = format::parse_finite(d, line, "distance")?;
            let v = format::parse_finite(v, line, "row")?;
            if d <= 0.0 {
                return Err(FormatError::new(line, "distance must be > 0"));
            }
            Ok(CalibrationPoint { d, v })
        })
        .collect()
}

pub fn write_points(points: &[CalibrationPoint]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{} {}", format::real(p.d), format::real(p.v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth() -> CameraParams {
        CameraParams::new(1.2, 0.12, 1000.0, 360.0, 1280, 720).unwrap()
    }

    fn project(p: &CameraParams, ds: &[f64]) -> Vec<CalibrationPoint> {
        ds.iter()
            .map(|&d| CalibrationPoint::new(d, row_from_distance(p, d).unwrap()))
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn recovers_fixture_truth() {
        let t = truth();
        let pts = project(&t, &[4.0, 5.0, 7.0]);
        let rep = solve_three_point(t.h, [pts[0], pts[1], pts[2]], 1280, 720).unwrap();
        assert_eq!(rep.method, CalibrationMethod::ThreePointExact);
        assert!(rel(rep.params.alpha, t.alpha) < 1e-9);
        assert!(rel(rep.params.f_y, t.f_y) < 1e-9);
        assert!(rel(rep.params.v0, t.v0) < 1e-9);
        assert!(rep.residuals.iter().all(|r| r.abs() < 1e-6));
    }

    #[test]
    fn zero_pitch_recovered() {
        let t = CameraParams { alpha: 0.0, ..truth() };
        let pts = project(&t, &[4.0, 5.0, 7.0]);
        let rep = solve_three_point(t.h, [pts[0], pts[1], pts[2]], 1280, 720).unwrap();
        assert!(rep.params.alpha.tan().abs() < 1e-12, "{}", rep.params.alpha);
    }

    #[test]
    fn degenerate_inputs() {
        let p = |d, v| CalibrationPoint::new(d, v);
        assert_eq!(
            solve_three_point(1.2, [p(5.0, 430.0), p(5.0, 420.0), p(7.0, 400.0)], 1, 1),
            Err(CalibrationError::DegenerateDistances)
        );
        assert_eq!(
            solve_three_point(1.2, [p(4.0, 430.0), p(5.0, 430.0), p(7.0, 400.0)], 1, 1),
            Err(CalibrationError::DegenerateRows)
        );
        assert!(matches!(
            solve_three_point(1.2, [p(4.0, 400.0), p(5.0, 430.0), p(7.0, 460.0)], 1, 1),
            Err(CalibrationError::ImplausibleSolution(_))
        ));
        assert!(matches!(
            solve_three_point(0.0, [p(4.0, 460.0), p(5.0, 430.0), p(7.0, 400.0)], 1, 1),
            Err(CalibrationError::InvalidInput(_))
        ));
    }

    #[test]
    fn reported_field_measurements_still_solve() {
        // The published points do not reproduce the published parameters, but
        // they are geometrically consistent, so the solver must accept them.
        let p = |d, v| CalibrationPoint::new(d, v);
        let rep = solve_three_point(1.225, [p(4.0, 461.0), p(5.0, 428.0), p(7.0, 383.0)], 1280, 720)
            .unwrap();
        assert!(rep.params.f_y > 0.0);
        assert!((rep.params.alpha - 0.1194).abs() > 1e-3);
    }

    #[test]
    fn permutation_invariance() {
        let t = truth();
        let pts = project(&t, &[4.0, 5.0, 7.0]);
        let base = solve_three_point(t.h, [pts[0], pts[1], pts[2]], 1280, 720).unwrap();
        for perm in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let rep = solve_three_point(t.h, perm.map(|i| pts[i]), 1280, 720).unwrap();
            assert!((rep.params.alpha - base.params.alpha).abs() <= 1e-12);
            assert!(rel(rep.params.f_y, base.params.f_y) <= 1e-12);
            assert!(rel(rep.params.v0, base.params.v0) <= 1e-12);
        }
    }

    #[test]
    fn scale_consistency() {
        let t = truth();
        let pts = project(&t, &[4.0, 5.0, 7.0]);
        let base = solve_three_point(t.h, [pts[0], pts[1], pts[2]], 1280, 720).unwrap();
        for k in [0.5, 2.0, 3.7] {
            let scaled = [pts[0], pts[1], pts[2]].map(|p| CalibrationPoint::new(p.d * k, p.v));
            let rep = solve_three_point(t.h * k, scaled, 1280, 720).unwrap();
            assert!(rel(rep.params.alpha, base.params.alpha) < 1e-12);
            assert!(rel(rep.params.f_y, base.params.f_y) < 1e-12);
            assert!(rel(rep.params.v0, base.params.v0) < 1e-12);
        }
    }

    #[test]
    fn refine_from_truth_takes_no_steps() {
        let t = truth();
        let pts = project(&t, &[4.0, 5.0, 7.0, 9.0, 12.0]);
        let rep = refine_least_squares(t.h, &pts, &t, 20, 1e-9).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn refine_recovers_truth_from_perturbed_start() {
        let t = truth();
        let pts = project(&t, &[4.0, 5.0, 7.0, 10.0, 15.0]);
        for (sa, sf, sv) in [(1.05, 0.95, 1.05), (0.95, 1.05, 0.95), (1.05, 1.05, 0.95)] {
            let init = CameraParams {
                alpha: t.alpha * sa,
                f_y: t.f_y * sf,
                v0: t.v0 * sv,
                ..t
            };
            let rep = refine_least_squares(t.h, &pts, &init, 50, 1e-10).unwrap();
            assert!(rel(rep.params.alpha, t.alpha) < 1e-8, "{:?}", rep.params);
            assert!(rel(rep.params.f_y, t.f_y) < 1e-8);
            assert!(rel(rep.params.v0, t.v0) < 1e-8);
            assert!(rep.iterations > 0);
        }
    }

    #[test]
    fn refine_with_row_noise() {
        let t = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ds: Vec<f64> = (0..10).map(|i| 4.0 + 1.5 * i as f64).collect();
        let pts: Vec<_> = project(&t, &ds)
            .into_iter()
            .map(|p| CalibrationPoint::new(p.d, p.v + rng.gen_range(-0.5..0.5)))
            .collect();
        let init = CameraParams { alpha: 0.1, f_y: 950.0, v0: 370.0, ..t };
        let initial_cost = sum_sq(&residuals(&init, &pts).unwrap());
        let rep = refine_least_squares(t.h, &pts, &init, 50, 1e-9).unwrap();
        assert!(rep.rms_residual() <= 0.5, "rms {}", rep.rms_residual());
        assert!(sum_sq(&rep.residuals) <= initial_cost);
    }

    #[test]
    fn refine_reports_non_convergence() {
        let t = truth();
        let pts = project(&t, &[4.0, 5.0, 7.0, 10.0]);
        let init = CameraParams { alpha: 0.05, f_y: 800.0, v0: 340.0, ..t };
        match refine_least_squares(t.h, &pts, &init, 1, 1e-12) {
            Err(CalibrationError::NonConvergence { best, .. }) => {
                let initial = sum_sq(&residuals(&init, &pts).unwrap());
                assert!(sum_sq(&best.residuals) <= initial);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
        assert!(matches!(
            refine_least_squares(t.h, &pts[..2], &t, 10, 1e-9),
            Err(CalibrationError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn points_file() {
        let text = "# d v\n4 461\n5 428.5  # mid\n\n7 383\n";
        let pts = parse_points(text).unwrap();
        assert_eq!(pts, vec![
            CalibrationPoint::new(4.0, 461.0),
            CalibrationPoint::new(5.0, 428.5),
            CalibrationPoint::new(7.0, 383.0),
        ]);
        assert_eq!(parse_points(&write_points(&pts)).unwrap(), pts);
        assert_eq!(parse_points("4 461\n5\n").unwrap_err().line, 2);
        assert_eq!(parse_points("-4 461\n").unwrap_err().line, 1);
    }

    #[test]
    fn random_truths_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let t = CameraParams::new(
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.01..0.3),
                rng.gen_range(500.0..3000.0),
                rng.gen_range(200.0..600.0),
                1280,
                720,
            )
            .unwrap();
            let d1 = rng.gen_range(3.0..20.0);
            let d2 = d1 + rng.gen_range(1.0..10.0);
            let d3 = d2 + rng.gen_range(1.0..10.0);
            let pts = project(&t, &[d1, d2, d3]);
            let rep = solve_three_point(t.h, [pts[0], pts[1], pts[2]], 1280, 720).unwrap();
            assert!(rel(rep.params.alpha, t.alpha) < 1e-9, "{t:?} {:?}", rep.params);
            assert!(rel(rep.params.f_y, t.f_y) < 1e-9);
            assert!(rel(rep.params.v0, t.v0) < 1e-9);
        }
    }
}
