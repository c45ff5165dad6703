use nalgebra::{DMatrix, Matrix3, Vector3};

use super::camera::Camera;
use super::{MocapError, Point2, Point3, Result};

/// Reprojection RMS (pixels) that maps to `sigma = 1`.
pub const SIGMA_MAX_PX: f64 = 20.0;

pub fn normalize_sigma(raw: f64, sigma_max: f64) -> f64 {
    (raw / sigma_max).clamp(0.0, 1.0)
}

/// Linear (DLT) estimate refined by Gauss-Newton on the reprojection error.
/// Returns the point and the RMS reprojection error over visible views.
pub fn triangulate(points: &[Option<Point2>], cams: &[Camera]) -> Result<(Point3, f64)> {
    if points.len() != cams.len() {
        return Err(MocapError::Shape(format!(
            "{} observations for {} cameras",
            points.len(),
            cams.len()
        )));
    }
    let obs: Vec<(Point2, &Camera)> = points
        .iter()
        .zip(cams)
        .filter_map(|(p, c)| p.map(|p| (p, c)))
        .collect();
    if obs.len() < 2 {
        return Err(MocapError::InsufficientViews(obs.len()));
    }
    let mut x = dlt(&obs)?;
    for _ in 0..20 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (p, c) in &obs {
            let (r, j) = residual_jacobian(c, &x, *p);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let Some(inv) = jtj.try_inverse() else { break };
        let step = inv * jtr;
        x -= step;
        if step.norm() < 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    let sq: f64 = obs
        .iter()
        .map(|(p, c)| residual_jacobian(c, &x, *p).0.norm_squared())
        .sum();
    Ok(([x[0], x[1], x[2]], (sq / obs.len() as f64).sqrt()))
}

fn dlt(obs: &[(Point2, &Camera)]) -> Result<Vector3<f64>> {
    let mut a = DMatrix::zeros(2 * obs.len(), 4);
    for (i, (p, c)) in obs.iter().enumerate() {
        for k in 0..4 {
            a[(2 * i, k)] = p[0] * c.p[(2, k)] - c.p[(0, k)];
            a[(2 * i + 1, k)] = p[1] * c.p[(2, k)] - c.p[(1, k)];
        }
    }
    for mut row in a.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(MocapError::DegenerateGeometry)?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    let h = vt.row(idx);
    if h[3].abs() < 1e-300 {
        return Err(MocapError::DegenerateGeometry);
    }
    Ok(Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

fn residual_jacobian(c: &Camera, x: &Vector3<f64>, obs: Point2) -> (nalgebra::Vector2<f64>, nalgebra::Matrix2x3<f64>) {
    let row = |r: usize| Vector3::new(c.p[(r, 0)], c.p[(r, 1)], c.p[(r, 2)]);
    let (p1, p2, p3) = (row(0), row(1), row(2));
    let a = p1.dot(x) + c.p[(0, 3)];
    let b = p2.dot(x) + c.p[(1, 3)];
    let w = p3.dot(x) + c.p[(2, 3)];
    let (u, v) = (a / w, b / w);
    let ju = (p1 - p3 * u) / w;
    let jv = (p2 - p3 * v) / w;
    (
        nalgebra::Vector2::new(u - obs[0], v - obs[1]),
        nalgebra::Matrix2x3::from_rows(&[ju.transpose(), jv.transpose()]),
    )
}
