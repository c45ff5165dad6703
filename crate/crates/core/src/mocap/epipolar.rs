use nalgebra::{Matrix3, Vector3};

use super::camera::Camera;
use super::detect::DetectionSet;
use super::{MocapError, Point2, Result};

/// `F` with `x_b^T F x_a = 0` for corresponding points: `F = [e_b]_x P_b P_a^+`.
pub fn fundamental(a: &Camera, b: &Camera) -> Result<Matrix3<f64>> {
    let ca = a.center();
    if (ca - b.center()).norm() < 1e-9 {
        return Err(MocapError::DegenerateGeometry);
    }
    let e = b.p * ca.push(1.0);
    let ex = Matrix3::new(0.0, -e[2], e[1], e[2], 0.0, -e[0], -e[1], e[0], 0.0);
    let pinv = a
        .p
        .pseudo_inverse(1e-15)
        .map_err(|_| MocapError::DegenerateGeometry)?;
    Ok(ex * b.p * pinv)
}

/// Distance from `x` to the line `l0 u + l1 v + l2 = 0`.
pub fn point_line_distance(x: Point2, l: &Vector3<f64>) -> f64 {
    (l[0] * x[0] + l[1] * x[1] + l[2]).abs() / l[0].hypot(l[1])
}

/// Mean of the two point-to-epipolar-line distances, in pixels.
pub fn epipolar_cost(xa: Point2, xb: Point2, f: &Matrix3<f64>) -> f64 {
    let ha = Vector3::new(xa[0], xa[1], 1.0);
    let hb = Vector3::new(xb[0], xb[1], 1.0);
    let lb = f * ha;
    let la = f.transpose() * hb;
    0.5 * (point_line_distance(xb, &lb) + point_line_distance(xa, &la))
}

/// Epipolar cost between the mid-hip (joint `hip`) of detection slot `na` in
/// view `va` and slot `nb` in view `vb`; infinite when either is invisible.
#[allow(clippy::too_many_arguments)]
pub fn epipolar_midhip_cost(
    det: &DetectionSet,
    va: usize,
    na: usize,
    vb: usize,
    nb: usize,
    t: usize,
    f: &Matrix3<f64>,
    hip: usize,
) -> f64 {
    if !det.visible(na, va, t, hip) || !det.visible(nb, vb, t, hip) {
        return f64::INFINITY;
    }
    epipolar_cost(det.point(na, va, t, hip), det.point(nb, vb, t, hip), f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::default_rig;
    use nalgebra::Matrix3x4;

    #[test]
    fn projected_point_has_zero_cost() {
        let rig = default_rig();
        let f = fundamental(&rig[0], &rig[1]).unwrap();
        let x = [0.2, 1.1, -0.3];
        let c = epipolar_cost(rig[0].project(x).unwrap(), rig[1].project(x).unwrap(), &f);
        assert!(c < 1e-9, "{c}");
    }

    #[test]
    fn symmetric() {
        let rig = default_rig();
        let fab = fundamental(&rig[0], &rig[2]).unwrap();
        let fba = fundamental(&rig[2], &rig[0]).unwrap();
        let (a, b) = ([600.0, 500.0], [700.0, 430.0]);
        assert!((epipolar_cost(a, b, &fab) - epipolar_cost(b, a, &fba)).abs() < 1e-12);
    }

    #[test]
    fn rectified_pair_offset() {
        let k = 800.0;
        let mk = |tx: f64| {
            Camera::new(
                Matrix3x4::new(k, 0.0, 640.0, k * tx, 0.0, k, 512.0, 0.0, 0.0, 0.0, 1.0, 0.0),
                1280.0,
                1024.0,
            )
            .unwrap()
        };
        let (a, b) = (mk(0.0), mk(-0.5));
        let f = fundamental(&a, &b).unwrap();
        let c = epipolar_cost([600.0, 400.0], [550.0, 405.0], &f);
        assert!((c - 5.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn coincident_centres() {
        let rig = default_rig();
        assert_eq!(fundamental(&rig[0], &rig[0]), Err(MocapError::DegenerateGeometry));
    }
}
