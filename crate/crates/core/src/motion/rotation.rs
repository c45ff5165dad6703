//! Small rotation helpers shared by the synthetic generator and packing tests.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn rodrigues(axis: Vec3, angle: f64) -> Mat3 {
    let n = norm(axis);
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let k = 1.0 - c;
    [
        [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
        [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
        [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
    ]
}

pub fn apply(r: &Mat3, v: Vec3) -> Vec3 {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// First two columns of a rotation matrix, column-major.
pub fn to_6d(r: &Mat3) -> [f64; 6] {
    [r[0][0], r[1][0], r[2][0], r[0][1], r[1][1], r[2][1]]
}

/// Gram-Schmidt reconstruction of a rotation from its 6D form.
pub fn from_6d(v: &[f64; 6]) -> Mat3 {
    let a1 = [v[0], v[1], v[2]];
    let a2 = [v[3], v[4], v[5]];
    let n1 = norm(a1);
    let b1 = [a1[0] / n1, a1[1] / n1, a1[2] / n1];
    let d = b1[0] * a2[0] + b1[1] * a2[1] + b1[2] * a2[2];
    let u2 = [a2[0] - d * b1[0], a2[1] - d * b1[1], a2[2] - d * b1[2]];
    let n2 = norm(u2);
    let b2 = [u2[0] / n2, u2[1] / n2, u2[2] / n2];
    let b3 = [
        b1[1] * b2[2] - b1[2] * b2[1],
        b1[2] * b2[0] - b1[0] * b2[2],
        b1[0] * b2[1] - b1[1] * b2[0],
    ];
    [
        [b1[0], b2[0], b3[0]],
        [b1[1], b2[1], b3[1]],
        [b1[2], b2[2], b3[2]],
    ]
}

/// Unit quaternion `(w, x, y, z)` of a rotation matrix, with `w >= 0`.
pub fn mat_to_quat(r: &Mat3) -> [f64; 4] {
    let tr = r[0][0] + r[1][1] + r[2][2];
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s]
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
        [(r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s]
    } else if r[1][1] > r[2][2] {
        let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
        [(r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s]
    } else {
        let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
        [(r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s]
    };
    let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
    [sign * q[0] / n, sign * q[1] / n, sign * q[2] / n, sign * q[3] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rodrigues_preserves_length() {
        let r = rodrigues([0.3, -1.0, 0.2], 1.1);
        let v = [0.5, 0.1, -0.7];
        assert!((norm(apply(&r, v)) - norm(v)).abs() < 1e-14);
    }

    #[test]
    fn quaternion_of_axis_angle() {
        let q = mat_to_quat(&rodrigues([0.0, 0.0, 1.0], 1.0));
        assert!((q[0] - 0.5f64.cos()).abs() < 1e-12);
        assert!((q[3] - 0.5f64.sin()).abs() < 1e-12);
        assert!(q[1].abs() < 1e-12 && q[2].abs() < 1e-12);
    }

    #[test]
    fn six_d_round_trip() {
        let r = rodrigues([1.0, 2.0, -0.5], 0.8);
        let back = from_6d(&to_6d(&r));
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - back[i][j]).abs() < 1e-12);
            }
        }
    }
}
