use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};

use super::{MocapError, Point2, Point3, Result};

/// Values with `w` at or below this are treated as behind the camera.
const MIN_DEPTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub p: Matrix3x4<f64>,
    pub width: f64,
    pub height: f64,
}

pub type Rig = Vec<Camera>;

impl Camera {
    pub fn new(p: Matrix3x4<f64>, width: f64, height: f64) -> Result<Self> {
        let m: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into_owned();
        if m.determinant().abs() < 1e-12 {
            return Err(MocapError::SingularCamera);
        }
        Ok(Self { p, width, height })
    }

    /// `P = [I | 0]`, principal point at the origin.
    pub fn canonical() -> Self {
        Self {
            p: Matrix3x4::identity(),
            width: 2.0,
            height: 2.0,
        }
    }

    /// Pinhole camera at `eye` looking at `target`, world y up, focal length
    /// in pixels and the principal point at the image centre.
    pub fn look_at(eye: Point3, target: Point3, focal: f64, width: f64, height: f64) -> Result<Self> {
        let e = Vector3::from(eye);
        let f = (Vector3::from(target) - e).normalize();
        let r = f.cross(&Vector3::y()).normalize();
        let d = f.cross(&r);
        let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
        let t = -rot * e;
        let k = Matrix3::new(focal, 0.0, width / 2.0, 0.0, focal, height / 2.0, 0.0, 0.0, 1.0);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        rt.set_column(3, &t);
        Self::new(k * rt, width, height)
    }

    pub fn project(&self, x: Point3) -> Result<Point2> {
        let h = self.p * Vector4::new(x[0], x[1], x[2], 1.0);
        if h[2] <= MIN_DEPTH {
            return Err(MocapError::BehindCamera(h[2]));
        }
        Ok([h[0] / h[2], h[1] / h[2]])
    }

    pub fn in_image(&self, p: Point2) -> bool {
        (0.0..=self.width).contains(&p[0]) && (0.0..=self.height).contains(&p[1])
    }

    /// Camera centre: the null vector of `P`.
    pub fn center(&self) -> Vector3<f64> {
        let m: Matrix3<f64> = self.p.fixed_view::<3, 3>(0, 0).into_owned();
        let p4: Vector3<f64> = self.p.column(3).into_owned();
        -(m.try_inverse().expect("validated at construction") * p4)
    }
}

/// Four cameras on a 5 m circle, 1.6 m high, looking at the origin.
pub fn default_rig() -> Rig {
    (0..4)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 + std::f64::consts::FRAC_PI_4;
            Camera::look_at([5.0 * a.cos(), 1.6, 5.0 * a.sin()], [0.0, 0.9, 0.0], 1000.0, 1280.0, 1024.0)
                .expect("default rig is well formed")
        })
        .collect()
}

pub fn write_rig(rig: &[Camera]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mmdm-rig v1 {}", rig.len());
    for (i, c) in rig.iter().enumerate() {
        let _ = writeln!(s, "camera {i}");
        for r in 0..3 {
            let row: Vec<String> = (0..4).map(|k| format!("{:.16e}", c.p[(r, k)])).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "size {:.16e} {:.16e}", c.width, c.height);
    }
    s
}

fn err(line: usize, reason: impl Into<String>) -> MocapError {
    MocapError::Format {
        line,
        reason: reason.into(),
    }
}

fn numbers(line: &str, n: usize, no: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| err(no, format!("invalid number `{t}`"))))
        .collect::<Result<_>>()?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(err(no, format!("expected {n} finite values")));
    }
    Ok(v)
}

pub fn parse_rig(text: &str) -> Result<Rig> {
    let lines: Vec<&str> = text.lines().collect();
    let get = |i: usize| lines.get(i).copied().ok_or_else(|| err(i + 1, "unexpected end of file"));
    let header: Vec<&str> = get(0)?.split_whitespace().collect();
    if header.len() != 3 || header[0] != "mmdm-rig" || header[1] != "v1" {
        return Err(err(1, "expected `mmdm-rig v1 <views>`"));
    }
    let views: usize = header[2].parse().map_err(|_| err(1, "invalid view count"))?;
    let mut rig = Vec::with_capacity(views);
    for v in 0..views {
        let base = 1 + v * 5;
        if get(base)?.trim() != format!("camera {v}") {
            return Err(err(base + 1, format!("expected `camera {v}`")));
        }
        let mut p = Matrix3x4::zeros();
        for r in 0..3 {
            let row = numbers(get(base + 1 + r)?, 4, base + 2 + r)?;
            for (k, x) in row.into_iter().enumerate() {
                p[(r, k)] = x;
            }
        }
        let size = get(base + 4)?;
        let rest = size
            .strip_prefix("size ")
            .ok_or_else(|| err(base + 5, "expected `size <w> <h>`"))?;
        let wh = numbers(rest, 2, base + 5)?;
        rig.push(Camera::new(p, wh[0], wh[1]).map_err(|e| err(base + 2, e.to_string()))?);
    }
    if lines[1 + views * 5..].iter().any(|l| !l.trim().is_empty()) {
        return Err(err(2 + views * 5, "unexpected trailing data"));
    }
    Ok(rig)
}

pub fn save_rig(rig: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_rig(rig))?;
    Ok(())
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<Rig> {
    parse_rig(&std::fs::read_to_string(path)?)
}
