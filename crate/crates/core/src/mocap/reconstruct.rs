use nalgebra::Matrix3;

use super::camera::Camera;
use super::detect::DetectionSet;
use super::epipolar::{epipolar_midhip_cost, fundamental};
use super::hungarian::hungarian_match;
use super::track::track_identities;
use super::triangulate::{normalize_sigma, triangulate, SIGMA_MAX_PX};
use super::{MocapError, Point2, Point3, Result};
use crate::masking::QualitySignals;
use crate::motion::MotionSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructParams {
    /// Joint used for cross-view matching.
    pub hip: usize,
    /// Matches with a larger epipolar cost are rejected.
    pub max_epipolar_px: f64,
    pub sigma_max_px: f64,
    /// Number of tracks to keep; `None` keeps all.
    pub people: Option<usize>,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            hip: 0,
            max_epipolar_px: 40.0,
            sigma_max_px: SIGMA_MAX_PX,
            people: None,
        }
    }
}

/// Tracked 3D people with per-cell error scores and the confidences of the
/// detections each track was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction3D {
    pub people: usize,
    pub views: usize,
    pub frames: usize,
    pub joints: usize,
    /// `N x T x J x 3`
    pub d: Vec<f64>,
    /// `N x T x J`, 1 where fewer than two views saw the joint.
    pub sigma: Vec<f64>,
    /// `N x V x T x J`
    pub rho: Vec<f64>,
    /// `N x T x J`: triangulated from at least two views.
    pub observed: Vec<bool>,
}

impl Reconstruction3D {
    pub fn motion(&self, n: usize) -> MotionSequence {
        let len = self.frames * self.joints;
        MotionSequence::new(
            self.frames,
            self.joints,
            3,
            self.d[n * len * 3..(n + 1) * len * 3].to_vec(),
        )
        .expect("reconstruction values are finite")
    }

    pub fn signals(&self, n: usize) -> QualitySignals {
        let len = self.frames * self.joints;
        QualitySignals::new(
            self.views,
            self.frames,
            self.joints,
            self.rho[n * self.views * len..(n + 1) * self.views * len].to_vec(),
            self.sigma[n * len..(n + 1) * len].to_vec(),
        )
        .expect("signals lie in [0, 1]")
    }
}

type Cluster = Vec<Option<usize>>;

fn match_frame(det: &DetectionSet, fs: &[Vec<Option<Matrix3<f64>>>], t: usize, p: &ReconstructParams) -> Vec<Cluster> {
    let views = det.views;
    let seen = |v: usize, n: usize| (0..det.joints).any(|j| det.visible(n, v, t, j));
    let mut clusters: Vec<Cluster> = Vec::new();
    for v in 0..views {
        let slots: Vec<usize> = (0..det.people).filter(|&n| seen(v, n)).collect();
        if slots.is_empty() {
            continue;
        }
        let mut matched = vec![None; slots.len()];
        if !clusters.is_empty() {
            let reject = p.max_epipolar_px * 10.0 + 1.0;
            let cost: Vec<Vec<f64>> = clusters
                .iter()
                .map(|c| {
                    slots
                        .iter()
                        .map(|&s| {
                            let best = (0..v)
                                .filter_map(|u| c[u].map(|m| (u, m)))
                                .map(|(u, m)| match &fs[u][v] {
                                    Some(f) => epipolar_midhip_cost(det, u, m, v, s, t, f, p.hip),
                                    None => f64::INFINITY,
                                })
                                .fold(f64::INFINITY, f64::min);
                            if best.is_finite() {
                                best
                            } else {
                                reject
                            }
                        })
                        .collect()
                })
                .collect();
            if let Ok(pairs) = hungarian_match(&cost) {
                for (c, k) in pairs {
                    if cost[c][k] <= p.max_epipolar_px {
                        matched[k] = Some(c);
                    }
                }
            }
        }
        for (k, &s) in slots.iter().enumerate() {
            match matched[k] {
                Some(c) => clusters[c][v] = Some(s),
                None => {
                    let mut c = vec![None; views];
                    c[v] = Some(s);
                    clusters.push(c);
                }
            }
        }
    }
    clusters
}

struct FramePerson {
    cluster: Cluster,
    points: Vec<Option<(Point3, f64)>>,
}

/// Matches detections across views per frame, triangulates each matched
/// person and links people over time. Joints seen in fewer than two views
/// get `sigma = 1` and a position interpolated from neighbouring frames.
pub fn reconstruct(det: &DetectionSet, rig: &[Camera], p: &ReconstructParams) -> Result<Reconstruction3D> {
    if rig.len() != det.views {
        return Err(MocapError::Shape(format!("{} cameras for {} views", rig.len(), det.views)));
    }
    let (views, frames, joints) = (det.views, det.frames, det.joints);
    let mut fs = vec![vec![None; views]; views];
    for a in 0..views {
        for b in 0..views {
            if a != b {
                fs[a][b] = Some(fundamental(&rig[a], &rig[b])?);
            }
        }
    }
    let mut per_frame: Vec<Vec<FramePerson>> = Vec::with_capacity(frames);
    for t in 0..frames {
        let clusters = match_frame(det, &fs, t, p);
        let mut people = Vec::new();
        for cluster in clusters {
            let points: Vec<Option<(Point3, f64)>> = (0..joints)
                .map(|j| {
                    let obs: Vec<Option<Point2>> = (0..views)
                        .map(|v| cluster[v].filter(|&s| det.visible(s, v, t, j)).map(|s| det.point(s, v, t, j)))
                        .collect();
                    triangulate(&obs, rig).ok()
                })
                .collect();
            if points.iter().any(Option::is_some) {
                people.push(FramePerson { cluster, points });
            }
        }
        people.sort_by_key(|fp| std::cmp::Reverse(fp.points.iter().filter(|x| x.is_some()).count()));
        if let Some(n) = p.people {
            people.truncate(n);
        }
        per_frame.push(people);
    }
    let centroids: Vec<Vec<Point3>> = per_frame
        .iter()
        .map(|people| {
            people
                .iter()
                .map(|fp| {
                    let pts: Vec<Point3> = fp.points.iter().flatten().map(|x| x.0).collect();
                    let n = pts.len() as f64;
                    let mut c = [0.0; 3];
                    for q in &pts {
                        for k in 0..3 {
                            c[k] += q[k] / n;
                        }
                    }
                    c
                })
                .collect()
        })
        .collect();
    let ids = track_identities(&centroids);
    let tracks = ids.iter().flatten().map(|&i| i + 1).max().unwrap_or(0);
    let people = p.people.map_or(tracks, |n| n.min(tracks));
    let len = frames * joints;
    let mut out = Reconstruction3D {
        people,
        views,
        frames,
        joints,
        d: vec![0.0; people * len * 3],
        sigma: vec![1.0; people * len],
        rho: vec![0.0; people * views * len],
        observed: vec![false; people * len],
    };
    for (t, fp) in per_frame.iter().enumerate() {
        for (i, person) in fp.iter().enumerate() {
            let n = ids[t][i];
            if n >= people {
                continue;
            }
            for j in 0..joints {
                let cell = n * len + t * joints + j;
                if let Some((x, s)) = person.points[j] {
                    out.d[cell * 3..cell * 3 + 3].copy_from_slice(&x);
                    out.sigma[cell] = normalize_sigma(s, p.sigma_max_px);
                    out.observed[cell] = true;
                }
                for v in 0..views {
                    if let Some(s) = person.cluster[v] {
                        out.rho[((n * views + v) * frames + t) * joints + j] = det.confidence(s, v, t, j);
                    }
                }
            }
        }
    }
    for n in 0..people {
        fill_gaps(&mut out, n);
    }
    Ok(out)
}

/// Linear interpolation over time for unobserved cells; constant beyond the
/// first and last observation, and the frame's observed centroid when a
/// joint is never observed.
fn fill_gaps(r: &mut Reconstruction3D, n: usize) {
    let (frames, joints) = (r.frames, r.joints);
    let len = frames * joints;
    let idx = |t: usize, j: usize| n * len + t * joints + j;
    for j in 0..joints {
        let seen: Vec<usize> = (0..frames).filter(|&t| r.observed[idx(t, j)]).collect();
        if seen.is_empty() {
            continue;
        }
        for t in 0..frames {
            if r.observed[idx(t, j)] {
                continue;
            }
            let after = seen.iter().position(|&s| s > t);
            let value: Point3 = match after {
                Some(0) => get(r, idx(seen[0], j)),
                None => get(r, idx(*seen.last().expect("non-empty"), j)),
                Some(k) => {
                    let (a, b) = (seen[k - 1], seen[k]);
                    let w = (t - a) as f64 / (b - a) as f64;
                    let (pa, pb) = (get(r, idx(a, j)), get(r, idx(b, j)));
                    [
                        pa[0] + w * (pb[0] - pa[0]),
                        pa[1] + w * (pb[1] - pa[1]),
                        pa[2] + w * (pb[2] - pa[2]),
                    ]
                }
            };
            let c = idx(t, j);
            r.d[c * 3..c * 3 + 3].copy_from_slice(&value);
        }
    }
    for t in 0..frames {
        let obs: Vec<Point3> = (0..joints)
            .filter(|&j| (0..frames).any(|s| r.observed[idx(s, j)]))
            .map(|j| get(r, idx(t, j)))
            .collect();
        if obs.is_empty() {
            continue;
        }
        let m = obs.len() as f64;
        let c = obs.iter().fold([0.0; 3], |a, q| [a[0] + q[0] / m, a[1] + q[1] / m, a[2] + q[2] / m]);
        for j in 0..joints {
            if !(0..frames).any(|s| r.observed[idx(s, j)]) {
                let cell = idx(t, j);
                r.d[cell * 3..cell * 3 + 3].copy_from_slice(&c);
            }
        }
    }
}

fn get(r: &Reconstruction3D, cell: usize) -> Point3 {
    [r.d[cell * 3], r.d[cell * 3 + 1], r.d[cell * 3 + 2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::{default_rig, simulate_detections, DetectionParams};
    use crate::motion::{synth_motion, SynthKind};

    #[test]
    fn two_people_noiseless() {
        let a = synth_motion(SynthKind::LinearWalk, 6, 17, 1).unwrap();
        let mut b = synth_motion(SynthKind::SinusoidLimb, 6, 17, 2).unwrap();
        b = b
            .with_values(b.values().chunks(3).flat_map(|p| [p[0] + 1.5, p[1], p[2] - 1.0]).collect())
            .unwrap();
        let rig = default_rig();
        let det = simulate_detections(&[a.clone(), b.clone()], &rig, &DetectionParams::default(), 3).unwrap();
        let r = reconstruct(
            &det,
            &rig,
            &ReconstructParams {
                people: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.people, 2);
        for n in 0..2 {
            let m = r.motion(n);
            let gt = if (m.cell(0, 0)[0] - a.cell(0, 0)[0]).abs() < 0.1 { &a } else { &b };
            for (x, y) in m.values().iter().zip(gt.values()) {
                assert!((x - y).abs() < 1e-6);
            }
            assert!(r.sigma[n * 6 * 17..(n + 1) * 6 * 17].iter().all(|&s| s < 1e-6));
        }
    }
}
