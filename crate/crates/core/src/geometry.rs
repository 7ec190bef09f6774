//! Rigid-body pose algebra for SE(2) and SE(3), and point-cloud transformation.
//!
//! SE(2) is the trained path; SE(3) exists so that trajectories from 3D
//! sources can be read, composed and evaluated.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Wraps an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dimension {
    Se2,
    Se3,
}

impl Dimension {
    /// Number of spatial coordinates the group acts on.
    pub fn spatial(self) -> usize {
        match self {
            Dimension::Se2 => 2,
            Dimension::Se3 => 3,
        }
    }
}

/// Planar rigid transform. The angle is kept in (−π, π].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Se2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Se2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Se2 {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn translation(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * p[0] - s * p[1] + self.x, s * p[0] + c * p[1] + self.y]
    }

    pub fn compose(&self, b: &Se2) -> Se2 {
        let [x, y] = self.apply([b.x, b.y]);
        Se2::new(x, y, self.theta + b.theta)
    }

    pub fn inverse(&self) -> Se2 {
        let (s, c) = self.theta.sin_cos();
        Se2::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// The transform `r` with `self ∘ r = to`.
    pub fn relative(&self, to: &Se2) -> Se2 {
        self.inverse().compose(to)
    }

    /// 3×3 homogeneous matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]]
    }
}

impl Default for Se2 {
    fn default() -> Self {
        Se2::identity()
    }
}

/// Spatial rigid transform with a unit quaternion stored as (w, x, y, z).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se3 {
    pub t: [f64; 3],
    pub q: [f64; 4],
}

fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn quat_normalize(q: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

impl Se3 {
    pub fn new(t: [f64; 3], q: [f64; 4]) -> Result<Self> {
        let n2 = q.iter().map(|v| v * v).sum::<f64>();
        if !(n2.is_finite() && n2 > 0.0) {
            return Err(Error::InvalidArgument("quaternion has zero or non-finite norm".into()));
        }
        Ok(Se3 {
            t,
            q: quat_normalize(q),
        })
    }

    pub fn identity() -> Self {
        Se3 {
            t: [0.0; 3],
            q: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Rotation about a unit axis.
    pub fn from_axis_angle(t: [f64; 3], axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Se3 {
            t,
            q: quat_normalize([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]),
        }
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let [w, x, y, z] = self.q;
        // v + 2w(u×v) + 2u×(u×v), u = (x,y,z)
        let uv = [y * v[2] - z * v[1], z * v[0] - x * v[2], x * v[1] - y * v[0]];
        let uuv = [y * uv[2] - z * uv[1], z * uv[0] - x * uv[2], x * uv[1] - y * uv[0]];
        [
            v[0] + 2.0 * (w * uv[0] + uuv[0]),
            v[1] + 2.0 * (w * uv[1] + uuv[1]),
            v[2] + 2.0 * (w * uv[2] + uuv[2]),
        ]
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotate(p);
        [r[0] + self.t[0], r[1] + self.t[1], r[2] + self.t[2]]
    }

    pub fn compose(&self, b: &Se3) -> Se3 {
        Se3 {
            t: self.apply(b.t),
            q: quat_normalize(quat_mul(self.q, b.q)),
        }
    }

    pub fn inverse(&self) -> Se3 {
        let qi = [self.q[0], -self.q[1], -self.q[2], -self.q[3]];
        let inv = Se3 { t: [0.0; 3], q: qi };
        let r = inv.rotate(self.t);
        Se3 {
            t: [-r[0], -r[1], -r[2]],
            q: qi,
        }
    }

    /// Geodesic angle of the rotation, in radians, in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        let v = (self.q[1] * self.q[1] + self.q[2] * self.q[2] + self.q[3] * self.q[3]).sqrt();
        2.0 * v.atan2(self.q[0].abs())
    }
}

/// A rigid transform in either SE(2) or SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pose {
    Se2(Se2),
    Se3(Se3),
}

impl From<Se2> for Pose {
    fn from(p: Se2) -> Self {
        Pose::Se2(p)
    }
}

impl From<Se3> for Pose {
    fn from(p: Se3) -> Self {
        Pose::Se3(p)
    }
}

impl Pose {
    pub fn identity(dim: Dimension) -> Pose {
        match dim {
            Dimension::Se2 => Pose::Se2(Se2::identity()),
            Dimension::Se3 => Pose::Se3(Se3::identity()),
        }
    }

    pub fn dimension(&self) -> Dimension {
        match self {
            Pose::Se2(_) => Dimension::Se2,
            Pose::Se3(_) => Dimension::Se3,
        }
    }

    pub fn as_se2(&self) -> Result<Se2> {
        match self {
            Pose::Se2(p) => Ok(*p),
            Pose::Se3(_) => Err(Error::DimensionMismatch { expected: 2, got: 3 }),
        }
    }

    pub fn translation(&self) -> Vec<f64> {
        match self {
            Pose::Se2(p) => vec![p.x, p.y],
            Pose::Se3(p) => p.t.to_vec(),
        }
    }

    /// Writes `R·p + t` into `out`. Slices must have the pose's spatial dimension.
    pub fn apply_slice(&self, p: &[f64], out: &mut [f64]) {
        match self {
            Pose::Se2(t) => {
                let r = t.apply([p[0], p[1]]);
                out.copy_from_slice(&r);
            }
            Pose::Se3(t) => {
                let r = t.apply([p[0], p[1], p[2]]);
                out.copy_from_slice(&r);
            }
        }
    }

    fn check_same(&self, other: &Pose) -> Result<()> {
        let (a, b) = (self.dimension().spatial(), other.dimension().spatial());
        if a != b {
            return Err(Error::DimensionMismatch { expected: a, got: b });
        }
        Ok(())
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pose::Se2(p) => write!(f, "{},{},{}", p.x, p.y, p.theta),
            Pose::Se3(p) => write!(
                f,
                "{},{},{},{},{},{},{}",
                p.t[0], p.t[1], p.t[2], p.q[0], p.q[1], p.q[2], p.q[3]
            ),
        }
    }
}

/// Homogeneous product `M(a)·M(b)`.
pub fn compose(a: &Pose, b: &Pose) -> Result<Pose> {
    a.check_same(b)?;
    Ok(match (a, b) {
        (Pose::Se2(a), Pose::Se2(b)) => Pose::Se2(a.compose(b)),
        (Pose::Se3(a), Pose::Se3(b)) => Pose::Se3(a.compose(b)),
        _ => unreachable!(),
    })
}

pub fn inverse(t: &Pose) -> Pose {
    match t {
        Pose::Se2(p) => Pose::Se2(p.inverse()),
        Pose::Se3(p) => Pose::Se3(p.inverse()),
    }
}

/// The pose `r` such that `compose(from, r) == to`.
pub fn relative(from: &Pose, to: &Pose) -> Result<Pose> {
    compose(&inverse(from), to)
}

/// A scan: points in the sensor's local frame plus the sensor origin.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub sensor_origin: [f64; D],
}

pub type Cloud2 = PointCloud<2>;
pub type Cloud3 = PointCloud<3>;

impl<const D: usize> PointCloud<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        PointCloud {
            points,
            sensor_origin: [0.0; D],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.sensor_origin.iter().all(|v| v.is_finite()) && self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn centroid(&self) -> [f64; D] {
        let mut c = [0.0; D];
        for p in &self.points {
            for d in 0..D {
                c[d] += p[d];
            }
        }
        let n = self.points.len().max(1) as f64;
        c.map(|v| v / n)
    }
}

pub fn transform_cloud<const D: usize>(t: &Pose, s: &PointCloud<D>) -> Result<PointCloud<D>> {
    let dim = t.dimension().spatial();
    if dim != D {
        return Err(Error::DimensionMismatch { expected: dim, got: D });
    }
    let map = |p: &[f64; D]| {
        let mut out = [0.0; D];
        t.apply_slice(p, &mut out);
        out
    };
    Ok(PointCloud {
        points: s.points.iter().map(map).collect(),
        sensor_origin: map(&s.sensor_origin),
    })
}

/// Applies a planar pose to every point, without the dimension check.
pub fn transform_points2(t: &Se2, pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    pts.iter().map(|p| t.apply(*p)).collect()
}

/// Parses one pose CSV row; 3 columns are SE(2), 7 are SE(3).
pub fn parse_pose_row(row: &str) -> std::result::Result<Pose, String> {
    let vals: Vec<f64> = row
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", v.trim())))
        .collect::<std::result::Result<_, _>>()?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err("non-finite value".into());
    }
    match vals.len() {
        3 => Ok(Pose::Se2(Se2::new(vals[0], vals[1], vals[2]))),
        7 => Se3::new([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5], vals[6]])
            .map(Pose::Se3)
            .map_err(|e| e.to_string()),
        n => Err(format!("expected 3 or 7 columns, got {n}")),
    }
}

pub fn read_poses_csv(path: &Path) -> Result<Vec<Pose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let pose = parse_pose_row(line).map_err(|m| Error::parse(&name, i + 1, m))?;
        if let Some(first) = poses.first() {
            let first: &Pose = first;
            if first.dimension() != pose.dimension() {
                return Err(Error::parse(&name, i + 1, "mixed pose dimensions"));
            }
        }
        poses.push(pose);
    }
    Ok(poses)
}

pub fn write_poses_csv(path: &Path, poses: &[Pose]) -> Result<()> {
    let mut out = String::new();
    for p in poses {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
