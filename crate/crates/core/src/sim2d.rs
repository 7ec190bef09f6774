//! Synthetic 2D LiDAR datasets: wall-segment scenes, closed-loop trajectories,
//! noisy raycast scans and the on-disk dataset layout.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{read_poses_csv, write_poses_csv, Cloud2, Pose, Se2};
use crate::rng::{keyed, Domain};

pub const DATASET_VERSION: u32 = 1;
/// Scans with fewer hits than this are rejected as degenerate.
pub const MIN_SCAN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
}

impl Segment {
    pub fn new(p0: [f64; 2], p1: [f64; 2]) -> Self {
        Segment { p0, p1 }
    }

    pub fn length(&self) -> f64 {
        (self.p1[0] - self.p0[0]).hypot(self.p1[1] - self.p0[1])
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let d = [self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]];
        let w = [p[0] - self.p0[0], p[1] - self.p0[1]];
        let t = ((w[0] * d[0] + w[1] * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
        (w[0] - t * d[0]).hypot(w[1] - t * d[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    segments: Vec<Segment>,
}

impl Environment {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "environment needs at least 3 segments, got {}",
                segments.len()
            )));
        }
        if let Some(i) = segments.iter().position(|s| !(s.length() > 0.0)) {
            return Err(Error::InvalidArgument(format!("segment {i} has zero length")));
        }
        Ok(Environment { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Axis-aligned rectangular room with rectangular obstacles `(min, max)`.
    pub fn room(width: f64, height: f64, obstacles: &[([f64; 2], [f64; 2])]) -> Result<Self> {
        let mut segs = rect_segments([0.0, 0.0], [width, height]);
        for (lo, hi) in obstacles {
            segs.extend(rect_segments(*lo, *hi));
        }
        Environment::new(segs)
    }

    /// Distance from `p` to the closest wall.
    pub fn distance_to_walls(&self, p: [f64; 2]) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }
}

fn rect_segments(lo: [f64; 2], hi: [f64; 2]) -> Vec<Segment> {
    let c = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    (0..4).map(|i| Segment::new(c[i], c[(i + 1) % 4])).collect()
}

/// Smallest positive distance along the ray at which it meets a segment, if
/// that distance is within `max_range`.
pub fn raycast(env: &Environment, origin: [f64; 2], direction: [f64; 2], max_range: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for s in &env.segments {
        let e = [s.p1[0] - s.p0[0], s.p1[1] - s.p0[1]];
        let denom = direction[0] * e[1] - direction[1] * e[0];
        if denom.abs() < 1e-15 {
            continue;
        }
        let w = [s.p0[0] - origin[0], s.p0[1] - origin[1]];
        let t = (w[0] * e[1] - w[1] * e[0]) / denom;
        let u = (w[0] * direction[1] - w[1] * direction[0]) / denom;
        if t > 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&u) && t <= max_range {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanConfig {
    pub num_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            num_beams: 256,
            fov: 2.0 * PI,
            max_range: 10.0,
            range_noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_beams < 8 {
            return Err(Error::InvalidArgument("num_beams must be >= 8".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidArgument("max_range must be > 0".into()));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("range_noise_sigma must be >= 0".into()));
        }
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI) {
            return Err(Error::InvalidArgument("fov must be in (0, 2π]".into()));
        }
        Ok(())
    }

    /// Beam angle in the sensor frame.
    pub fn beam_angle(&self, beam: usize) -> f64 {
        if (self.fov - 2.0 * PI).abs() < 1e-12 {
            -PI + self.fov * beam as f64 / self.num_beams as f64
        } else {
            -0.5 * self.fov + self.fov * beam as f64 / (self.num_beams - 1) as f64
        }
    }
}

/// K scans with ground truth, optionally with initial (warm-start) poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub clouds: Vec<Cloud2>,
    pub gt_poses: Vec<Pose>,
    pub init_poses: Option<Vec<Pose>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.clouds.len();
        if k < 2 {
            return Err(Error::InvalidArgument(format!("dataset needs K >= 2 frames, got {k}")));
        }
        if self.gt_poses.len() != k {
            return Err(Error::LengthMismatch {
                what: "clouds vs gt_poses",
                left: k,
                right: self.gt_poses.len(),
            });
        }
        if let Some(init) = &self.init_poses {
            if init.len() != k {
                return Err(Error::LengthMismatch {
                    what: "clouds vs init_poses",
                    left: k,
                    right: init.len(),
                });
            }
        }
        for (i, c) in self.clouds.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::EmptyCloud(format!("frame {i}")));
            }
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    node: format!("dataset.cloud[{i}]"),
                });
            }
        }
        Ok(())
    }

    pub fn gt_se2(&self) -> Result<Vec<Se2>> {
        self.gt_poses.iter().map(Pose::as_se2).collect()
    }
}

fn scan_frame(env: &Environment, pose: &Se2, cfg: &ScanConfig, frame: usize) -> Result<Cloud2> {
    let mut pts = Vec::with_capacity(cfg.num_beams);
    for beam in 0..cfg.num_beams {
        let a = cfg.beam_angle(beam);
        let (s, c) = (pose.theta + a).sin_cos();
        let Some(hit) = raycast(env, [pose.x, pose.y], [c, s], cfg.max_range) else {
            continue;
        };
        let mut r = hit;
        if cfg.range_noise_sigma > 0.0 {
            let mut rng = keyed(Domain::ScanNoise, cfg.seed, frame as u64, beam as u64, 0);
            let z: f64 = StandardNormal.sample(&mut rng);
            // truncated at 5σ so ranges stay within max_range + 5σ
            r += cfg.range_noise_sigma * z.clamp(-5.0, 5.0);
        }
        if r <= 0.0 {
            continue;
        }
        let (ls, lc) = a.sin_cos();
        pts.push([r * lc, r * ls]);
    }
    if pts.len() < MIN_SCAN_POINTS {
        return Err(Error::DegenerateViewpoint {
            frame,
            points: pts.len(),
        });
    }
    Ok(Cloud2::new(pts))
}

/// Scans `env` from every trajectory pose. Frames are independent, so they are
/// generated in parallel; the keyed noise makes the result thread-count invariant.
pub fn generate_dataset(env: &Environment, trajectory: &[Pose], cfg: &ScanConfig) -> Result<Dataset> {
    cfg.validate()?;
    if trajectory.len() < 2 {
        return Err(Error::InvalidArgument("trajectory needs at least 2 poses".into()));
    }
    let poses: Vec<Se2> = trajectory.iter().map(Pose::as_se2).collect::<Result<_>>()?;
    let clouds = poses
        .par_iter()
        .enumerate()
        .map(|(i, p)| scan_frame(env, p, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        clouds,
        gt_poses: trajectory.to_vec(),
        init_poses: None,
    })
}

/// Closed waypoint polygon with rounded corners, driven for one or more laps.
///
/// The lateral offset grows linearly with travelled distance, so later laps run
/// `lap_offset` metres beside earlier ones instead of retracing them exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopTrajectory {
    pub waypoints: Vec<[f64; 2]>,
    pub corner_radius: f64,
    pub laps: usize,
    pub lap_offset: f64,
}

enum Piece {
    Line {
        a: [f64; 2],
        dir: [f64; 2],
        len: f64,
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

impl Piece {
    fn len(&self) -> f64 {
        match self {
            Piece::Line { len, .. } => *len,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position and heading at arc length `s` along the piece.
    fn at(&self, s: f64) -> ([f64; 2], f64) {
        match self {
            Piece::Line { a, dir, .. } => ([a[0] + s * dir[0], a[1] + s * dir[1]], dir[1].atan2(dir[0])),
            Piece::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let ang = start + sweep.signum() * s / radius;
                let pos = [center[0] + radius * ang.cos(), center[1] + radius * ang.sin()];
                (pos, ang + sweep.signum() * PI / 2.0)
            }
        }
    }
}

impl LoopTrajectory {
    fn pieces(&self) -> Result<Vec<Piece>> {
        let n = self.waypoints.len();
        if n < 3 {
            return Err(Error::InvalidArgument("loop needs at least 3 waypoints".into()));
        }
        let unit = |a: [f64; 2], b: [f64; 2]| {
            let d = [b[0] - a[0], b[1] - a[1]];
            let l = d[0].hypot(d[1]);
            [d[0] / l, d[1] / l]
        };
        // per corner: entry point, exit point, arc
        let mut corners = Vec::with_capacity(n);
        for i in 0..n {
            let prev = self.waypoints[(i + n - 1) % n];
            let v = self.waypoints[i];
            let next = self.waypoints[(i + 1) % n];
            let din = unit(prev, v);
            let dout = unit(v, next);
            let turn = (din[0] * dout[1] - din[1] * dout[0]).atan2(din[0] * dout[0] + din[1] * dout[1]);
            let cut = self.corner_radius * (turn.abs() / 2.0).tan();
            let entry = [v[0] - cut * din[0], v[1] - cut * din[1]];
            let exit = [v[0] + cut * dout[0], v[1] + cut * dout[1]];
            let side = turn.signum();
            let normal = [-din[1] * side, din[0] * side];
            let center = [
                entry[0] + self.corner_radius * normal[0],
                entry[1] + self.corner_radius * normal[1],
            ];
            let start = (entry[1] - center[1]).atan2(entry[0] - center[0]);
            corners.push((entry, exit, center, start, turn));
        }
        let mut pieces = Vec::with_capacity(2 * n);
        for i in 0..n {
            let (_, exit, ..) = corners[i];
            let (entry_next, _, center, start, turn) = corners[(i + 1) % n];
            let d = [entry_next[0] - exit[0], entry_next[1] - exit[1]];
            let len = d[0].hypot(d[1]);
            if len > 1e-12 {
                pieces.push(Piece::Line {
                    a: exit,
                    dir: [d[0] / len, d[1] / len],
                    len,
                });
            }
            if turn.abs() > 1e-12 && self.corner_radius > 0.0 {
                pieces.push(Piece::Arc {
                    center,
                    radius: self.corner_radius,
                    start,
                    sweep: turn,
                });
            }
        }
        Ok(pieces)
    }

    /// Length of one lap.
    pub fn lap_length(&self) -> Result<f64> {
        Ok(self.pieces()?.iter().map(Piece::len).sum())
    }

    /// `num_frames` poses equally spaced in arc length over all laps; heading is
    /// the direction of travel.
    pub fn sample(&self, num_frames: usize) -> Result<Vec<Pose>> {
        if self.laps == 0 || num_frames < 2 {
            return Err(Error::InvalidArgument("need laps >= 1 and at least 2 frames".into()));
        }
        let pieces = self.pieces()?;
        let lap_len: f64 = pieces.iter().map(Piece::len).sum();
        let total = lap_len * self.laps as f64;
        let step = total / num_frames as f64;
        let mut out = Vec::with_capacity(num_frames);
        for k in 0..num_frames {
            let s_total = k as f64 * step;
            let mut s = s_total % lap_len;
            let mut pos_head = pieces[0].at(0.0);
            for p in &pieces {
                if s <= p.len() {
                    pos_head = p.at(s);
                    break;
                }
                s -= p.len();
            }
            let (pos, heading) = pos_head;
            let off = self.lap_offset * s_total / lap_len;
            // offset to the right of the direction of travel
            let (sh, ch) = heading.sin_cos();
            let p = [pos[0] + off * sh, pos[1] - off * ch];
            out.push(Pose::Se2(Se2::new(p[0], p[1], heading)));
        }
        Ok(out)
    }
}

/// The built-in asymmetric room: 20 m × 14 m, a central block and five
/// smaller boxes.
pub fn reference_environment() -> Environment {
    Environment::room(
        20.0,
        14.0,
        &[
            ([7.0, 6.0], [13.0, 8.0]),
            ([1.0, 6.0], [2.0, 8.5]),
            ([9.0, 11.8], [10.5, 13.0]),
            ([17.8, 5.0], [19.0, 6.0]),
            ([4.0, 1.0], [5.5, 2.0]),
            ([14.0, 12.0], [15.0, 13.0]),
        ],
    )
    .expect("reference environment is valid")
}

/// Two laps around the central block, the second 0.3 m outside the first.
pub fn reference_trajectory() -> LoopTrajectory {
    LoopTrajectory {
        waypoints: vec![[3.5, 3.5], [16.5, 3.5], [16.5, 10.5], [3.5, 10.5]],
        corner_radius: 1.5,
        laps: 2,
        lap_offset: 0.3,
    }
}

/// Scene parameters for `simulate`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub frames: usize,
    pub laps: usize,
    pub lap_offset: f64,
    pub scan: ScanConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let t = reference_trajectory();
        SimConfig {
            frames: 256,
            laps: t.laps,
            lap_offset: t.lap_offset,
            scan: ScanConfig::default(),
        }
    }
}

/// The reference scene sampled with `cfg`.
pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    let env = reference_environment();
    let mut traj = reference_trajectory();
    traj.laps = cfg.laps;
    traj.lap_offset = cfg.lap_offset;
    let poses = traj.sample(cfg.frames)?;
    generate_dataset(&env, &poses, &cfg.scan)
}

pub fn scan_path(dir: &Path, i: usize) -> std::path::PathBuf {
    dir.join("scans").join(format!("scan_{i:05}.csv"))
}

/// Writes `meta.txt`, `scans/scan_NNNNN.csv`, `gt_poses.csv` and, when
/// present, `init_poses.csv`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    ds.validate()?;
    let scans = dir.join("scans");
    fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
    let meta = format!("dimension=2\nK={}\nversion={}\n", ds.len(), DATASET_VERSION);
    let meta_path = dir.join("meta.txt");
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    for (i, c) in ds.clouds.iter().enumerate() {
        let mut s = String::with_capacity(c.len() * 40);
        for p in &c.points {
            s.push_str(&format!("{},{}\n", p[0], p[1]));
        }
        let path = scan_path(dir, i);
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    }
    write_poses_csv(&dir.join("gt_poses.csv"), &ds.gt_poses)?;
    if let Some(init) = &ds.init_poses {
        write_poses_csv(&dir.join("init_poses.csv"), init)?;
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join("meta.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path.display().to_string(), i + 1, "expected key=value"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta = read_meta(dir)?;
    let get = |key: &str| meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let meta_name = dir.join("meta.txt").display().to_string();
    if get("dimension") != Some("2") {
        return Err(Error::parse(&meta_name, 0, "only dimension=2 scans can be loaded"));
    }
    let k: usize = get("K")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(&meta_name, 0, "missing or invalid K"))?;
    let mut clouds = Vec::with_capacity(k);
    for i in 0..k {
        let path = scan_path(dir, i);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut pts = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::parse(path.display().to_string(), ln + 1, "expected `x,y`");
            let (x, y) = line.split_once(',').ok_or_else(bad)?;
            let x: f64 = x.trim().parse().map_err(|_| bad())?;
            let y: f64 = y.trim().parse().map_err(|_| bad())?;
            pts.push([x, y]);
        }
        clouds.push(Cloud2::new(pts));
    }
    let gt_poses = read_poses_csv(&dir.join("gt_poses.csv"))?;
    let init_path = dir.join("init_poses.csv");
    let init_poses = if init_path.exists() {
        Some(read_poses_csv(&init_path)?)
    } else {
        None
    };
    let ds = Dataset {
        clouds,
        gt_poses,
        init_poses,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform_cloud;

    fn unit_square() -> Environment {
        Environment::room(1.0, 1.0, &[]).unwrap()
    }

    #[test]
    fn raycast_unit_square_center() {
        let env = unit_square();
        let d = raycast(&env, [0.5, 0.5], [1.0, 0.0], 10.0).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        let diag = raycast(&env, [0.5, 0.5], [0.6, 0.8], 10.0).unwrap();
        // hits the top wall y = 1 at t = 0.5 / 0.8
        assert!((diag - 0.625).abs() < 1e-12);
    }

    #[test]
    fn raycast_misses_beyond_range() {
        let env = Environment::new(vec![
            Segment::new([0.0, 0.0], [1.0, 0.0]),
            Segment::new([1.0, 0.0], [1.0, 1.0]),
            Segment::new([0.0, 1.0], [1.0, 1.0]),
        ])
        .unwrap();
        // open to the left
        assert_eq!(raycast(&env, [0.5, 0.5], [-1.0, 0.0], 10.0), None);
        assert_eq!(raycast(&env, [0.5, 0.5], [1.0, 0.0], 0.4), None);
    }

    #[test]
    fn environment_validation() {
        assert!(Environment::new(vec![Segment::new([0.0, 0.0], [1.0, 0.0])]).is_err());
        let degenerate = vec![
            Segment::new([0.0, 0.0], [1.0, 0.0]),
            Segment::new([1.0, 0.0], [1.0, 0.0]),
            Segment::new([0.0, 1.0], [1.0, 1.0]),
        ];
        assert!(Environment::new(degenerate).is_err());
    }

    fn small_config(sigma: f64) -> ScanConfig {
        ScanConfig {
            num_beams: 64,
            range_noise_sigma: sigma,
            seed: 11,
            ..ScanConfig::default()
        }
    }

    #[test]
    fn noise_free_points_lie_on_walls() {
        let env = reference_environment();
        let poses = reference_trajectory().sample(12).unwrap();
        let ds = generate_dataset(&env, &poses, &small_config(0.0)).unwrap();
        assert_eq!(ds.clouds.len(), 12);
        assert_eq!(ds.gt_poses.len(), 12);
        for (c, p) in ds.clouds.iter().zip(&ds.gt_poses) {
            assert_eq!(c.sensor_origin, [0.0, 0.0]);
            let g = transform_cloud(p, c).unwrap();
            for q in &g.points {
                assert!(env.distance_to_walls(*q) < 1e-9);
            }
        }
    }

    #[test]
    fn ranges_bounded_and_deterministic() {
        let env = reference_environment();
        let poses = reference_trajectory().sample(16).unwrap();
        let cfg = small_config(0.05);
        let a = generate_dataset(&env, &poses, &cfg).unwrap();
        let b = generate_dataset(&env, &poses, &cfg).unwrap();
        assert_eq!(a, b);
        for c in &a.clouds {
            for p in &c.points {
                assert!(p[0].hypot(p[1]) <= cfg.max_range + 5.0 * cfg.range_noise_sigma);
            }
        }
        let other = generate_dataset(&env, &poses, &ScanConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn degenerate_viewpoint_is_reported() {
        let env = unit_square();
        // outside the room looking away: no hits
        let poses = vec![Pose::Se2(Se2::new(0.5, 0.5, 0.0)), Pose::Se2(Se2::new(50.0, 50.0, 0.0))];
        let cfg = ScanConfig {
            max_range: 5.0,
            ..small_config(0.0)
        };
        match generate_dataset(&env, &poses, &cfg) {
            Err(Error::DegenerateViewpoint { frame: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loop_trajectory_revisits() {
        let traj = reference_trajectory();
        let k = 256;
        let poses = traj.sample(k).unwrap();
        let t: Vec<[f64; 2]> = poses.iter().map(|p| p.as_se2().unwrap().translation()).collect();
        let mut found = false;
        for i in 0..k {
            for j in i + k / 4 + 1..k {
                if (t[i][0] - t[j][0]).hypot(t[i][1] - t[j][1]) < 2.0 {
                    found = true;
                }
            }
        }
        assert!(found);
        // path stays clear of obstacles
        let env = reference_environment();
        for p in &t {
            assert!(env.distance_to_walls(*p) > 0.5, "{p:?}");
        }
        // heading follows travel direction
        for w in poses.windows(2) {
            let (a, b) = (w[0].as_se2().unwrap(), w[1].as_se2().unwrap());
            let dir = (b.y - a.y).atan2(b.x - a.x);
            assert!(crate::geometry::normalize_angle(dir - a.theta).abs() < 0.25);
        }
    }

    #[test]
    fn dataset_roundtrip_on_disk() {
        let env = reference_environment();
        let poses = reference_trajectory().sample(4).unwrap();
        let mut ds = generate_dataset(&env, &poses, &small_config(0.01)).unwrap();
        ds.init_poses = Some(vec![Pose::Se2(Se2::identity()); 4]);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        assert!(dir.path().join("scans/scan_00003.csv").exists());
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        let meta = read_meta(dir.path()).unwrap();
        assert!(meta.contains(&("K".to_string(), "4".to_string())));
    }
}
