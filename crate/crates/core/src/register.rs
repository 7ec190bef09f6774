//! Point-to-point ICP for the incremental warm start and for anchor–neighbour
//! pairwise transforms.

use crate::error::{Error, Result};
use crate::geometry::{Cloud2, Pose, Se2};
use crate::sim2d::Dataset;
use crate::spatial::GridIndex;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the mean residual changes by less than this (metres).
    pub convergence_eps: f64,
    pub max_correspondence_dist: f64,
    pub min_inliers: usize,
    /// Pairwise registrations matching fewer than this share of the source
    /// points are treated as unreliable.
    pub min_overlap: f64,
    /// Pairwise registrations whose final mean residual exceeds this (metres)
    /// are treated as unreliable.
    pub max_residual: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 50,
            convergence_eps: 1e-5,
            max_correspondence_dist: 1.0,
            min_inliers: 10,
            min_overlap: 0.5,
            max_residual: 0.1,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || !(self.convergence_eps > 0.0)
            || !(self.max_correspondence_dist > 0.0)
            || self.min_inliers == 0
            || !(0.0..=1.0).contains(&self.min_overlap)
            || !(self.max_residual > 0.0)
        {
            return Err(Error::InvalidArgument("ICP parameters must all be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult {
    /// Maps source points into the target frame.
    pub relative_pose: Se2,
    pub mean_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Share of source points with a correspondence at the final pose.
    pub inlier_fraction: f64,
    /// Mean correspondence distance seen at the start of each iteration.
    pub residual_history: Vec<f64>,
}

/// Least-squares rigid fit `dst ≈ R·src + t` for paired points.
pub fn fit_rigid_2d(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Se2 {
    debug_assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let mut ms = [0.0; 2];
    let mut md = [0.0; 2];
    for (s, d) in src.iter().zip(dst) {
        ms[0] += s[0];
        ms[1] += s[1];
        md[0] += d[0];
        md[1] += d[1];
    }
    ms = [ms[0] / n, ms[1] / n];
    md = [md[0] / n, md[1] / n];
    let (mut dot, mut cross) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let a = [s[0] - ms[0], s[1] - ms[1]];
        let b = [d[0] - md[0], d[1] - md[1]];
        dot += a[0] * b[0] + a[1] * b[1];
        cross += a[0] * b[1] - a[1] * b[0];
    }
    let theta = cross.atan2(dot);
    let (sn, cs) = theta.sin_cos();
    Se2::new(
        md[0] - (cs * ms[0] - sn * ms[1]),
        md[1] - (sn * ms[0] + cs * ms[1]),
        theta,
    )
}

struct Matches {
    src: Vec<[f64; 2]>,
    dst: Vec<[f64; 2]>,
    mean: f64,
}

fn correspondences(source: &[[f64; 2]], grid: &GridIndex, target: &[[f64; 2]], pose: &Se2, max_d: f64) -> Matches {
    let mut m = Matches {
        src: Vec::with_capacity(source.len()),
        dst: Vec::with_capacity(source.len()),
        mean: 0.0,
    };
    let mut total = 0.0;
    for p in source {
        if let Some((j, d)) = grid.nearest_within(pose.apply(*p), max_d) {
            m.src.push(*p);
            m.dst.push(target[j]);
            total += d;
        }
    }
    if !m.src.is_empty() {
        m.mean = total / m.src.len() as f64;
    }
    m
}

/// Registers `source` onto `target` starting from `init`.
pub fn icp_pairwise(source: &Cloud2, target: &Cloud2, init: &Se2, cfg: &IcpConfig) -> Result<IcpResult> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud("ICP input".into()));
    }
    let grid = GridIndex::new(&target.points, cfg.max_correspondence_dist);
    let mut pose = *init;
    let mut history = Vec::new();
    let mut prev: Option<f64> = None;
    for it in 0..cfg.max_iterations {
        let m = correspondences(
            &source.points,
            &grid,
            &target.points,
            &pose,
            cfg.max_correspondence_dist,
        );
        if m.src.len() < cfg.min_inliers {
            return Ok(IcpResult {
                relative_pose: pose,
                mean_residual: if m.src.is_empty() { f64::INFINITY } else { m.mean },
                iterations: it,
                converged: false,
                inlier_fraction: m.src.len() as f64 / source.len() as f64,
                residual_history: history,
            });
        }
        history.push(m.mean);
        if let Some(p) = prev {
            if (p - m.mean).abs() < cfg.convergence_eps {
                return Ok(IcpResult {
                    relative_pose: pose,
                    mean_residual: m.mean,
                    iterations: it,
                    converged: true,
                    inlier_fraction: m.src.len() as f64 / source.len() as f64,
                    residual_history: history,
                });
            }
        }
        prev = Some(m.mean);
        pose = fit_rigid_2d(&m.src, &m.dst);
    }
    let m = correspondences(
        &source.points,
        &grid,
        &target.points,
        &pose,
        cfg.max_correspondence_dist,
    );
    let enough = m.src.len() >= cfg.min_inliers;
    let converged = enough && prev.is_some_and(|p| (p - m.mean).abs() < cfg.convergence_eps);
    Ok(IcpResult {
        relative_pose: pose,
        mean_residual: if m.src.is_empty() { f64::INFINITY } else { m.mean },
        iterations: cfg.max_iterations,
        converged,
        inlier_fraction: m.src.len() as f64 / source.len() as f64,
        residual_history: history,
    })
}

/// Chains relative poses: `out[0] = identity`, `out[i] = out[i-1] ∘ rel[i-1]`.
pub fn chain_poses(relatives: &[Se2]) -> Vec<Se2> {
    let mut out = Vec::with_capacity(relatives.len() + 1);
    out.push(Se2::identity());
    for r in relatives {
        let last = *out.last().unwrap();
        out.push(last.compose(r));
    }
    out
}

/// Outcome of the incremental ICP baseline.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub poses: Vec<Pose>,
    /// Links `i` (frame i onto i−1) where ICP did not converge.
    pub failed_links: Vec<usize>,
}

/// Registers each frame onto its predecessor and chains the results. A link
/// that fails to converge reuses the previous relative motion.
pub fn incremental_warm_start(dataset: &Dataset, cfg: &IcpConfig) -> Result<WarmStart> {
    if dataset.clouds.is_empty() {
        return Err(Error::InvalidArgument("warm start needs at least one frame".into()));
    }
    let mut rel = Vec::with_capacity(dataset.len().saturating_sub(1));
    let mut failed = Vec::new();
    let mut last = Se2::identity();
    for i in 1..dataset.len() {
        let r = icp_pairwise(&dataset.clouds[i], &dataset.clouds[i - 1], &last, cfg)?;
        if r.converged {
            last = r.relative_pose;
        } else {
            failed.push(i);
        }
        rel.push(last);
    }
    Ok(WarmStart {
        poses: chain_poses(&rel).into_iter().map(Pose::Se2).collect(),
        failed_links: failed,
    })
}
