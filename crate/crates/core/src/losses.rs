//! Training objectives: occupancy cross entropy with free-space samples,
//! Chamfer distance, pose inconsistency and the weighted total.
//!
//! Each loss comes with a gradient routine used by the training objective.
//! Gradients are returned with respect to the point coordinates the loss sees;
//! the engine chains them back to poses and network parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose, Se2};
use crate::nets::{mnet_backward, mnet_forward, NetParams};
use crate::rng::{keyed, Domain};
use crate::spatial::GridIndex;
use crate::topology::Batch;

pub const BCE_EPS: f64 = 1e-7;
pub const FREE_FRACTION_MIN: f64 = 0.05;
pub const FREE_FRACTION_MAX: f64 = 0.95;

/// Binary cross entropy on a probability clamped to `[ε, 1 − ε]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -y * q.ln() - (1.0 - y) * (1.0 - q).ln()
}

/// `∂bce/∂p`; zero where the clamp is active.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub chamfer: f64,
    pub consistency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            chamfer: 0.1,
            consistency: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.chamfer >= 0.0 && self.chamfer.is_finite())
            || !(self.consistency >= 0.0 && self.consistency.is_finite())
        {
            return Err(Error::InvalidArgument(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Identifies the random stream behind one frame's free-space samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreeSpaceKey {
    pub seed: u64,
    pub epoch: u64,
    pub frame: u64,
}

/// Points drawn on the rays from the sensor origin to each scan endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeSpaceSamples {
    pub frame: usize,
    pub coords: Vec<[f64; 2]>,
    /// Ray fraction of each sample, in the order of `coords`.
    pub fractions: Vec<f64>,
}

/// Fraction along the ray for `(point, draw)`, uniform in (0.05, 0.95).
pub fn free_fraction(key: FreeSpaceKey, point: usize, draw: usize) -> f64 {
    let mut rng = keyed(
        Domain::FreeSpace,
        key.seed,
        key.epoch,
        key.frame,
        ((point as u64) << 16) | draw as u64,
    );
    rng.gen_range(FREE_FRACTION_MIN..FREE_FRACTION_MAX)
}

/// `n_per_ray` samples `o + u·(g − o)` per point `g`, point-major.
pub fn sample_free_space(
    cloud: &[[f64; 2]],
    origin: [f64; 2],
    n_per_ray: usize,
    key: FreeSpaceKey,
) -> FreeSpaceSamples {
    let mut coords = Vec::with_capacity(cloud.len() * n_per_ray);
    let mut fractions = Vec::with_capacity(cloud.len() * n_per_ray);
    for (i, g) in cloud.iter().enumerate() {
        for d in 0..n_per_ray {
            let u = free_fraction(key, i, d);
            coords.push([origin[0] + u * (g[0] - origin[0]), origin[1] + u * (g[1] - origin[1])]);
            fractions.push(u);
        }
    }
    FreeSpaceSamples {
        frame: key.frame as usize,
        coords,
        fractions,
    }
}

fn mean_bce(probs: &[f64], y: f64) -> f64 {
    probs.iter().map(|&p| bce(p, y)).sum::<f64>() / probs.len() as f64
}

/// Mean over frames of (mean occupied BCE + mean free BCE), given samples.
pub fn occupancy_loss_with_samples(mnet: &NetParams, clouds: &[Vec<[f64; 2]>], free: &[Vec<[f64; 2]>]) -> Result<f64> {
    if clouds.is_empty() {
        return Err(Error::InvalidArgument("occupancy loss needs at least one frame".into()));
    }
    if clouds.len() != free.len() {
        return Err(Error::LengthMismatch {
            what: "occupied vs free frames",
            left: clouds.len(),
            right: free.len(),
        });
    }
    let mut total = 0.0;
    for (i, (c, f)) in clouds.iter().zip(free).enumerate() {
        if c.is_empty() || f.is_empty() {
            return Err(Error::EmptyCloud(format!("occupancy frame {i}")));
        }
        total += mean_bce(mnet_forward(mnet, c).output(), 1.0) + mean_bce(mnet_forward(mnet, f).output(), 0.0);
    }
    Ok(total / clouds.len() as f64)
}

/// Occupancy loss over global clouds with fresh free-space samples.
pub fn occupancy_loss(
    mnet: &NetParams,
    clouds: &[Vec<[f64; 2]>],
    origins: &[[f64; 2]],
    n_per_ray: usize,
    seed: u64,
    epoch: u64,
) -> Result<f64> {
    if origins.len() != clouds.len() {
        return Err(Error::LengthMismatch {
            what: "clouds vs origins",
            left: clouds.len(),
            right: origins.len(),
        });
    }
    let free: Vec<Vec<[f64; 2]>> = clouds
        .iter()
        .zip(origins)
        .enumerate()
        .map(|(i, (c, o))| {
            sample_free_space(
                c,
                *o,
                n_per_ray,
                FreeSpaceKey {
                    seed,
                    epoch,
                    frame: i as u64,
                },
            )
            .coords
        })
        .collect();
    occupancy_loss_with_samples(mnet, clouds, &free)
}

/// One frame's occupancy term and its gradients.
pub struct OccupancyGrad {
    pub loss: f64,
    pub d_occupied: Vec<[f64; 2]>,
    pub d_free: Vec<[f64; 2]>,
}

/// `mean bce(m(occ), 1) + mean bce(m(free), 0)`. Gradients are those of
/// `scale` times the loss; `∂/∂φ` is added into `d_phi`.
pub fn occupancy_frame_grad(
    mnet: &NetParams,
    occupied: &[[f64; 2]],
    free: &[[f64; 2]],
    scale: f64,
    d_phi: &mut [f64],
) -> Result<OccupancyGrad> {
    if occupied.is_empty() || free.is_empty() {
        return Err(Error::EmptyCloud("occupancy frame".into()));
    }
    let mut term = |pts: &[[f64; 2]], y: f64| {
        let cache = mnet_forward(mnet, pts);
        let n = pts.len() as f64;
        let probs = cache.output();
        let loss = mean_bce(probs, y);
        let d: Vec<f64> = probs.iter().map(|&p| scale * bce_grad(p, y) / n).collect();
        let dx = mnet_backward(mnet, &cache, &d, d_phi);
        (loss, dx)
    };
    let (lo, d_occupied) = term(occupied, 1.0);
    let (lf, d_free) = term(free, 0.0);
    Ok(OccupancyGrad {
        loss: lo + lf,
        d_occupied,
        d_free,
    })
}

fn one_way(x: &[[f64; 2]], y: &[[f64; 2]], grid: &GridIndex) -> (f64, Vec<usize>, Vec<f64>) {
    let mut sum = 0.0;
    let mut idx = Vec::with_capacity(x.len());
    let mut dist = Vec::with_capacity(x.len());
    for p in x {
        let (j, d) = grid.nearest(*p).expect("nonempty target");
        debug_assert!(j < y.len());
        sum += d;
        idx.push(j);
        dist.push(d);
    }
    (sum / x.len() as f64, idx, dist)
}

/// Symmetric mean nearest-neighbour distance.
pub fn chamfer(x: &[[f64; 2]], y: &[[f64; 2]]) -> Result<f64> {
    Ok(chamfer_grad(x, y)?.0)
}

/// Chamfer distance and its gradients with respect to both point sets.
/// Coincident nearest pairs contribute a zero subgradient.
pub fn chamfer_grad(x: &[[f64; 2]], y: &[[f64; 2]]) -> Result<(f64, Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyCloud("chamfer input".into()));
    }
    let gy = GridIndex::new(y, GridIndex::auto_cell(y));
    let gx = GridIndex::new(x, GridIndex::auto_cell(x));
    let (a, ia, da) = one_way(x, y, &gy);
    let (b, ib, db) = one_way(y, x, &gx);
    let mut dx = vec![[0.0; 2]; x.len()];
    let mut dy = vec![[0.0; 2]; y.len()];
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let pair = |p: [f64; 2], q: [f64; 2], d: f64, w: f64| -> [f64; 2] {
        if d == 0.0 {
            return [0.0; 2];
        }
        [w * (p[0] - q[0]) / d, w * (p[1] - q[1]) / d]
    };
    for (i, (&j, &d)) in ia.iter().zip(&da).enumerate() {
        let g = pair(x[i], y[j], d, 1.0 / nx);
        dx[i][0] += g[0];
        dx[i][1] += g[1];
        dy[j][0] -= g[0];
        dy[j][1] -= g[1];
    }
    for (j, (&i, &d)) in ib.iter().zip(&db).enumerate() {
        let g = pair(y[j], x[i], d, 1.0 / ny);
        dy[j][0] += g[0];
        dy[j][1] += g[1];
        dx[i][0] -= g[0];
        dx[i][1] -= g[1];
    }
    Ok((a + b, dx, dy))
}

/// Mean distance between `T·s` and `T′·s` over the cloud.
pub fn pose_inconsistency<const D: usize>(t: &Pose, t2: &Pose, s: &PointCloud<D>) -> Result<f64> {
    for p in [t, t2] {
        if p.dimension().spatial() != D {
            return Err(Error::DimensionMismatch {
                expected: D,
                got: p.dimension().spatial(),
            });
        }
    }
    if s.is_empty() {
        return Err(Error::EmptyCloud("pose_inconsistency input".into()));
    }
    let mut a = [0.0; D];
    let mut b = [0.0; D];
    let mut sum = 0.0;
    for p in &s.points {
        t.apply_slice(p, &mut a);
        t2.apply_slice(p, &mut b);
        sum += a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    }
    Ok(sum / s.len() as f64)
}

/// `∂(R(θ)p + t)/∂θ = R′(θ)p`.
#[inline]
pub fn rotation_derivative(theta: f64, p: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [-s * p[0] - c * p[1], c * p[0] - s * p[1]]
}

/// Adds the pose gradient implied by `∂L/∂(T·p)` for each point.
pub fn accumulate_pose_grad(pose: &Se2, local: &[[f64; 2]], d_global: &[[f64; 2]], out: &mut [f64; 3]) {
    let (s, c) = pose.theta.sin_cos();
    for (p, g) in local.iter().zip(d_global) {
        out[0] += g[0];
        out[1] += g[1];
        let r = [-s * p[0] - c * p[1], c * p[0] - s * p[1]];
        out[2] += g[0] * r[0] + g[1] * r[1];
    }
}

/// `d(T_j ∘ P, T_i, S)` for planar poses, with gradients with respect to
/// `(x, y, θ)` of `T_j` and of `T_i`.
pub fn inconsistency_grad_se2(tj: &Se2, pairwise: &Se2, ti: &Se2, s: &[[f64; 2]]) -> (f64, [f64; 3], [f64; 3]) {
    let via: Vec<[f64; 2]> = s.iter().map(|p| pairwise.apply(*p)).collect();
    let n = s.len() as f64;
    let mut sum = 0.0;
    let mut dj_pts = Vec::with_capacity(s.len());
    let mut di_pts = Vec::with_capacity(s.len());
    for (q, p) in via.iter().zip(s) {
        let a = tj.apply(*q);
        let b = ti.apply(*p);
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        sum += d;
        let u = if d > 0.0 {
            [(a[0] - b[0]) / (d * n), (a[1] - b[1]) / (d * n)]
        } else {
            [0.0; 2]
        };
        dj_pts.push(u);
        di_pts.push([-u[0], -u[1]]);
    }
    let mut gj = [0.0; 3];
    let mut gi = [0.0; 3];
    accumulate_pose_grad(tj, &via, &dj_pts, &mut gj);
    accumulate_pose_grad(ti, s, &di_pts, &mut gi);
    (sum / n, gj, gi)
}

fn check_pairwise(b: &Batch) -> Result<()> {
    if b.pairwise.len() != b.neighbors.len() {
        let missing = b.neighbors.get(b.pairwise.len()).copied().unwrap_or(usize::MAX);
        return Err(Error::MissingPairwise {
            anchor: b.anchor,
            neighbor: missing,
        });
    }
    Ok(())
}

/// Per-anchor mean over neighbours of `d(T_j ∘ T_j^i, T_i, S_i)`, averaged
/// over batches.
pub fn consistency_loss(batches: &[Batch], poses: &[Se2], clouds: &[Vec<[f64; 2]>]) -> Result<f64> {
    if batches.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for b in batches {
        check_pairwise(b)?;
        total += batch_consistency(b, poses, &clouds[b.anchor]);
    }
    Ok(total / batches.len() as f64)
}

/// One batch's mean inconsistency over its neighbours.
pub fn batch_consistency(b: &Batch, poses: &[Se2], anchor_cloud: &[[f64; 2]]) -> f64 {
    let ti = poses[b.anchor];
    let mut sum = 0.0;
    for (&j, p) in b.neighbors.iter().zip(&b.pairwise) {
        let via = poses[j].compose(p);
        let mut s = 0.0;
        for q in anchor_cloud {
            let a = via.apply(*q);
            let c = ti.apply(*q);
            s += (a[0] - c[0]).hypot(a[1] - c[1]);
        }
        sum += s / anchor_cloud.len() as f64;
    }
    sum / b.neighbors.len() as f64
}

/// Weighted objective; weights multiply only the auxiliary terms.
pub fn total_loss(occupancy: f64, chamfer: f64, consistency: f64, w: &LossWeights) -> f64 {
    occupancy + w.chamfer * chamfer + w.consistency * consistency
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetShapes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn rand_pts(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<[f64; 2]> {
        (0..n).map(|_| [rng.gen_range(-s..s), rng.gen_range(-s..s)]).collect()
    }

    fn constant_mnet(logit: f64) -> NetParams {
        let mut m = NetParams::mnet(&NetShapes::default(), 0).unwrap();
        m.values.iter_mut().for_each(|v| *v = 0.0);
        *m.values.last_mut().unwrap() = logit;
        m
    }

    #[test]
    fn bce_examples() {
        assert!(bce(1.0, 1.0) < 1e-6);
        assert!((bce(0.5, 0.0) - LN_2).abs() < 1e-12);
        assert!((bce(0.5, 1.0) - LN_2).abs() < 1e-12);
        let v = bce(0.0, 1.0);
        assert!((v - 16.118).abs() < 1e-3 && v.is_finite());
        assert_eq!(bce_grad(0.0, 1.0), 0.0);
    }

    #[test]
    fn free_space_samples() {
        let cloud = vec![[3.0, 1.0], [-2.0, 4.0], [0.5, -0.5]];
        let o = [1.0, 1.0];
        let key = FreeSpaceKey {
            seed: 5,
            epoch: 2,
            frame: 9,
        };
        let s = sample_free_space(&cloud, o, 2, key);
        assert_eq!(s.coords.len(), 6);
        for (n, c) in s.coords.iter().enumerate() {
            let g = cloud[n / 2];
            let u = s.fractions[n];
            assert!(u > 0.0 && u < 1.0);
            // independent recomputation from the keyed stream
            let mut rng = keyed(Domain::FreeSpace, 5, 2, 9, (((n / 2) as u64) << 16) | (n % 2) as u64);
            let w: f64 = rng.gen_range(0.05..0.95);
            assert_eq!(*c, [o[0] + w * (g[0] - o[0]), o[1] + w * (g[1] - o[1])]);
            // collinear with origin and endpoint
            let cross = (c[0] - o[0]) * (g[1] - o[1]) - (c[1] - o[1]) * (g[0] - o[0]);
            assert!(cross.abs() < 1e-12);
        }
        assert_eq!(sample_free_space(&cloud, o, 2, key), s);
    }

    #[test]
    fn occupancy_constant_half_is_two_ln2() {
        let m = constant_mnet(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clouds = vec![rand_pts(&mut rng, 17, 5.0), rand_pts(&mut rng, 40, 9.0)];
        let l = occupancy_loss(&m, &clouds, &[[0.0, 0.0], [1.0, -2.0]], 2, 1, 0).unwrap();
        assert!((l - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn occupancy_perfect_classifier_is_near_zero() {
        // occupied points lie on |x| = 10, free samples strictly inside
        let spec_shapes = NetShapes {
            mnet: vec![2, 2, 1],
            ..NetShapes::default()
        };
        let mut m = NetParams::mnet(&spec_shapes, 0).unwrap();
        // h0 = relu(x), h1 = relu(−x); logit = 1e3·(h0 + h1) − 9.5e3
        m.values
            .copy_from_slice(&[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1e3, 1e3, -9.5e3]);
        let clouds = vec![vec![[10.0, 1.0], [-10.0, 3.0]]];
        let l = occupancy_loss(&m, &clouds, &[[0.0, 0.0]], 2, 0, 0).unwrap();
        assert!(l <= 2.0 * bce(1.0 - BCE_EPS, 1.0) + 1e-12, "{l}");
    }

    #[test]
    fn occupancy_matches_hand_loop() {
        let m = NetParams::mnet(
            &NetShapes {
                mnet: vec![2, 4, 4, 1],
                ..NetShapes::default()
            },
            11,
        )
        .unwrap();
        let clouds = vec![
            vec![[1.0, 0.0], [0.0, 2.0], [-1.0, -1.0]],
            vec![[3.0, 3.0], [2.0, -1.0], [0.5, 0.5]],
        ];
        let origins = [[0.0, 0.0], [1.0, 1.0]];
        let got = occupancy_loss(&m, &clouds, &origins, 2, 4, 1).unwrap();
        let mut want = 0.0;
        for i in 0..2 {
            let mut occ = 0.0;
            let mut free = 0.0;
            for (n, g) in clouds[i].iter().enumerate() {
                let p = mnet_forward(&m, &[*g]).output()[0];
                occ += -(p.clamp(BCE_EPS, 1.0 - BCE_EPS)).ln();
                for d in 0..2 {
                    let key = FreeSpaceKey {
                        seed: 4,
                        epoch: 1,
                        frame: i as u64,
                    };
                    let u = free_fraction(key, n, d);
                    let o = origins[i];
                    let f = [o[0] + u * (g[0] - o[0]), o[1] + u * (g[1] - o[1])];
                    let q = mnet_forward(&m, &[f]).output()[0];
                    free += -(1.0 - q.clamp(BCE_EPS, 1.0 - BCE_EPS)).ln();
                }
            }
            want += occ / 3.0 + free / 6.0;
        }
        want /= 2.0;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    fn chamfer_brute(x: &[[f64; 2]], y: &[[f64; 2]]) -> f64 {
        let one = |a: &[[f64; 2]], b: &[[f64; 2]]| {
            a.iter()
                .map(|p| {
                    b.iter()
                        .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / a.len() as f64
        };
        one(x, y) + one(y, x)
    }

    #[test]
    fn chamfer_examples() {
        let x = vec![[0.0, 0.0], [1.0, 2.0]];
        assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
        let d = chamfer(&[[1.0, 1.0]], &[[4.0, 5.0]]).unwrap();
        assert!((d - 10.0).abs() < 1e-12);
        assert!(chamfer(&[], &x).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = rand_pts(&mut rng, 50, 10.0);
        let b = rand_pts(&mut rng, 50, 10.0);
        assert!((chamfer(&a, &b).unwrap() - chamfer_brute(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn chamfer_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = rand_pts(&mut rng, 12, 3.0);
        let b = rand_pts(&mut rng, 9, 3.0);
        let (_, da, db) = chamfer_grad(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..a.len() {
            for d in 0..2 {
                let mut p = a.clone();
                let mut m = a.clone();
                p[i][d] += h;
                m[i][d] -= h;
                let n = (chamfer_brute(&p, &b) - chamfer_brute(&m, &b)) / (2.0 * h);
                assert!((n - da[i][d]).abs() < 1e-6);
            }
        }
        for j in 0..b.len() {
            let mut p = b.clone();
            let mut m = b.clone();
            p[j][0] += h;
            m[j][0] -= h;
            let n = (chamfer_brute(&a, &p) - chamfer_brute(&a, &m)) / (2.0 * h);
            assert!((n - db[j][0]).abs() < 1e-6);
        }
    }

    #[test]
    fn inconsistency_examples() {
        let s = PointCloud::new(vec![[1.0, 0.0], [0.0, 3.0], [-2.0, 1.0]]);
        let t = Pose::Se2(Se2::new(1.0, 2.0, 0.4));
        assert_eq!(pose_inconsistency(&t, &t, &s).unwrap(), 0.0);
        let shifted = Pose::Se2(Se2::new(1.3, 1.6, 0.4));
        assert!((pose_inconsistency(&t, &shifted, &s).unwrap() - 0.5).abs() < 1e-12);
        let rot = Se2::new(1.0, 2.0, 0.9);
        let want: f64 = s
            .points
            .iter()
            .map(|p| {
                let a = Se2::new(1.0, 2.0, 0.4).apply(*p);
                let b = rot.apply(*p);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .sum::<f64>()
            / 3.0;
        assert!((pose_inconsistency(&t, &Pose::Se2(rot), &s).unwrap() - want).abs() < 1e-12);
        let s3 = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
        assert!(pose_inconsistency(&t, &t, &s3).is_err());
    }

    fn random_problem(rng: &mut ChaCha8Rng, k: usize, nb: usize) -> (Vec<Batch>, Vec<Se2>, Vec<Vec<[f64; 2]>>) {
        let poses: Vec<Se2> = (0..k)
            .map(|_| {
                Se2::new(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-3.0..3.0),
                )
            })
            .collect();
        let clouds: Vec<Vec<[f64; 2]>> = (0..k).map(|_| rand_pts(rng, 6, 4.0)).collect();
        let batches = (0..k)
            .map(|i| {
                let neighbors: Vec<usize> = (1..=nb).map(|d| (i + d) % k).collect();
                let pairwise = neighbors
                    .iter()
                    .map(|_| {
                        Se2::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect();
                Batch {
                    anchor: i,
                    neighbors,
                    pairwise,
                    low_confidence: vec![false; nb],
                }
            })
            .collect();
        (batches, poses, clouds)
    }

    #[test]
    fn consistency_matches_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (batches, poses, clouds) = random_problem(&mut rng, 4, 2);
            let got = consistency_loss(&batches, &poses, &clouds).unwrap();
            let mut want = 0.0;
            for b in &batches {
                for (&j, p) in b.neighbors.iter().zip(&b.pairwise) {
                    let mut s = 0.0;
                    for q in &clouds[b.anchor] {
                        let a = poses[j].apply(p.apply(*q));
                        let c = poses[b.anchor].apply(*q);
                        s += ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt();
                    }
                    want += s / clouds[b.anchor].len() as f64;
                }
            }
            want /= 4.0 * 2.0;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn consistency_zero_when_pairwise_from_poses_and_anchor_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (batches, poses, clouds) = random_problem(&mut rng, 4, 1);
        let exact = crate::topology::batch_pairwise_from_poses(&batches, &poses);
        assert!(consistency_loss(&exact, &poses, &clouds).unwrap() < 1e-9);
        // frame 0 is nobody's neighbour, so moving it only affects its own batch
        let star: Vec<Batch> = (0..4)
            .map(|i| Batch {
                anchor: i,
                neighbors: vec![if i == 1 { 2 } else { 1 }],
                pairwise: Vec::new(),
                low_confidence: Vec::new(),
            })
            .collect();
        let star = crate::topology::batch_pairwise_from_poses(&star, &poses);
        let mut moved = poses.clone();
        moved[0].x += 0.3;
        moved[0].y -= 0.4;
        let l = consistency_loss(&star, &moved, &clouds).unwrap();
        assert!((l - 0.5 / 4.0).abs() < 1e-12, "{l}");
        let mut missing = exact.clone();
        missing[1].pairwise.pop();
        assert!(matches!(
            consistency_loss(&missing, &poses, &clouds),
            Err(Error::MissingPairwise { anchor: 1, .. })
        ));
    }

    #[test]
    fn inconsistency_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = rand_pts(&mut rng, 7, 3.0);
        let tj = Se2::new(0.3, -0.2, 0.5);
        let p = Se2::new(0.1, 0.4, -0.2);
        let ti = Se2::new(0.5, 0.1, 0.1);
        let (_, gj, gi) = inconsistency_grad_se2(&tj, &p, &ti, &s);
        let f = |a: [f64; 3], b: [f64; 3]| {
            inconsistency_grad_se2(
                &Se2 {
                    x: a[0],
                    y: a[1],
                    theta: a[2],
                },
                &p,
                &Se2 {
                    x: b[0],
                    y: b[1],
                    theta: b[2],
                },
                &s,
            )
            .0
        };
        let (a0, b0) = ([tj.x, tj.y, tj.theta], [ti.x, ti.y, ti.theta]);
        let h = 1e-6;
        for d in 0..3 {
            let (mut ap, mut am) = (a0, a0);
            ap[d] += h;
            am[d] -= h;
            assert!(((f(ap, b0) - f(am, b0)) / (2.0 * h) - gj[d]).abs() < 1e-7);
            let (mut bp, mut bm) = (b0, b0);
            bp[d] += h;
            bm[d] -= h;
            assert!(((f(a0, bp) - f(a0, bm)) / (2.0 * h) - gi[d]).abs() < 1e-7);
        }
    }

    #[test]
    fn total_loss_linearity() {
        let w0 = LossWeights {
            chamfer: 0.0,
            consistency: 0.0,
        };
        assert_eq!(total_loss(1.25, 3.0, 4.0, &w0), 1.25);
        let w = LossWeights::default();
        let w2 = LossWeights { consistency: 2.0, ..w };
        let t = total_loss(1.0, 2.0, 3.0, &w);
        assert!((total_loss(1.0, 2.0, 3.0, &w2) - t - 3.0).abs() < 1e-12);
        assert!((t - (1.0 + 0.1 * 2.0 + 3.0)).abs() < 1e-12);
        assert!(LossWeights {
            chamfer: -1.0,
            consistency: 0.0
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn chamfer_symmetric_nonnegative(
            a in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..30),
            b in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..30),
        ) {
            let a: Vec<[f64; 2]> = a.into_iter().map(|(x, y)| [x, y]).collect();
            let b: Vec<[f64; 2]> = b.into_iter().map(|(x, y)| [x, y]).collect();
            let ab = chamfer(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - chamfer(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((ab - chamfer_brute(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn consistency_invariant_under_global_rigid_motion(
            seed in 0u64..1000, gx in -5.0..5.0f64, gy in -5.0..5.0f64, gt in -3.0..3.0f64,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (batches, poses, clouds) = random_problem(&mut rng, 4, 2);
            let g = Se2::new(gx, gy, gt);
            let moved: Vec<Se2> = poses.iter().map(|p| g.compose(p)).collect();
            let a = consistency_loss(&batches, &poses, &clouds).unwrap();
            let b = consistency_loss(&batches, &moved, &clouds).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn bce_bounded(p in 0.0..=1.0f64, y in prop::bool::ANY) {
            let v = bce(p, if y { 1.0 } else { 0.0 });
            prop_assert!(v >= 0.0 && v <= -BCE_EPS.ln() + 1e-12);
        }
    }
}
