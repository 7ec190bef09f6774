//! The per-batch training objective and its exact gradient.
//!
//! Each frame's pose is the warm-start pose refined by the L-Net output
//! `(Δx, Δy, Δθ)`, with the rotation taken about the centroid `c` of the
//! warm-started global cloud:
//!
//! ```text
//! θ = θ_w + Δθ
//! t = R(Δθ)·(t_w − c) + c + (Δx, Δy)
//! ```
//!
//! Losses see global points `T·p`; their gradients flow back through the
//! pose to the refinement and from there into the L-Net.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Cloud2, Se2};
use crate::losses::{
    accumulate_pose_grad, chamfer_grad, free_fraction, inconsistency_grad_se2, occupancy_frame_grad,
    rotation_derivative, FreeSpaceKey,
};
use crate::nets::{lnet_backward, lnet_forward, NetParams};
use crate::topology::Batch;

/// Per-frame training data derived once from the scans and warm start.
#[derive(Clone, Debug)]
pub struct Frame {
    /// Training subsample in the sensor frame.
    pub local: Vec<[f64; 2]>,
    pub origin: [f64; 2],
    pub warm: Se2,
    pub centroid: [f64; 2],
    /// Warm-started global subsample, re-centred at `centroid`.
    pub lnet_input: Vec<[f64; 2]>,
}

/// Even-stride subsample of at most `n` points; `n = 0` keeps all.
pub fn subsample(points: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    if n == 0 || points.len() <= n {
        return points.to_vec();
    }
    (0..n).map(|i| points[i * points.len() / n]).collect()
}

pub fn prepare_frames(clouds: &[Cloud2], warm: &[Se2], train_points: usize) -> Result<Vec<Frame>> {
    if clouds.len() != warm.len() {
        return Err(Error::LengthMismatch {
            what: "clouds vs warm-start poses",
            left: clouds.len(),
            right: warm.len(),
        });
    }
    clouds
        .iter()
        .zip(warm)
        .enumerate()
        .map(|(i, (c, w))| {
            if c.is_empty() {
                return Err(Error::EmptyCloud(format!("frame {i}")));
            }
            let local = subsample(&c.points, train_points);
            let global: Vec<[f64; 2]> = local.iter().map(|p| w.apply(*p)).collect();
            let n = global.len() as f64;
            let centroid = [
                global.iter().map(|p| p[0]).sum::<f64>() / n,
                global.iter().map(|p| p[1]).sum::<f64>() / n,
            ];
            let lnet_input = global
                .iter()
                .map(|p| [p[0] - centroid[0], p[1] - centroid[1]])
                .collect();
            Ok(Frame {
                local,
                origin: c.sensor_origin,
                warm: *w,
                centroid,
                lnet_input,
            })
        })
        .collect()
}

/// Applies a refinement to a warm-start pose, rotating about `centroid`.
pub fn refine_pose(warm: &Se2, centroid: [f64; 2], delta: [f64; 3]) -> Se2 {
    let (s, c) = delta[2].sin_cos();
    let v = [warm.x - centroid[0], warm.y - centroid[1]];
    Se2::new(
        c * v[0] - s * v[1] + centroid[0] + delta[0],
        s * v[0] + c * v[1] + centroid[1] + delta[1],
        warm.theta + delta[2],
    )
}

/// `∂L/∂Δ` from `∂L/∂(x, y, θ)`.
pub fn refine_backward(warm: &Se2, centroid: [f64; 2], delta: [f64; 3], g: [f64; 3]) -> [f64; 3] {
    let r = rotation_derivative(delta[2], [warm.x - centroid[0], warm.y - centroid[1]]);
    [g[0], g[1], g[2] + g[0] * r[0] + g[1] * r[1]]
}

/// Effective weight of each term; zero disables it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermWeights {
    pub occupancy: f64,
    pub chamfer: f64,
    pub consistency: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ObjectiveSettings {
    pub weights: TermWeights,
    pub free_per_ray: usize,
    pub skip_low_confidence: bool,
    pub free_key_seed: u64,
    pub free_key_epoch: u64,
}

/// Unweighted terms plus the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Terms {
    pub occupancy: f64,
    pub chamfer: f64,
    pub consistency: f64,
    pub total: f64,
}

impl Terms {
    fn add_scaled(&mut self, o: &Terms, s: f64) {
        self.occupancy += s * o.occupancy;
        self.chamfer += s * o.chamfer;
        self.consistency += s * o.consistency;
        self.total += s * o.total;
    }
}

/// Free-space samples of one frame in its sensor frame.
pub fn local_free_samples(frame: &Frame, frame_index: usize, set: &ObjectiveSettings) -> Vec<[f64; 2]> {
    let key = FreeSpaceKey {
        seed: set.free_key_seed,
        epoch: set.free_key_epoch,
        frame: frame_index as u64,
    };
    let o = frame.origin;
    let mut out = Vec::with_capacity(frame.local.len() * set.free_per_ray);
    for (i, p) in frame.local.iter().enumerate() {
        for d in 0..set.free_per_ray {
            let u = free_fraction(key, i, d);
            out.push([o[0] + u * (p[0] - o[0]), o[1] + u * (p[1] - o[1])]);
        }
    }
    out
}

/// Loss of one batch at explicit member poses (anchor first), with gradients
/// with respect to those poses and the M-Net parameters.
pub struct PoseObjective {
    pub terms: Terms,
    pub d_poses: Vec<[f64; 3]>,
    pub d_mnet: Vec<f64>,
}

fn apply_all(pose: &Se2, pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    pts.iter().map(|p| pose.apply(*p)).collect()
}

pub fn batch_objective_at_poses(
    mnet: &NetParams,
    frames: &[Frame],
    batch: &Batch,
    poses: &[Se2],
    set: &ObjectiveSettings,
) -> Result<PoseObjective> {
    let members = batch.members();
    if poses.len() != members.len() {
        return Err(Error::LengthMismatch {
            what: "batch members vs poses",
            left: members.len(),
            right: poses.len(),
        });
    }
    let w = set.weights;
    let nm = members.len() as f64;

    // occupancy, independent per member
    let per_member: Vec<Result<(f64, [f64; 3], Vec<f64>, Vec<[f64; 2]>)>> = members
        .par_iter()
        .zip(poses)
        .map(|(&f, pose)| {
            let frame = &frames[f];
            let global = apply_all(pose, &frame.local);
            let mut d_phi = vec![0.0; mnet.len()];
            let mut g = [0.0; 3];
            let mut loss = 0.0;
            if w.occupancy != 0.0 {
                let free_local = local_free_samples(frame, f, set);
                let free = apply_all(pose, &free_local);
                let occ = occupancy_frame_grad(mnet, &global, &free, w.occupancy / nm, &mut d_phi)?;
                loss = occ.loss;
                accumulate_pose_grad(pose, &frame.local, &occ.d_occupied, &mut g);
                accumulate_pose_grad(pose, &free_local, &occ.d_free, &mut g);
            }
            Ok((loss, g, d_phi, global))
        })
        .collect();

    let mut terms = Terms::default();
    let mut d_poses = vec![[0.0; 3]; members.len()];
    let mut d_mnet = vec![0.0; mnet.len()];
    let mut globals = Vec::with_capacity(members.len());
    for (m, r) in per_member.into_iter().enumerate() {
        let (loss, g, d_phi, global) = r?;
        terms.occupancy += loss / nm;
        d_poses[m] = g;
        for (a, b) in d_mnet.iter_mut().zip(&d_phi) {
            *a += b;
        }
        globals.push(global);
    }

    // pairs flagged by registration are left out of both pair terms
    let used: Vec<usize> = (0..batch.neighbors.len())
        .filter(|&jm| !(set.skip_low_confidence && batch.low_confidence.get(jm).copied().unwrap_or(false)))
        .collect();
    let ku = used.len() as f64;
    if w.chamfer != 0.0 {
        for &jm in &used {
            let j = batch.neighbors[jm];
            let m = jm + 1;
            let (c, d0, dj) = chamfer_grad(&globals[0], &globals[m])?;
            terms.chamfer += c / ku;
            let s = w.chamfer / ku;
            let d0: Vec<[f64; 2]> = d0.iter().map(|v| [s * v[0], s * v[1]]).collect();
            let dj: Vec<[f64; 2]> = dj.iter().map(|v| [s * v[0], s * v[1]]).collect();
            accumulate_pose_grad(&poses[0], &frames[batch.anchor].local, &d0, &mut d_poses[0]);
            accumulate_pose_grad(&poses[m], &frames[j].local, &dj, &mut d_poses[m]);
        }
    }

    if w.consistency != 0.0 {
        if batch.pairwise.len() != batch.neighbors.len() {
            return Err(Error::MissingPairwise {
                anchor: batch.anchor,
                neighbor: batch.neighbors.get(batch.pairwise.len()).copied().unwrap_or(usize::MAX),
            });
        }
        for &jm in &used {
            let m = jm + 1;
            let (d, gj, gi) =
                inconsistency_grad_se2(&poses[m], &batch.pairwise[jm], &poses[0], &frames[batch.anchor].local);
            terms.consistency += d / ku;
            let s = w.consistency / ku;
            for c in 0..3 {
                d_poses[m][c] += s * gj[c];
                d_poses[0][c] += s * gi[c];
            }
        }
    }

    terms.total = w.occupancy * terms.occupancy + w.chamfer * terms.chamfer + w.consistency * terms.consistency;
    if !terms.total.is_finite() {
        return Err(Error::NonFinite {
            node: format!("batch {} total loss", batch.anchor),
        });
    }
    Ok(PoseObjective { terms, d_poses, d_mnet })
}

/// Batch loss with gradients with respect to both networks.
pub struct NetObjective {
    pub terms: Terms,
    pub d_lnet: Vec<f64>,
    pub d_mnet: Vec<f64>,
}

pub fn batch_objective(
    lnet: &NetParams,
    mnet: &NetParams,
    frames: &[Frame],
    batch: &Batch,
    set: &ObjectiveSettings,
) -> Result<NetObjective> {
    let members = batch.members();
    let caches = members
        .par_iter()
        .map(|&f| lnet_forward(lnet, &frames[f].lnet_input))
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<[f64; 3]> = caches.iter().map(|c| c.refinement()).collect();
    let poses: Vec<Se2> = members
        .iter()
        .zip(&deltas)
        .map(|(&f, d)| refine_pose(&frames[f].warm, frames[f].centroid, *d))
        .collect();
    let po = batch_objective_at_poses(mnet, frames, batch, &poses, set)?;
    let grads: Vec<Vec<f64>> = members
        .par_iter()
        .enumerate()
        .map(|(m, &f)| {
            let mut g = vec![0.0; lnet.len()];
            let fr = &frames[f];
            let dd = refine_backward(&fr.warm, fr.centroid, deltas[m], po.d_poses[m]);
            if dd != [0.0; 3] {
                lnet_backward(lnet, &caches[m], dd, &mut g);
            }
            g
        })
        .collect();
    let mut d_lnet = vec![0.0; lnet.len()];
    for g in &grads {
        for (a, b) in d_lnet.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok(NetObjective {
        terms: po.terms,
        d_lnet,
        d_mnet: po.d_mnet,
    })
}

/// Mean of the batch objectives over `batches`.
pub fn full_objective(
    lnet: &NetParams,
    mnet: &NetParams,
    frames: &[Frame],
    batches: &[Batch],
    set: &ObjectiveSettings,
) -> Result<NetObjective> {
    let mut terms = Terms::default();
    let mut d_lnet = vec![0.0; lnet.len()];
    let mut d_mnet = vec![0.0; mnet.len()];
    let s = 1.0 / batches.len() as f64;
    for b in batches {
        let o = batch_objective(lnet, mnet, frames, b, set)?;
        terms.add_scaled(&o.terms, s);
        for (a, g) in d_lnet.iter_mut().zip(&o.d_lnet) {
            *a += s * g;
        }
        for (a, g) in d_mnet.iter_mut().zip(&o.d_mnet) {
            *a += s * g;
        }
    }
    Ok(NetObjective { terms, d_lnet, d_mnet })
}

/// Refined poses of every frame under the current L-Net.
pub fn current_poses(lnet: &NetParams, frames: &[Frame]) -> Result<Vec<Se2>> {
    frames
        .par_iter()
        .map(|f| {
            let d = lnet_forward(lnet, &f.lnet_input)?.refinement();
            Ok(refine_pose(&f.warm, f.centroid, d))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetShapes;
    use crate::topology::batch_pairwise_from_poses;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn refinement_zero_is_warm_start() {
        let w = Se2::new(1.0, 2.0, 0.3);
        assert_eq!(refine_pose(&w, [5.0, -1.0], [0.0; 3]), w);
    }

    #[test]
    fn refinement_rotates_about_centroid() {
        // a point at the centroid only moves by the translation part
        let w = Se2::new(1.0, 2.0, 0.3);
        let c = [3.0, 4.0];
        let local_c = w.inverse().apply(c);
        let r = refine_pose(&w, c, [0.1, -0.2, 0.7]);
        let moved = r.apply(local_c);
        assert!((moved[0] - 3.1).abs() < 1e-12 && (moved[1] - 3.8).abs() < 1e-12);
    }

    #[test]
    fn refine_backward_matches_finite_differences() {
        let w = Se2::new(1.0, 2.0, 0.3);
        let c = [3.0, 4.0];
        let d0 = [0.1, -0.2, 0.7];
        let g = [0.3, -1.1, 0.4];
        let f = |d: [f64; 3]| {
            let p = refine_pose(&w, c, d);
            g[0] * p.x + g[1] * p.y + g[2] * (w.theta + d[2])
        };
        let a = refine_backward(&w, c, d0, g);
        for i in 0..3 {
            let (mut p, mut m) = (d0, d0);
            p[i] += 1e-6;
            m[i] -= 1e-6;
            assert!(((f(p) - f(m)) / 2e-6 - a[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn subsample_is_even_and_bounded() {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 0.0]).collect();
        assert_eq!(subsample(&pts, 0).len(), 10);
        assert_eq!(subsample(&pts, 20).len(), 10);
        let s = subsample(&pts, 4);
        assert_eq!(s.iter().map(|p| p[0] as usize).collect::<Vec<_>>(), vec![0, 2, 5, 7]);
    }

    #[test]
    fn exact_poses_give_zero_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let poses: Vec<Se2> = (0..4)
            .map(|i| Se2::new(i as f64, 0.5 * i as f64, 0.2 * i as f64))
            .collect();
        let clouds: Vec<Cloud2> = (0..4)
            .map(|_| {
                Cloud2::new(
                    (0..10)
                        .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                        .collect(),
                )
            })
            .collect();
        let frames = prepare_frames(&clouds, &poses, 0).unwrap();
        let batches = crate::topology::temporal_batches(4, 2).unwrap();
        let batches = batch_pairwise_from_poses(&batches, &poses);
        let mnet = NetParams::mnet(&NetShapes::default(), 0).unwrap();
        let set = ObjectiveSettings {
            weights: TermWeights {
                occupancy: 0.0,
                chamfer: 0.0,
                consistency: 1.0,
            },
            free_per_ray: 1,
            skip_low_confidence: true,
            free_key_seed: 0,
            free_key_epoch: 0,
        };
        for b in &batches {
            let p: Vec<Se2> = b.members().iter().map(|&i| poses[i]).collect();
            let o = batch_objective_at_poses(&mnet, &frames, b, &p, &set).unwrap();
            assert!(o.terms.consistency < 1e-9);
        }
    }
}
