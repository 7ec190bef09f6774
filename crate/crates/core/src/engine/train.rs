//! Training loop, per-epoch bookkeeping, checkpoints and resume.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::config::{TopologyPoses, TrainConfig};
use super::eval::ate;
use super::objective::{batch_objective, current_poses, prepare_frames, Frame, ObjectiveSettings, TermWeights, Terms};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Se2};
use crate::nets::{adam_step, Checkpoint, NetParams, OptimizerState};
use crate::register::IcpConfig;
use crate::rng::{keyed, Domain};
use crate::sim2d::Dataset;
use crate::topology::{
    batch_pairwise_transforms, build_topology, keep_verified, organize_batches, temporal_batches, Batch, TopologySource,
};

/// Mean per-batch loss terms over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub terms: Terms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub lnet: NetParams,
    pub mnet: NetParams,
    pub opt_lnet: OptimizerState,
    pub opt_mnet: OptimizerState,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    /// `(epoch, t_ate, r_ate)`, starting with epoch 0 (the warm start).
    pub ate_curve: Vec<(usize, f64, f64)>,
    pub seed: u64,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let lnet = NetParams::lnet(&cfg.shapes, cfg.seed, cfg.zero_init_refinement)?;
        let mnet = NetParams::mnet(&cfg.shapes, cfg.seed)?;
        let mut opt_lnet = OptimizerState::new(lnet.len(), cfg.lr);
        let mut opt_mnet = OptimizerState::new(mnet.len(), cfg.lr);
        for o in [&mut opt_lnet, &mut opt_mnet] {
            o.beta1 = cfg.beta1;
            o.beta2 = cfg.beta2;
            o.eps = cfg.adam_eps;
        }
        Ok(TrainState {
            lnet,
            mnet,
            opt_lnet,
            opt_mnet,
            epoch: 0,
            history: Vec::new(),
            ate_curve: Vec::new(),
            seed: cfg.seed,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hist: Vec<f64> = self
            .history
            .iter()
            .flat_map(|r| {
                [
                    r.epoch as f64,
                    r.terms.occupancy,
                    r.terms.chamfer,
                    r.terms.consistency,
                    r.terms.total,
                ]
            })
            .collect();
        let curve: Vec<f64> = self.ate_curve.iter().flat_map(|&(e, t, r)| [e as f64, t, r]).collect();
        let opt = |o: &OptimizerState| vec![o.t as f64, o.lr, o.beta1, o.beta2, o.eps];
        Checkpoint {
            meta: vec![
                (
                    "spec".into(),
                    format!("{};{}", self.lnet.encode_spec(), self.mnet.encode_spec()),
                ),
                ("step".into(), self.opt_lnet.t.to_string()),
                ("seed".into(), self.seed.to_string()),
                ("epoch".into(), self.epoch.to_string()),
            ],
            arrays: vec![
                ("lnet".into(), self.lnet.values.clone()),
                ("mnet".into(), self.mnet.values.clone()),
                ("lnet_m".into(), self.opt_lnet.m.clone()),
                ("lnet_v".into(), self.opt_lnet.v.clone()),
                ("mnet_m".into(), self.opt_mnet.m.clone()),
                ("mnet_v".into(), self.opt_mnet.v.clone()),
                ("lnet_opt".into(), opt(&self.opt_lnet)),
                ("mnet_opt".into(), opt(&self.opt_mnet)),
                ("history".into(), hist),
                ("ate_curve".into(), curve),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |k: &str| {
            ck.meta_value(k)
                .ok_or_else(|| Error::Checkpoint(format!("missing meta `{k}`")))
        };
        let spec = meta("spec")?;
        let (ls, ms) = spec
            .split_once(';')
            .ok_or_else(|| Error::Checkpoint("bad spec".into()))?;
        let lnet = NetParams::decode_spec(ls, ck.array("lnet")?.to_vec())?;
        let mnet = NetParams::decode_spec(ms, ck.array("mnet")?.to_vec())?;
        let opt = |p: &str, n: usize| -> Result<OptimizerState> {
            let h = ck.array(&format!("{p}_opt"))?;
            let m = ck.array(&format!("{p}_m"))?.to_vec();
            let v = ck.array(&format!("{p}_v"))?.to_vec();
            if h.len() != 5 || m.len() != n || v.len() != n {
                return Err(Error::Checkpoint(format!("bad optimizer state for {p}")));
            }
            Ok(OptimizerState {
                m,
                v,
                t: h[0] as u64,
                lr: h[1],
                beta1: h[2],
                beta2: h[3],
                eps: h[4],
            })
        };
        let opt_lnet = opt("lnet", lnet.len())?;
        let opt_mnet = opt("mnet", mnet.len())?;
        let hist = ck.array("history")?;
        let curve = ck.array("ate_curve")?;
        if hist.len() % 5 != 0 || curve.len() % 3 != 0 {
            return Err(Error::Checkpoint("bad history arrays".into()));
        }
        let parse_u = |k: &str| -> Result<u64> {
            meta(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad meta `{k}`")))
        };
        Ok(TrainState {
            lnet,
            mnet,
            opt_lnet,
            opt_mnet,
            epoch: parse_u("epoch")? as usize,
            history: hist
                .chunks_exact(5)
                .map(|c| EpochRecord {
                    epoch: c[0] as usize,
                    terms: Terms {
                        occupancy: c[1],
                        chamfer: c[2],
                        consistency: c[3],
                        total: c[4],
                    },
                })
                .collect(),
            ate_curve: curve.chunks_exact(3).map(|c| (c[0] as usize, c[1], c[2])).collect(),
            seed: parse_u("seed")?,
        })
    }
}

/// Everything fixed for the duration of a run.
pub struct TrainProblem {
    pub frames: Vec<Frame>,
    pub batches: Vec<Batch>,
    pub gt: Option<Vec<Pose>>,
}

/// Builds the batches for `cfg`: spatial from the topology graph, or temporal
/// windows when batch organization is off. Pairwise transforms come from ICP
/// initialized with the warm start.
pub fn prepare_batches(ds: &Dataset, warm: &[Se2], cfg: &TrainConfig, icp: &IcpConfig) -> Result<Vec<Batch>> {
    let n = ds.len();
    if !cfg.use_batch_org {
        return batch_pairwise_transforms(&ds.clouds, &temporal_batches(n, cfg.k)?, warm, icp);
    }
    let topo_cfg = crate::topology::TopologyConfig {
        k: cfg.k,
        ..cfg.topology
    };
    let poses = match (topo_cfg.source, cfg.topology_poses) {
        (TopologySource::OracleRadius, TopologyPoses::Gt) => ds.gt_se2()?,
        _ => warm.to_vec(),
    };
    let g = build_topology(&ds.clouds, &poses, &topo_cfg)?;
    let ranked = cfg.verify_candidates.max(cfg.k).min(n - 1);
    let batches = batch_pairwise_transforms(&ds.clouds, &organize_batches(&g, ranked)?, warm, icp)?;
    Ok(keep_verified(batches, cfg.k))
}

impl TrainProblem {
    pub fn new(ds: &Dataset, warm: &[Se2], batches: Vec<Batch>, cfg: &TrainConfig) -> Result<Self> {
        ds.validate()?;
        if batches.is_empty() {
            return Err(Error::InvalidArgument("no batches".into()));
        }
        Ok(TrainProblem {
            frames: prepare_frames(&ds.clouds, warm, cfg.train_points)?,
            batches,
            gt: Some(ds.gt_poses.clone()),
        })
    }
}

fn settings(cfg: &TrainConfig, epoch: usize) -> ObjectiveSettings {
    ObjectiveSettings {
        weights: TermWeights {
            occupancy: 1.0,
            chamfer: if cfg.use_chamfer { cfg.weights.chamfer } else { 0.0 },
            consistency: if cfg.use_consistency {
                cfg.weights.consistency
            } else {
                0.0
            },
        },
        free_per_ray: cfg.free_per_ray,
        skip_low_confidence: cfg.skip_low_confidence,
        free_key_seed: cfg.seed,
        free_key_epoch: if cfg.resample_free { epoch as u64 } else { 0 },
    }
}

/// Batch visiting order for `epoch` (1-based).
pub fn batch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed(Domain::Shuffle, seed, epoch as u64, 0, 0));
    order
}

/// Step size for `epoch` (1-based): cosine from `lr` down to
/// `lr * lr_final_fraction` at the last epoch.
pub fn epoch_lr(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.lr;
    }
    let s = (epoch.saturating_sub(1) as f64 / (cfg.epochs - 1) as f64).min(1.0);
    let f = cfg.lr_final_fraction;
    cfg.lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * s).cos()))
}

/// One pass over all batches with one optimizer step per batch.
pub fn train_epoch(state: &mut TrainState, problem: &TrainProblem, cfg: &TrainConfig) -> Result<EpochRecord> {
    let epoch = state.epoch + 1;
    let set = settings(cfg, epoch);
    let lr = epoch_lr(cfg, epoch);
    state.opt_lnet.lr = lr;
    state.opt_mnet.lr = lr;
    let mut sum = Terms::default();
    for &b in &batch_order(problem.batches.len(), cfg.seed, epoch) {
        let batch = &problem.batches[b];
        let o = batch_objective(&state.lnet, &state.mnet, &problem.frames, batch, &set).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFiniteLoss {
                batch: b,
                anchor: batch.anchor,
            },
            e => e,
        })?;
        if !o.d_lnet.iter().chain(&o.d_mnet).all(|g| g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                batch: b,
                anchor: batch.anchor,
            });
        }
        sum.occupancy += o.terms.occupancy;
        sum.chamfer += o.terms.chamfer;
        sum.consistency += o.terms.consistency;
        sum.total += o.terms.total;
        adam_step(&mut state.lnet.values, &o.d_lnet, &mut state.opt_lnet)?;
        adam_step(&mut state.mnet.values, &o.d_mnet, &mut state.opt_mnet)?;
    }
    let n = problem.batches.len() as f64;
    let rec = EpochRecord {
        epoch,
        terms: Terms {
            occupancy: sum.occupancy / n,
            chamfer: sum.chamfer / n,
            consistency: sum.consistency / n,
            total: sum.total / n,
        },
    };
    state.epoch = epoch;
    state.history.push(rec);
    if let Some(gt) = &problem.gt {
        let r = ate(&to_poses(&current_poses(&state.lnet, &problem.frames)?), gt)?;
        state.ate_curve.push((epoch, r.t_ate, r.r_ate));
    }
    Ok(rec)
}

pub fn to_poses(p: &[Se2]) -> Vec<Pose> {
    p.iter().copied().map(Pose::Se2).collect()
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("ckpt_{epoch}.bin"))
}

/// Worker pool sized by `MAPFORGE_THREADS` (default 1).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let n = std::env::var("MAPFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub poses: Vec<Se2>,
}

/// Runs epochs until `cfg.epochs`, starting from `resume` if given.
/// Checkpoints go to `ckpt_dir` every `cfg.checkpoint_every` epochs.
pub fn run_training(
    problem: &TrainProblem,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    ckpt_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = worker_pool()?;
    pool.install(|| {
        let mut state = match resume {
            Some(s) => s,
            None => TrainState::new(cfg)?,
        };
        if state.ate_curve.is_empty() {
            if let Some(gt) = &problem.gt {
                let r = ate(&to_poses(&current_poses(&state.lnet, &problem.frames)?), gt)?;
                state.ate_curve.push((0, r.t_ate, r.r_ate));
            }
        }
        while state.epoch < cfg.epochs {
            train_epoch(&mut state, problem, cfg)?;
            if let Some(dir) = ckpt_dir {
                if cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0 {
                    state.to_checkpoint().save(&checkpoint_path(dir, state.epoch))?;
                }
            }
        }
        let poses = current_poses(&state.lnet, &problem.frames)?;
        Ok(TrainOutcome { state, poses })
    })
}

/// First epoch whose T-ATE is at most `fraction` of the warm-start T-ATE;
/// `None` if never reached.
pub fn epochs_to_threshold(curve: &[(usize, f64, f64)], fraction: f64) -> Option<usize> {
    let base = curve.first()?.1;
    curve
        .iter()
        .skip(1)
        .find(|(_, t, _)| *t <= fraction * base)
        .map(|(e, _, _)| *e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_epochs() {
        let c = vec![(0, 1.0, 0.0), (1, 0.9, 0.0), (2, 0.7, 0.0), (3, 0.5, 0.0)];
        assert_eq!(epochs_to_threshold(&c, 0.8), Some(2));
        assert_eq!(epochs_to_threshold(&c, 0.1), None);
    }

    #[test]
    fn batch_order_is_a_seeded_permutation() {
        let a = batch_order(50, 3, 1);
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_eq!(a, batch_order(50, 3, 1));
        assert_ne!(a, batch_order(50, 3, 2));
    }
}
