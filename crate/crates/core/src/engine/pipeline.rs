//! Command-line stages and the ablation grid.
//!
//! Every stage reads the dataset directory and writes its results, plus a
//! verbatim copy of the configuration, to the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{RunConfig, TrainConfig};
use super::eval::{ate, AteReport};
use super::render::{render_map, write_svg};
use super::train::{
    checkpoint_path, epochs_to_threshold, prepare_batches, run_training, to_poses, EpochRecord, TrainOutcome,
    TrainProblem, TrainState,
};
use crate::error::{Error, Result};
use crate::geometry::{read_poses_csv, write_poses_csv, Pose, Se2};
use crate::nets::Checkpoint;
use crate::register::{incremental_warm_start, IcpConfig};
use crate::sim2d::{read_dataset, simulate, write_dataset, Dataset};
use crate::topology::{build_topology, write_batches_csv, write_pairwise_csv, write_topology_csv, TopologySource};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Init,
    Topology,
    Train,
    Eval,
    Plot,
    Ablate,
}

#[derive(Clone, Debug)]
pub struct Args {
    pub command: Command,
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

/// Rows of the ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    DmOnly,
    DmBatch,
    DmConsistency,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::DmOnly, Variant::DmBatch, Variant::DmConsistency, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DmOnly => "DM-only",
            Variant::DmBatch => "DM+batch",
            Variant::DmConsistency => "DM+consistency",
            Variant::Full => "full",
        }
    }

    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let (batch_org, consistency) = match self {
            Variant::DmOnly => (false, false),
            Variant::DmBatch => (true, false),
            Variant::DmConsistency => (false, true),
            Variant::Full => (true, true),
        };
        TrainConfig {
            use_batch_org: batch_org,
            use_consistency: consistency,
            ..cfg.clone()
        }
    }
}

/// The dataset's initial poses, or an incremental ICP warm start if it has none.
pub fn warm_start(ds: &Dataset, icp: &IcpConfig) -> Result<Vec<Se2>> {
    match &ds.init_poses {
        Some(p) => p.iter().map(Pose::as_se2).collect(),
        None => incremental_warm_start(ds, icp)?
            .poses
            .iter()
            .map(Pose::as_se2)
            .collect(),
    }
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub outcome: TrainOutcome,
    pub warm: AteReport,
    pub trained: AteReport,
    pub epochs_to_threshold: Option<usize>,
}

/// Batch preparation plus training from `warm` under `cfg`.
pub fn train_run(
    ds: &Dataset,
    warm: &[Se2],
    cfg: &TrainConfig,
    icp: &IcpConfig,
    resume: Option<TrainState>,
    ckpt_dir: Option<&Path>,
) -> Result<RunReport> {
    cfg.validate()?;
    let batches = prepare_batches(ds, warm, cfg, icp)?;
    let problem = TrainProblem::new(ds, warm, batches, cfg)?;
    let outcome = run_training(&problem, cfg, resume, ckpt_dir)?;
    let warm_ate = ate(&to_poses(warm), &ds.gt_poses)?;
    let trained = ate(&to_poses(&outcome.poses), &ds.gt_poses)?;
    let epochs = epochs_to_threshold(&outcome.state.ate_curve, cfg.threshold_fraction);
    Ok(RunReport {
        outcome,
        warm: warm_ate,
        trained,
        epochs_to_threshold: epochs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub t_ate: f64,
    pub r_ate: f64,
    pub epochs_to_threshold: Option<usize>,
}

/// Runs every variant for every seed on one dataset.
pub fn run_ablation(ds: &Dataset, warm: &[Se2], cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for v in Variant::ALL {
        for &seed in seeds {
            let tc = TrainConfig {
                seed,
                ..v.apply(&cfg.train)
            };
            let r = train_run(ds, warm, &tc, &cfg.icp, None, None)?;
            rows.push(AblationRow {
                variant: v,
                seed,
                t_ate: r.trained.t_ate,
                r_ate: r.trained.r_ate,
                epochs_to_threshold: r.epochs_to_threshold,
            });
        }
    }
    Ok(rows)
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSummary {
    pub variant: Variant,
    pub t_ate: f64,
    pub r_ate: f64,
    /// Median epochs to threshold; runs that never reach it count as
    /// `epochs + 1`.
    pub epochs_to_threshold: f64,
}

pub fn summarize_ablation(rows: &[AblationRow], epochs: usize) -> Vec<AblationSummary> {
    Variant::ALL
        .iter()
        .filter_map(|&v| {
            let sel: Vec<&AblationRow> = rows.iter().filter(|r| r.variant == v).collect();
            let t: Vec<f64> = sel.iter().map(|r| r.t_ate).collect();
            let r: Vec<f64> = sel.iter().map(|r| r.r_ate).collect();
            let e: Vec<f64> = sel
                .iter()
                .map(|r| r.epochs_to_threshold.unwrap_or(epochs + 1) as f64)
                .collect();
            Some(AblationSummary {
                variant: v,
                t_ate: median(&t)?,
                r_ate: median(&r)?,
                epochs_to_threshold: median(&e)?,
            })
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `ate.csv`: `method,t_ate_m,r_ate_deg`.
pub fn write_ate_csv(path: &Path, rows: &[(&str, AteReport)]) -> Result<()> {
    let mut s = String::from("method,t_ate_m,r_ate_deg\n");
    for (m, r) in rows {
        let _ = writeln!(s, "{m},{},{}", r.t_ate, r.r_ate);
    }
    write_text(path, &s)
}

pub fn write_loss_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut s = String::from("epoch,occupancy,chamfer,consistency,total\n");
    for h in history {
        let t = &h.terms;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            h.epoch, t.occupancy, t.chamfer, t.consistency, t.total
        );
    }
    write_text(path, &s)
}

pub fn write_ate_curve(path: &Path, curve: &[(usize, f64, f64)]) -> Result<()> {
    let mut s = String::from("epoch,t_ate_m,r_ate_deg\n");
    for (e, t, r) in curve {
        let _ = writeln!(s, "{e},{t},{r}");
    }
    write_text(path, &s)
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut s = String::from("variant,seed,t_ate_m,r_ate_deg,epochs_to_threshold\n");
    for r in rows {
        let e = r.epochs_to_threshold.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{e}", r.variant.name(), r.seed, r.t_ate, r.r_ate);
    }
    write_text(path, &s)
}

pub fn format_summary(summary: &[AblationSummary]) -> String {
    let mut s = String::from("variant,median_t_ate_m,median_r_ate_deg,median_epochs_to_threshold\n");
    for r in summary {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.variant.name(),
            r.t_ate,
            r.r_ate,
            r.epochs_to_threshold
        );
    }
    s
}

fn load_config(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        match args.command {
            Command::Simulate => cfg.sim.scan.seed = seed,
            Command::Ablate => cfg.seeds = vec![seed],
            _ => cfg.train.seed = seed,
        }
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_final_poses(out: &Path) -> Result<Vec<Se2>> {
    let path = out.join("poses_final.csv");
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "{} not found; run `train` first",
            path.display()
        )));
    }
    read_poses_csv(&path)?.iter().map(Pose::as_se2).collect()
}

fn write_plots(out: &Path, ds: &Dataset, poses: &[Se2], canvas: (u32, u32)) -> Result<()> {
    let gt = ds.gt_se2()?;
    write_svg(&out.join("map.svg"), &render_map(&ds.clouds, poses, Some(&gt), canvas)?)?;
    write_svg(&out.join("traj.svg"), &render_map(&[], poses, Some(&gt), canvas)?)
}

/// Runs one stage and returns a short human-readable summary.
pub fn run_command(args: &Args) -> Result<String> {
    let cfg = load_config(args)?;
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    ensure_dir(&out)?;
    if args.command != Command::Simulate {
        ensure_dir(&args.data)?;
    }
    let msg = match args.command {
        Command::Simulate => {
            let ds = simulate(&cfg.sim)?;
            ensure_dir(&args.data)?;
            write_dataset(&args.data, &ds)?;
            format!("wrote {} frames to {}", ds.len(), args.data.display())
        }
        Command::Init => {
            let mut ds = read_dataset(&args.data)?;
            let ws = incremental_warm_start(&ds, &cfg.icp)?;
            let report = ate(&ws.poses, &ds.gt_poses)?;
            ds.init_poses = Some(ws.poses);
            write_dataset(&args.data, &ds)?;
            write_ate_csv(&out.join("ate.csv"), &[("warm_start", report)])?;
            format!(
                "warm start: T-ATE {:.4} m, R-ATE {:.3} deg, {} failed links",
                report.t_ate,
                report.r_ate,
                ws.failed_links.len()
            )
        }
        Command::Topology => {
            let ds = read_dataset(&args.data)?;
            let warm = warm_start(&ds, &cfg.icp)?;
            let t = &cfg.train;
            if t.use_batch_org {
                let poses = match (t.topology.source, t.topology_poses) {
                    (TopologySource::OracleRadius, super::config::TopologyPoses::Gt) => ds.gt_se2()?,
                    _ => warm.clone(),
                };
                let g = build_topology(&ds.clouds, &poses, &t.topology)?;
                write_topology_csv(&out.join("topology.csv"), &g)?;
            }
            let batches = prepare_batches(&ds, &warm, t, &cfg.icp)?;
            write_batches_csv(&out.join("batches.csv"), &batches)?;
            write_pairwise_csv(&out.join("pairwise.csv"), &batches)?;
            let low: usize = batches
                .iter()
                .map(|b| b.low_confidence.iter().filter(|&&l| l).count())
                .sum();
            format!("{} batches, {low} low-confidence pairs", batches.len())
        }
        Command::Train => {
            let ds = read_dataset(&args.data)?;
            let warm = warm_start(&ds, &cfg.icp)?;
            let resume = match &args.resume {
                Some(p) => Some(TrainState::from_checkpoint(&Checkpoint::load(p)?)?),
                None => None,
            };
            let r = train_run(&ds, &warm, &cfg.train, &cfg.icp, resume, Some(&out))?;
            let st = &r.outcome.state;
            write_poses_csv(&out.join("poses_final.csv"), &to_poses(&r.outcome.poses))?;
            write_loss_history(&out.join("loss_history.csv"), &st.history)?;
            write_ate_curve(&out.join("ate_curve.csv"), &st.ate_curve)?;
            write_ate_csv(&out.join("ate.csv"), &[("warm_start", r.warm), ("trained", r.trained)])?;
            if cfg.train.checkpoint_every > 0 && st.epoch % cfg.train.checkpoint_every != 0 {
                st.to_checkpoint().save(&checkpoint_path(&out, st.epoch))?;
            }
            write_plots(&out, &ds, &r.outcome.poses, cfg.canvas)?;
            format!(
                "trained {} epochs: T-ATE {:.4} m (warm start {:.4} m), R-ATE {:.3} deg",
                st.epoch, r.trained.t_ate, r.warm.t_ate, r.trained.r_ate
            )
        }
        Command::Eval => {
            let ds = read_dataset(&args.data)?;
            let poses = read_final_poses(&out)?;
            let trained = ate(&to_poses(&poses), &ds.gt_poses)?;
            let mut rows = Vec::new();
            if let Some(init) = &ds.init_poses {
                rows.push(("warm_start", ate(init, &ds.gt_poses)?));
            }
            rows.push(("trained", trained));
            write_ate_csv(&out.join("ate.csv"), &rows)?;
            format!("T-ATE {:.4} m, R-ATE {:.3} deg", trained.t_ate, trained.r_ate)
        }
        Command::Plot => {
            let ds = read_dataset(&args.data)?;
            let poses = read_final_poses(&out)?;
            write_plots(&out, &ds, &poses, cfg.canvas)?;
            format!("wrote map.svg and traj.svg to {}", out.display())
        }
        Command::Ablate => {
            let ds = read_dataset(&args.data)?;
            let warm = warm_start(&ds, &cfg.icp)?;
            let rows = run_ablation(&ds, &warm, &cfg, &cfg.seeds)?;
            write_ablation(&out.join("ablation.csv"), &rows)?;
            let summary = format_summary(&summarize_ablation(&rows, cfg.train.epochs));
            write_text(&out.join("ablation_summary.csv"), &summary)?;
            summary
        }
    };
    write_text(&out.join("config.txt"), &cfg.text)?;
    Ok(msg)
}
