//! Line-oriented `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so typos do not silently fall back to defaults.

use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nets::{Activation, NetShapes};
use crate::register::IcpConfig;
use crate::sim2d::{ScanConfig, SimConfig};
use crate::topology::{TopologyConfig, TopologySource};

/// Which poses the oracle-radius topology measures distances on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyPoses {
    /// Ground-truth positions, the analogue of GPS tags.
    Gt,
    /// Warm-start poses.
    Init,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub k: usize,
    pub weights: LossWeights,
    pub lr: f64,
    /// Cosine-decay the step size to this fraction of `lr` by the last epoch;
    /// 1 keeps it constant.
    pub lr_final_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub topology_poses: TopologyPoses,
    pub use_batch_org: bool,
    pub use_consistency: bool,
    pub use_chamfer: bool,
    /// Write a checkpoint every this many epochs; 0 disables checkpoints.
    pub checkpoint_every: usize,
    /// Points per frame used for training, by even stride; 0 keeps all.
    pub train_points: usize,
    pub free_per_ray: usize,
    /// Draw new free-space samples every epoch instead of once.
    pub resample_free: bool,
    /// Leave pairs whose ICP fell back to the initial guess out of the
    /// consistency term.
    pub skip_low_confidence: bool,
    /// With batch organization, rank this many graph neighbours per anchor
    /// and keep the first `k` that pass ICP verification; 0 takes the top `k`.
    pub verify_candidates: usize,
    pub shapes: NetShapes,
    /// Start the L-Net's last layer at zero so training begins at the warm start.
    pub zero_init_refinement: bool,
    /// Warm-start T-ATE fraction that defines "converged" for the epoch count.
    pub threshold_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            k: 8,
            weights: LossWeights::default(),
            lr: 1e-3,
            lr_final_fraction: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            topology: TopologyConfig::default(),
            topology_poses: TopologyPoses::Gt,
            use_batch_org: true,
            use_consistency: true,
            use_chamfer: true,
            checkpoint_every: 10,
            train_points: 0,
            free_per_ray: 2,
            resample_free: true,
            skip_low_confidence: true,
            verify_candidates: 0,
            shapes: NetShapes::default(),
            zero_init_refinement: true,
            threshold_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.free_per_ray == 0 {
            return bad("free_per_ray must be >= 1");
        }
        if !(self.lr > 0.0)
            || !(0.0..=1.0).contains(&self.lr_final_fraction)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.adam_eps > 0.0)
        {
            return bad("optimizer hyperparameters out of range");
        }
        if !(self.threshold_fraction > 0.0) {
            return bad("threshold_fraction must be > 0");
        }
        self.weights.validate()?;
        self.topology.validate()?;
        self.shapes.validate()
    }
}

/// Everything a run can be configured with, plus the verbatim source text.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub sim: SimConfig,
    pub icp: IcpConfig,
    pub canvas: (u32, u32),
    /// Seeds used by `ablate`.
    pub seeds: Vec<u64>,
    pub text: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            sim: SimConfig::default(),
            icp: IcpConfig::default(),
            canvas: (800, 800),
            seeds: vec![0, 1, 2],
            text: String::new(),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

impl RunConfig {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut cfg = RunConfig {
            text: text.to_string(),
            ..RunConfig::default()
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source_name, i + 1, "expected key=value"))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|m| Error::parse(source_name, i + 1, m))?;
        }
        cfg.train.validate()?;
        cfg.sim.scan.validate()?;
        cfg.icp.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        fn activation(key: &str, v: &str) -> std::result::Result<Activation, String> {
            match v {
                "relu" => Ok(Activation::Relu),
                "tanh" => Ok(Activation::Tanh),
                _ => Err(format!("bad activation `{v}` for `{key}`")),
            }
        }
        let flag = |v: &str| parse_bool(v).ok_or_else(|| format!("bad boolean `{v}` for `{key}`"));
        let widths = |v: &str| parse_list::<usize>(v).ok_or_else(|| format!("bad width list `{v}` for `{key}`"));
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = num(key, v)?,
            "k" => {
                t.k = num(key, v)?;
                t.topology.k = t.k;
            }
            "lambda_chamfer" => t.weights.chamfer = num(key, v)?,
            "lambda_consistency" => t.weights.consistency = num(key, v)?,
            "lr" => t.lr = num(key, v)?,
            "lr_final_fraction" => t.lr_final_fraction = num(key, v)?,
            "beta1" => t.beta1 = num(key, v)?,
            "beta2" => t.beta2 = num(key, v)?,
            "adam_eps" => t.adam_eps = num(key, v)?,
            "seed" => t.seed = num(key, v)?,
            "scan_seed" => self.sim.scan.seed = num(key, v)?,
            "topology" => t.topology.source = v.parse::<TopologySource>()?,
            "topology_poses" => {
                t.topology_poses = match v {
                    "gt" => TopologyPoses::Gt,
                    "init" => TopologyPoses::Init,
                    _ => return Err(format!("bad topology_poses `{v}`")),
                }
            }
            "radius" => t.topology.radius = num(key, v)?,
            "descriptor_bins" => t.topology.descriptor_bins = num(key, v)?,
            "descriptor_threshold" => t.topology.descriptor_threshold = num(key, v)?,
            "use_batch_org" => t.use_batch_org = flag(v)?,
            "use_consistency" => t.use_consistency = flag(v)?,
            "use_chamfer" => t.use_chamfer = flag(v)?,
            "checkpoint_every" => t.checkpoint_every = num(key, v)?,
            "train_points" => t.train_points = num(key, v)?,
            "free_per_ray" => t.free_per_ray = num(key, v)?,
            "resample_free" => t.resample_free = flag(v)?,
            "skip_low_confidence" => t.skip_low_confidence = flag(v)?,
            "verify_candidates" => t.verify_candidates = num(key, v)?,
            "lnet_encoder" => t.shapes.lnet_encoder = widths(v)?,
            "lnet_head" => t.shapes.lnet_head = widths(v)?,
            "mnet" => t.shapes.mnet = widths(v)?,
            "lnet_activation" => t.shapes.lnet_hidden = activation(key, v)?,
            "mnet_activation" => t.shapes.mnet_hidden = activation(key, v)?,
            "zero_init_refinement" => t.zero_init_refinement = flag(v)?,
            "threshold_fraction" => t.threshold_fraction = num(key, v)?,
            "frames" => self.sim.frames = num(key, v)?,
            "laps" => self.sim.laps = num(key, v)?,
            "lap_offset" => self.sim.lap_offset = num(key, v)?,
            "beams" => self.sim.scan.num_beams = num(key, v)?,
            "fov" => self.sim.scan.fov = num(key, v)?,
            "max_range" => self.sim.scan.max_range = num(key, v)?,
            "noise_sigma" => self.sim.scan.range_noise_sigma = num(key, v)?,
            "icp_max_iterations" => self.icp.max_iterations = num(key, v)?,
            "icp_eps" => self.icp.convergence_eps = num(key, v)?,
            "icp_max_corr" => self.icp.max_correspondence_dist = num(key, v)?,
            "icp_min_inliers" => self.icp.min_inliers = num(key, v)?,
            "icp_min_overlap" => self.icp.min_overlap = num(key, v)?,
            "icp_max_residual" => self.icp.max_residual = num(key, v)?,
            "canvas_width" => self.canvas.0 = num(key, v)?,
            "canvas_height" => self.canvas.1 = num(key, v)?,
            "seeds" => self.seeds = parse_list(v).ok_or_else(|| format!("bad seed list `{v}`"))?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Overrides the training seed as if `seed=<n>` had been appended.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.set("seed", &seed.to_string()).expect("seed is a valid key");
        self
    }
}

impl RunConfig {
    pub fn scan(&self) -> &ScanConfig {
        &self.sim.scan
    }
}
