//! Small multilayer perceptrons with hand-written reverse mode, the
//! localization network (L-Net), the occupancy network (M-Net), an Adam
//! optimizer and the binary checkpoint format.
//!
//! Parameters of one network live in a single flat `Vec<f64>`: for each layer
//! in order, the `in × out` weight matrix (row-major, input-major) followed by
//! the `out` biases. The compute schedule is fixed, so every gradient is
//! produced by an explicit backward routine rather than a tape.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{keyed, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    fn code(self) -> &'static str {
        match self {
            Activation::Identity => "none",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    fn from_code(s: &str) -> Option<Self> {
        Some(match s {
            "none" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    /// Input width followed by every layer's output width.
    pub widths: Vec<usize>,
    /// Activation after each hidden layer (`widths.len() - 2` entries).
    pub hidden: Vec<Activation>,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        let n_hidden = widths.len().saturating_sub(2);
        MlpSpec {
            widths,
            hidden: vec![hidden; n_hidden],
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad MLP widths {:?}", self.widths)));
        }
        if self.hidden.len() != self.widths.len() - 2 {
            return Err(Error::InvalidArgument(
                "one activation per hidden layer required".into(),
            ));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output
        } else {
            self.hidden[layer]
        }
    }

    /// Offsets of (weights, biases) for each layer.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let o = (off, off + w[0] * w[1]);
                off += w[0] * w[1] + w[1];
                o
            })
            .collect()
    }

    /// Compact text form, e.g. `2-64-128:relu,relu:relu`.
    pub fn encode(&self) -> String {
        let w: Vec<String> = self.widths.iter().map(|v| v.to_string()).collect();
        let h: Vec<&str> = self.hidden.iter().map(|a| a.code()).collect();
        format!("{}:{}:{}", w.join("-"), h.join(","), self.output.code())
    }

    pub fn decode(s: &str) -> Option<Self> {
        let mut parts = s.split(':');
        let widths = parts
            .next()?
            .split('-')
            .map(|v| v.parse().ok())
            .collect::<Option<Vec<usize>>>()?;
        let h = parts.next()?;
        let hidden = if h.is_empty() {
            Vec::new()
        } else {
            h.split(',').map(Activation::from_code).collect::<Option<Vec<_>>>()?
        };
        let output = Activation::from_code(parts.next()?)?;
        let spec = MlpSpec { widths, hidden, output };
        spec.validate().ok()?;
        Some(spec)
    }
}

/// Activations of one forward pass over `rows` inputs.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub rows: usize,
    /// `acts[0]` is the input; `acts[l + 1]` is layer `l`'s activated output.
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// Forward pass on a row-major `rows × in` input.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &[f64], rows: usize) -> MlpCache {
    debug_assert_eq!(params.len(), spec.param_count());
    debug_assert_eq!(input.len(), rows * spec.input_width());
    let mut acts = Vec::with_capacity(spec.num_layers() + 1);
    acts.push(input.to_vec());
    for (l, (wo, bo)) in spec.offsets().into_iter().enumerate() {
        let (n_in, n_out) = (spec.widths[l], spec.widths[l + 1]);
        let w = &params[wo..wo + n_in * n_out];
        let b = &params[bo..bo + n_out];
        let act = spec.activation(l);
        let x = acts.last().unwrap();
        let mut y = vec![0.0; rows * n_out];
        for r in 0..rows {
            let xr = &x[r * n_in..(r + 1) * n_in];
            let yr = &mut y[r * n_out..(r + 1) * n_out];
            yr.copy_from_slice(b);
            for (k, &xk) in xr.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                let wk = &w[k * n_out..(k + 1) * n_out];
                for (yj, &wkj) in yr.iter_mut().zip(wk) {
                    *yj += xk * wkj;
                }
            }
            for v in yr.iter_mut() {
                *v = act.apply(*v);
            }
        }
        acts.push(y);
    }
    MlpCache { rows, acts }
}

/// Accumulates parameter gradients into `grad` given `d_out = ∂L/∂output`.
/// Rows whose upstream gradient is entirely zero are skipped. Returns
/// `∂L/∂input` when requested.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &[f64],
    cache: &MlpCache,
    d_out: &[f64],
    grad: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let rows = cache.rows;
    let offsets = spec.offsets();
    let mut delta = d_out.to_vec();
    for l in (0..spec.num_layers()).rev() {
        let (n_in, n_out) = (spec.widths[l], spec.widths[l + 1]);
        let (wo, bo) = offsets[l];
        let act = spec.activation(l);
        let y = &cache.acts[l + 1];
        let x = &cache.acts[l];
        // through the activation
        for (d, &yv) in delta.iter_mut().zip(y) {
            *d *= act.grad_from_output(yv);
        }
        let need_dx = l > 0 || want_input_grad;
        let w = &params[wo..wo + n_in * n_out];
        // Wᵀ laid out out-major so the input gradient is a sum of rows
        let wt: Vec<f64> = if need_dx {
            let mut t = vec![0.0; n_in * n_out];
            for k in 0..n_in {
                for j in 0..n_out {
                    t[j * n_in + k] = w[k * n_out + j];
                }
            }
            t
        } else {
            Vec::new()
        };
        let mut dx = if need_dx { vec![0.0; rows * n_in] } else { Vec::new() };
        let (gw, gb) = grad[wo..bo + n_out].split_at_mut(n_in * n_out);
        for r in 0..rows {
            let dr = &delta[r * n_out..(r + 1) * n_out];
            if dr.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (g, &d) in gb.iter_mut().zip(dr) {
                *g += d;
            }
            let xr = &x[r * n_in..(r + 1) * n_in];
            for (k, &xk) in xr.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                let gk = &mut gw[k * n_out..(k + 1) * n_out];
                for (g, &d) in gk.iter_mut().zip(dr) {
                    *g += xk * d;
                }
            }
            if need_dx {
                let dxr = &mut dx[r * n_in..(r + 1) * n_in];
                for (j, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let tj = &wt[j * n_in..(j + 1) * n_in];
                    for (o, &t) in dxr.iter_mut().zip(tj) {
                        *o += d * t;
                    }
                }
            }
        }
        if l == 0 {
            return if want_input_grad { Some(dx) } else { None };
        }
        delta = dx;
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetRole {
    LNet,
    MNet,
}

impl NetRole {
    fn code(self) -> &'static str {
        match self {
            NetRole::LNet => "lnet",
            NetRole::MNet => "mnet",
        }
    }
}

/// Flat parameters for one network. The L-Net has two parts (per-point
/// encoder, pooled head); the M-Net has one.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub role: NetRole,
    pub parts: Vec<MlpSpec>,
    pub values: Vec<f64>,
}

/// Layer widths for both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct NetShapes {
    pub lnet_encoder: Vec<usize>,
    pub lnet_head: Vec<usize>,
    pub mnet: Vec<usize>,
    /// Activation of the L-Net hidden layers and of the encoder output.
    pub lnet_hidden: Activation,
    pub mnet_hidden: Activation,
}

impl Default for NetShapes {
    fn default() -> Self {
        NetShapes {
            lnet_encoder: vec![2, 64, 128],
            lnet_head: vec![128, 64, 3],
            mnet: vec![2, 64, 64, 1],
            lnet_hidden: Activation::Relu,
            mnet_hidden: Activation::Relu,
        }
    }
}

impl NetShapes {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.lnet_encoder.len() < 2 || self.lnet_encoder[0] != 2 {
            return bad("L-Net encoder must start at width 2");
        }
        if self.lnet_head.len() < 3 || self.lnet_head[0] != *self.lnet_encoder.last().unwrap() {
            return bad("L-Net head must have a hidden layer and start at the encoder width");
        }
        if *self.lnet_head.last().unwrap() != 3 {
            return bad("L-Net head must output 3 values");
        }
        if self.mnet.len() < 3 || self.mnet[0] != 2 || *self.mnet.last().unwrap() != 1 {
            return bad("M-Net must map 2 -> ... -> 1 with a hidden layer");
        }
        Ok(())
    }
}

fn uniform_init(parts: &[MlpSpec], seed: u64, role: NetRole) -> Vec<f64> {
    let mut rng = keyed(Domain::NetInit, seed, role as u64, 0, 0);
    let mut values = Vec::with_capacity(parts.iter().map(MlpSpec::param_count).sum());
    for spec in parts {
        for w in spec.widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                values.push(rng.gen_range(-bound..bound));
            }
        }
    }
    values
}

impl NetParams {
    /// L-Net: per-point encoder, then a head with a linear 3-vector output. With `zero_output`, the last layer starts at
    /// zero so the initial refinement is the identity.
    pub fn lnet(shapes: &NetShapes, seed: u64, zero_output: bool) -> Result<Self> {
        shapes.validate()?;
        let encoder = MlpSpec::new(shapes.lnet_encoder.clone(), shapes.lnet_hidden, shapes.lnet_hidden);
        let head = MlpSpec::new(shapes.lnet_head.clone(), shapes.lnet_hidden, Activation::Identity);
        let parts = vec![encoder, head];
        let mut values = uniform_init(&parts, seed, NetRole::LNet);
        if zero_output {
            let n = values.len();
            let last = parts[1].widths.windows(2).last().unwrap();
            let count = last[0] * last[1] + last[1];
            values[n - count..].iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(NetParams {
            role: NetRole::LNet,
            parts,
            values,
        })
    }

    /// M-Net: hidden layers, sigmoid output.
    pub fn mnet(shapes: &NetShapes, seed: u64) -> Result<Self> {
        shapes.validate()?;
        let parts = vec![MlpSpec::new(
            shapes.mnet.clone(),
            shapes.mnet_hidden,
            Activation::Sigmoid,
        )];
        let values = uniform_init(&parts, seed, NetRole::MNet);
        Ok(NetParams {
            role: NetRole::MNet,
            parts,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn part_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.parts[..i].iter().map(MlpSpec::param_count).sum();
        start..start + self.parts[i].param_count()
    }

    pub fn encode_spec(&self) -> String {
        let p: Vec<String> = self.parts.iter().map(MlpSpec::encode).collect();
        format!("{}|{}", self.role.code(), p.join("|"))
    }

    pub fn decode_spec(s: &str, values: Vec<f64>) -> Result<Self> {
        let bad = || Error::Checkpoint(format!("bad network spec `{s}`"));
        let mut it = s.split('|');
        let role = match it.next() {
            Some("lnet") => NetRole::LNet,
            Some("mnet") => NetRole::MNet,
            _ => return Err(bad()),
        };
        let parts = it.map(MlpSpec::decode).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
        let n: usize = parts.iter().map(MlpSpec::param_count).sum();
        if n != values.len() || parts.is_empty() {
            return Err(bad());
        }
        Ok(NetParams { role, parts, values })
    }
}

/// Cached L-Net activations for one cloud.
#[derive(Clone, Debug)]
pub struct LNetCache {
    encoder: MlpCache,
    argmax: Vec<usize>,
    head: MlpCache,
}

impl LNetCache {
    /// The raw `(Δx, Δy, Δθ)` refinement.
    pub fn refinement(&self) -> [f64; 3] {
        let o = self.head.output();
        [o[0], o[1], o[2]]
    }
}

/// Runs the L-Net on a (re-centred) planar cloud: per-point encoder,
/// coordinate-wise max over points, head. Ties in the max go to the first point.
pub fn lnet_forward(net: &NetParams, points: &[[f64; 2]]) -> Result<LNetCache> {
    if net.role != NetRole::LNet {
        return Err(Error::InvalidArgument("lnet_forward needs L-Net parameters".into()));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud("L-Net input".into()));
    }
    let enc_spec = &net.parts[0];
    let flat: Vec<f64> = points.iter().flat_map(|p| [p[0], p[1]]).collect();
    let encoder = mlp_forward(enc_spec, &net.values[net.part_range(0)], &flat, points.len());
    let width = enc_spec.output_width();
    let feats = encoder.output();
    let mut pooled = feats[..width].to_vec();
    let mut argmax = vec![0usize; width];
    for r in 1..points.len() {
        let row = &feats[r * width..(r + 1) * width];
        for c in 0..width {
            if row[c] > pooled[c] {
                pooled[c] = row[c];
                argmax[c] = r;
            }
        }
    }
    let head = mlp_forward(&net.parts[1], &net.values[net.part_range(1)], &pooled, 1);
    if head.output().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            node: "lnet.head".into(),
        });
    }
    Ok(LNetCache { encoder, argmax, head })
}

/// Accumulates `∂L/∂θ` given `∂L/∂refinement`.
pub fn lnet_backward(net: &NetParams, cache: &LNetCache, d_refinement: [f64; 3], grad: &mut [f64]) {
    let (r0, r1) = (net.part_range(0), net.part_range(1));
    let (g_enc, g_head) = grad.split_at_mut(r1.start);
    let d_pooled = mlp_backward(&net.parts[1], &net.values[r1], &cache.head, &d_refinement, g_head, true)
        .expect("input gradient requested");
    let width = net.parts[0].output_width();
    let mut d_feats = vec![0.0; cache.encoder.rows * width];
    for (c, (&r, &d)) in cache.argmax.iter().zip(&d_pooled).enumerate() {
        d_feats[r * width + c] += d;
    }
    mlp_backward(
        &net.parts[0],
        &net.values[r0.clone()],
        &cache.encoder,
        &d_feats,
        &mut g_enc[r0],
        false,
    );
}

/// Occupancy probabilities for a set of global coordinates.
pub fn mnet_forward(net: &NetParams, coords: &[[f64; 2]]) -> MlpCache {
    debug_assert_eq!(net.role, NetRole::MNet);
    let flat: Vec<f64> = coords.iter().flat_map(|p| [p[0], p[1]]).collect();
    mlp_forward(&net.parts[0], &net.values, &flat, coords.len())
}

/// Accumulates `∂L/∂φ` and returns `∂L/∂coords`.
pub fn mnet_backward(net: &NetParams, cache: &MlpCache, d_prob: &[f64], grad: &mut [f64]) -> Vec<[f64; 2]> {
    let dx = mlp_backward(&net.parts[0], &net.values, cache, d_prob, grad, true).expect("input gradient requested");
    dx.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(n: usize, lr: f64) -> Self {
        OptimizerState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], st: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != st.m.len() {
        return Err(Error::LengthMismatch {
            what: "adam params/grads/moments",
            left: params.len(),
            right: grads.len(),
        });
    }
    st.t += 1;
    let c1 = 1.0 - st.beta1.powi(st.t as i32);
    let c2 = 1.0 - st.beta2.powi(st.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        let mh = st.m[i] / c1;
        let vh = st.v[i] / c2;
        params[i] -= st.lr * mh / (vh.sqrt() + st.eps);
    }
    Ok(())
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MAPFORGE";
pub const CHECKPOINT_VERSION: u8 = 1;

/// Text metadata plus named little-endian `f64` arrays.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.arrays
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u64).to_le_bytes());
        for (name, vals) in &self.arrays {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(vals.len() as u64).to_le_bytes());
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut ver = [0u8; 1];
        read_exact(&mut r, &mut ver)?;
        if ver[0] != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ver[0])));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let meta_text = read_string(&mut r, meta_len)?;
        let meta = meta_text
            .lines()
            .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect();
        let n = read_u64(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let name_len = read_u64(&mut r)? as usize;
            let name = read_string(&mut r, name_len)?;
            let len = read_u64(&mut r)? as usize;
            if len > r.len() / 8 {
                return Err(Error::Checkpoint("truncated array".into()));
            }
            let mut vals = Vec::with_capacity(len);
            for _ in 0..len {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b)?;
                vals.push(f64::from_le_bytes(b));
            }
            arrays.push((name, vals));
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&buf)
    }
}

fn read_exact(r: &mut &[u8], out: &mut [u8]) -> Result<()> {
    r.read_exact(out).map_err(|_| Error::Checkpoint("truncated".into()))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut &[u8], len: usize) -> Result<String> {
    if len > r.len() {
        return Err(Error::Checkpoint("truncated string".into()));
    }
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("non-utf8 text".into()))
}
