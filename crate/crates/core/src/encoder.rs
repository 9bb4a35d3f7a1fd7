//! Temporal convolution encoder with a hand-written backward pass.
//!
//! Architecture: a stack of `Conv1d -> ReLU -> LayerNorm` blocks (stride 1,
//! zero padding that keeps the sequence length), global average pooling over
//! time, and one affine map to the embedding dimension. The layer norm runs
//! over the whole `channels x time` block of one instance and has no learned
//! scale or shift.
//!
//! All weights live in one flat `Vec<f64>`; the tensor order is
//!
//! ```text
//! for each conv layer l:  weight[out][in][k], bias[out]
//! linear:                 weight[embed][last_channels], bias[embed]
//! ```
//!
//! Flat storage keeps the optimizer, the momentum copy and checkpointing to
//! plain slice arithmetic.

use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Stream};

/// Instances per backward work unit. Partial gradients are summed within a
/// unit in instance order and units are summed in unit order, so the result
/// does not depend on the number of worker threads.
const GRAD_CHUNK: usize = 8;

/// Variance floor of the per-block layer norm.
const LN_EPS: f64 = 1e-5;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub in_channels: usize,
    pub seq_len: usize,
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub embed_dim: usize,
}

impl ArchConfig {
    /// Three blocks `V -> 32 -> 64 -> 128` with kernel widths 8, 5, 3 and a
    /// 128-dimensional embedding.
    pub fn standard(in_channels: usize, seq_len: usize) -> Self {
        Self {
            in_channels,
            seq_len,
            channels: vec![32, 64, 128],
            kernels: vec![8, 5, 3],
            embed_dim: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.seq_len == 0 || self.embed_dim == 0 {
            return Err(Error::param("arch", "in_channels, seq_len and embed_dim must be positive"));
        }
        if self.channels.is_empty() || self.channels.len() != self.kernels.len() {
            return Err(Error::param(
                "arch",
                format!("{} channel widths for {} kernels", self.channels.len(), self.kernels.len()),
            ));
        }
        if self.channels.contains(&0) || self.kernels.contains(&0) {
            return Err(Error::param("arch", "channel and kernel widths must be positive"));
        }
        if let Some(&k) = self.kernels.iter().find(|&&k| k > self.seq_len) {
            return Err(Error::param(
                "kernel",
                format!("kernel width {k} exceeds sequence length {}", self.seq_len),
            ));
        }
        Ok(())
    }

    /// Canonical `key=value` lines, used inside checkpoints.
    pub fn to_kv_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        format!(
            "in_channels={}\nseq_len={}\nchannels={}\nkernels={}\nembed_dim={}\n",
            self.in_channels,
            self.seq_len,
            join(&self.channels),
            join(&self.kernels),
            self.embed_dim
        )
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = ArchConfig {
            in_channels: 0,
            seq_len: 0,
            channels: Vec::new(),
            kernels: Vec::new(),
            embed_dim: 0,
        };
        let bad = |key: &str, v: &str| Error::Config {
            key: key.to_string(),
            message: format!("cannot parse `{v}`"),
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad("arch", line))?;
            let list = |v: &str| -> Result<Vec<usize>> {
                v.split(',').map(|s| s.trim().parse().map_err(|_| bad(k, v))).collect()
            };
            match k.trim() {
                "in_channels" => cfg.in_channels = v.trim().parse().map_err(|_| bad(k, v))?,
                "seq_len" => cfg.seq_len = v.trim().parse().map_err(|_| bad(k, v))?,
                "channels" => cfg.channels = list(v)?,
                "kernels" => cfg.kernels = list(v)?,
                "embed_dim" => cfg.embed_dim = v.trim().parse().map_err(|_| bad(k, v))?,
                other => {
                    return Err(Error::Config { key: other.into(), message: "unknown arch key".into() })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvSlot {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
    k: usize,
    pad_left: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    convs: Vec<ConvSlot>,
    lin_w: usize,
    lin_b: usize,
    lin_in: usize,
    lin_out: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &ArchConfig) -> Self {
        let mut off = 0;
        let mut cin = arch.in_channels;
        let mut convs = Vec::with_capacity(arch.channels.len());
        for (&cout, &k) in arch.channels.iter().zip(&arch.kernels) {
            let w = off;
            off += cout * cin * k;
            let b = off;
            off += cout;
            convs.push(ConvSlot { w, b, cin, cout, k, pad_left: (k - 1) / 2 });
            cin = cout;
        }
        let lin_w = off;
        off += arch.embed_dim * cin;
        let lin_b = off;
        off += arch.embed_dim;
        Layout { convs, lin_w, lin_b, lin_in: cin, lin_out: arch.embed_dim, total: off }
    }

    /// `(offset, len, fan_in, fan_out)` for each weight tensor, biases excluded.
    fn weight_tensors(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out: Vec<_> = self
            .convs
            .iter()
            .map(|c| (c.w, c.cout * c.cin * c.k, c.cin * c.k, c.cout * c.k))
            .collect();
        out.push((self.lin_w, self.lin_out * self.lin_in, self.lin_in, self.lin_out));
        out
    }
}

/// Half-width of the Glorot/Xavier uniform range.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    arch: ArchConfig,
    layout: Layout,
    values: Vec<f64>,
    version: u64,
}

impl PartialEq for EncoderParams {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.values == other.values
    }
}

impl EncoderParams {
    /// Xavier-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        let mut values = vec![0.0; layout.total];
        let mut rng = rng::stream(seed, Stream::Init, &[]);
        for (off, len, fan_in, fan_out) in layout.weight_tensors() {
            let a = xavier_bound(fan_in, fan_out);
            let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
            for v in &mut values[off..off + len] {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(Self { arch: arch.clone(), layout, values, version: fresh_version() })
    }

    pub fn from_values(arch: &ArchConfig, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        if values.len() != layout.total {
            return Err(Error::Shape(format!(
                "{} parameter values, architecture needs {}",
                values.len(),
                layout.total
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(Self { arch: arch.clone(), layout, values, version: fresh_version() })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access; bumps the version so existing caches go stale.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.version = fresh_version();
        &mut self.values
    }

    /// Ranges `(weight, bias)` of every conv layer followed by the linear map.
    pub fn tensor_ranges(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut out: Vec<_> = self
            .layout
            .convs
            .iter()
            .map(|c| (c.w..c.b, c.b..c.b + c.cout))
            .collect();
        let l = &self.layout;
        out.push((l.lin_w..l.lin_b, l.lin_b..l.lin_b + l.lin_out));
        out
    }

    fn same_shape(&self, other: &EncoderParams) -> bool {
        self.arch == other.arch && self.values.len() == other.values.len()
    }
}

/// Gradients in the same flat layout as [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
struct InstanceCache {
    /// `acts[l]` is the input of conv layer `l` (channel-major); the last
    /// entry is the normalized output of the final block.
    acts: Vec<Vec<f64>>,
    /// ReLU output and inverse std of each block, before normalization.
    relu: Vec<(Vec<f64>, f64)>,
    pooled: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    instances: Vec<InstanceCache>,
}

impl ForwardCache {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn batch_size(&self) -> usize {
        self.instances.len()
    }
}

// ── Kernels ─────────────────────────────────────────────────────────────────

/// Valid output range for tap `j`: `out[t] += w * in[t + j - pad]`.
#[inline]
fn tap_range(j: usize, pad: usize, steps: usize) -> (usize, usize, usize) {
    let shift = j as isize - pad as isize;
    let lo = (-shift).max(0) as usize;
    let hi = (steps as isize - shift).min(steps as isize).max(0) as usize;
    let src = (lo as isize + shift) as usize;
    (lo, hi, src)
}

fn conv_relu_forward(params: &[f64], c: &ConvSlot, input: &[f64], steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; c.cout * steps];
    for o in 0..c.cout {
        let row = &mut out[o * steps..(o + 1) * steps];
        row.fill(params[c.b + o]);
        for ci in 0..c.cin {
            let x = &input[ci * steps..(ci + 1) * steps];
            let wbase = c.w + (o * c.cin + ci) * c.k;
            for j in 0..c.k {
                let w = params[wbase + j];
                let (lo, hi, src) = tap_range(j, c.pad_left, steps);
                if lo >= hi {
                    continue;
                }
                for (y, xv) in row[lo..hi].iter_mut().zip(&x[src..src + (hi - lo)]) {
                    *y += w * xv;
                }
            }
        }
        for y in row.iter_mut() {
            if *y < 0.0 {
                *y = 0.0;
            }
        }
    }
    out
}

/// Standardizes a whole block (all channels and steps) in place; returns
/// the inverse standard deviation.
fn layer_norm(x: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for v in x.iter_mut() {
        *v = (*v - mean) * inv;
    }
    inv
}

/// Gradient through [`layer_norm`] given its output `y`.
fn layer_norm_backward(g: &[f64], y: &[f64], inv: f64) -> Vec<f64> {
    let n = g.len() as f64;
    let mg = g.iter().sum::<f64>() / n;
    let mgy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
    g.iter().zip(y).map(|(gv, yv)| inv * (gv - mg - yv * mgy)).collect()
}

/// Backward through `ReLU(conv(input))`. `g_out` is the gradient w.r.t. the
/// ReLU output and is gated in place. Returns the input gradient when asked.
fn conv_relu_backward(
    params: &[f64],
    c: &ConvSlot,
    input: &[f64],
    output: &[f64],
    g_out: &mut [f64],
    steps: usize,
    grads: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    for (g, y) in g_out.iter_mut().zip(output) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
    let mut g_in = want_input.then(|| vec![0.0; c.cin * steps]);
    for o in 0..c.cout {
        let go = &g_out[o * steps..(o + 1) * steps];
        grads[c.b + o] += go.iter().sum::<f64>();
        for ci in 0..c.cin {
            let x = &input[ci * steps..(ci + 1) * steps];
            let wbase = c.w + (o * c.cin + ci) * c.k;
            for j in 0..c.k {
                let (lo, hi, src) = tap_range(j, c.pad_left, steps);
                if lo >= hi {
                    continue;
                }
                let len = hi - lo;
                let gsl = &go[lo..hi];
                grads[wbase + j] += gsl.iter().zip(&x[src..src + len]).map(|(g, xv)| g * xv).sum::<f64>();
                if let Some(gi) = g_in.as_mut() {
                    let w = params[wbase + j];
                    for (d, g) in gi[ci * steps + src..ci * steps + src + len].iter_mut().zip(gsl) {
                        *d += w * g;
                    }
                }
            }
        }
    }
    g_in
}

fn to_channel_major(x: &[f64], steps: usize, vars: usize) -> Vec<f64> {
    let mut out = vec![0.0; steps * vars];
    for t in 0..steps {
        for v in 0..vars {
            out[v * steps + t] = x[t * vars + v];
        }
    }
    out
}

fn forward_one(p: &EncoderParams, x: &[f64]) -> (Vec<f64>, InstanceCache) {
    let steps = p.arch.seq_len;
    let vals = &p.values;
    let mut acts = Vec::with_capacity(p.layout.convs.len() + 1);
    acts.push(to_channel_major(x, steps, p.arch.in_channels));
    let mut relu = Vec::with_capacity(p.layout.convs.len());
    for c in &p.layout.convs {
        let r = conv_relu_forward(vals, c, acts.last().expect("input present"), steps);
        let mut y = r.clone();
        let inv = layer_norm(&mut y);
        relu.push((r, inv));
        acts.push(y);
    }
    let l = &p.layout;
    let last = acts.last().expect("conv output");
    let pooled: Vec<f64> = last.chunks_exact(steps).map(|r| r.iter().sum::<f64>() / steps as f64).collect();
    let mut emb = vals[l.lin_b..l.lin_b + l.lin_out].to_vec();
    for (d, e) in emb.iter_mut().enumerate() {
        let w = &vals[l.lin_w + d * l.lin_in..l.lin_w + (d + 1) * l.lin_in];
        *e += w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
    }
    (emb, InstanceCache { acts, relu, pooled })
}

fn backward_one(
    p: &EncoderParams,
    cache: &InstanceCache,
    g_emb: &[f64],
    grads: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let steps = p.arch.seq_len;
    let vals = &p.values;
    let l = &p.layout;
    let mut g_pooled = vec![0.0; l.lin_in];
    for (d, &g) in g_emb.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grads[l.lin_b + d] += g;
        let w = &vals[l.lin_w + d * l.lin_in..l.lin_w + (d + 1) * l.lin_in];
        let gw = &mut grads[l.lin_w + d * l.lin_in..l.lin_w + (d + 1) * l.lin_in];
        for ((gwc, &pc), (gp, &wc)) in gw.iter_mut().zip(&cache.pooled).zip(g_pooled.iter_mut().zip(w)) {
            *gwc += g * pc;
            *gp += g * wc;
        }
    }
    let mut g_act: Vec<f64> = g_pooled
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / steps as f64, steps))
        .collect();
    let mut g_input = None;
    for (li, c) in l.convs.iter().enumerate().rev() {
        let need = li > 0 || want_input;
        let (r, inv) = &cache.relu[li];
        let mut g_relu = layer_norm_backward(&g_act, &cache.acts[li + 1], *inv);
        let gi = conv_relu_backward(vals, c, &cache.acts[li], r, &mut g_relu, steps, grads, need);
        if li > 0 {
            g_act = gi.expect("hidden-layer input gradient");
        } else {
            g_input = gi;
        }
    }
    g_input.map(|g| {
        // back to time-major
        let vars = p.arch.in_channels;
        let mut out = vec![0.0; steps * vars];
        for v in 0..vars {
            for t in 0..steps {
                out[t * vars + v] = g[v * steps + t];
            }
        }
        out
    })
}

fn check_batch(p: &EncoderParams, batch: &[f64], b: usize) -> Result<usize> {
    let per = p.arch.seq_len * p.arch.in_channels;
    if batch.len() != b * per {
        return Err(Error::Shape(format!(
            "batch of {} values is not {b} x T={} x V={}",
            batch.len(),
            p.arch.seq_len,
            p.arch.in_channels
        )));
    }
    if let Some(pos) = batch.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("encoder input (instance {})", pos / per)));
    }
    Ok(per)
}

/// Raw embeddings (`B x D`) and the cache needed by [`backward`].
pub fn forward(p: &EncoderParams, batch: &[f64], b: usize) -> Result<(Matrix, ForwardCache)> {
    let per = check_batch(p, batch, b)?;
    let results: Vec<(Vec<f64>, InstanceCache)> =
        batch.par_chunks_exact(per).map(|x| forward_one(p, x)).collect();
    let mut emb = Matrix::zeros(b, p.arch.embed_dim);
    let mut instances = Vec::with_capacity(b);
    for (i, (e, c)) in results.into_iter().enumerate() {
        emb.row_mut(i).copy_from_slice(&e);
        instances.push(c);
    }
    Ok((emb, ForwardCache { version: p.version, instances }))
}

/// Forward without retaining a cache.
pub fn embed(p: &EncoderParams, batch: &[f64], b: usize) -> Result<Matrix> {
    let per = check_batch(p, batch, b)?;
    let rows: Vec<Vec<f64>> = batch.par_chunks_exact(per).map(|x| forward_one(p, x).0).collect();
    let mut emb = Matrix::zeros(b, p.arch.embed_dim);
    for (i, r) in rows.iter().enumerate() {
        emb.row_mut(i).copy_from_slice(r);
    }
    Ok(emb)
}

/// Globally pooled features of the last conv block (`B x channels`), the
/// input of the final affine map.
pub fn pooled(p: &EncoderParams, batch: &[f64], b: usize) -> Result<Matrix> {
    let per = check_batch(p, batch, b)?;
    let rows: Vec<Vec<f64>> = batch.par_chunks_exact(per).map(|x| forward_one(p, x).1.pooled).collect();
    Matrix::from_vec(b, p.layout.lin_in, rows.concat())
}

fn check_cache(p: &EncoderParams, cache: &ForwardCache, g: &Matrix) -> Result<()> {
    if cache.version != p.version {
        return Err(Error::StaleCache { cache: cache.version, params: p.version });
    }
    if g.rows() != cache.instances.len() || g.cols() != p.arch.embed_dim {
        return Err(Error::Shape(format!(
            "embedding gradient is {}x{}, expected {}x{}",
            g.rows(),
            g.cols(),
            cache.instances.len(),
            p.arch.embed_dim
        )));
    }
    Ok(())
}

/// Gradient of `sum(embeddings * grad_embeddings)` w.r.t. every parameter.
pub fn backward(p: &EncoderParams, cache: &ForwardCache, grad_embeddings: &Matrix) -> Result<Gradients> {
    check_cache(p, cache, grad_embeddings)?;
    let ids: Vec<usize> = (0..cache.instances.len()).collect();
    let partials: Vec<Vec<f64>> = ids
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; p.values.len()];
            for &i in chunk {
                backward_one(p, &cache.instances[i], grad_embeddings.row(i), &mut g, false);
            }
            g
        })
        .collect();
    let mut total = vec![0.0; p.values.len()];
    for part in &partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    Ok(Gradients { values: total })
}

/// Like [`backward`], also returning the input gradient (`B x T x V`,
/// time-major like the batch).
pub fn backward_with_input(
    p: &EncoderParams,
    cache: &ForwardCache,
    grad_embeddings: &Matrix,
) -> Result<(Gradients, Vec<f64>)> {
    check_cache(p, cache, grad_embeddings)?;
    let mut total = vec![0.0; p.values.len()];
    let mut g_in = Vec::new();
    for (i, inst) in cache.instances.iter().enumerate() {
        let gi = backward_one(p, inst, grad_embeddings.row(i), &mut total, true);
        g_in.extend(gi.expect("input gradient requested"));
    }
    Ok((Gradients { values: total }, g_in))
}

// ── Updates ─────────────────────────────────────────────────────────────────

/// SGD with heavy-ball momentum and L2 weight decay. Velocity persists
/// across calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, num_params: usize) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::param("lr", format!("{lr} must be finite and >= 0")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::param("sgd_momentum", format!("{momentum} not in [0,1)")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::param("weight_decay", format!("{weight_decay} must be >= 0")));
        }
        Ok(Self { lr, momentum, weight_decay, velocity: vec![0.0; num_params] })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, v: Vec<f64>) -> Result<()> {
        if v.len() != self.velocity.len() {
            return Err(Error::Shape(format!("velocity of {} values, expected {}", v.len(), self.velocity.len())));
        }
        self.velocity = v;
        Ok(())
    }

    /// `v <- momentum * v + grad + weight_decay * param; param <- param - lr * v`.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &Gradients) -> Result<()> {
        if grads.values.len() != params.len() || self.velocity.len() != params.len() {
            return Err(Error::Shape("gradient, velocity and parameter sizes differ".into()));
        }
        if grads.values.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradients".into()));
        }
        let (lr, mom, wd) = (self.lr, self.momentum, self.weight_decay);
        for ((p, v), g) in params.values_mut().iter_mut().zip(&mut self.velocity).zip(&grads.values) {
            *v = mom * *v + g + wd * *p;
            *p -= lr * *v;
        }
        Ok(())
    }
}

/// Moving-average update of the momentum encoder:
/// `theta_k <- m * theta_k + (1 - m) * theta_q`, evaluated as
/// `theta_q + m * (theta_k - theta_q)`.
pub fn momentum_update(key: &mut EncoderParams, query: &EncoderParams, m: f64) -> Result<()> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::param("momentum", format!("{m} not in [0,1)")));
    }
    if !key.same_shape(query) {
        return Err(Error::Shape("momentum and query encoders have different architectures".into()));
    }
    for (k, q) in key.values_mut().iter_mut().zip(&query.values) {
        *k = q + m * (*k - q);
    }
    Ok(())
}
