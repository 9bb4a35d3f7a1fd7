//! Training loop: embed, cluster, select pairs, contrast, update.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{minibatches, AugmentParams, Batch, TimeSeriesDataset};
use crate::encoder::{backward, embed, forward, momentum_update, ArchConfig, EncoderParams, Sgd};
use crate::error::{Error, Result};
use crate::evalmetrics::{false_pair_audit, kmeans, Assignments, AuditReport};
use crate::hclust::{build_hierarchy, compute_prototypes, ClusterHierarchy, MaskConfig, Partition};
use crate::loss::{anchor_loss, overall_loss, LossBreakdown, LossConfig};
use crate::matrix::Matrix;
use crate::pairsel::{batch_pairs, epoch_decisions, BatchPairs, PairDecision, PairOptions};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MHCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// `negative_level` value meaning "the top partition".
pub const TOP_LEVEL: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub instance_contrast: bool,
    pub cluster_contrast: bool,
    /// Off: a single flat K-means partition replaces the hierarchy.
    pub hierarchical: bool,
    pub downward_masking: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { instance_contrast: true, cluster_contrast: true, hierarchical: true, downward_masking: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterScope {
    /// Cluster the whole training set once per reclustering.
    Full,
    /// Cluster each minibatch on its own.
    Batch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    /// Momentum-encoder coefficient.
    pub m: f64,
    pub recluster_every: usize,
    /// Save a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    pub loss: LossConfig,
    pub mask: MaskConfig,
    pub augment: AugmentParams,
    /// 1-based partition bounding negatives under downward masking.
    pub negative_level: usize,
    /// Cluster count of the flat partition used without hierarchy.
    pub flat_k: usize,
    pub ablation: Ablation,
    pub scope: ClusterScope,
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            lr: 3e-5,
            sgd_momentum: 0.9,
            weight_decay: 1e-4,
            m: 0.999,
            recluster_every: 1,
            checkpoint_every: 0,
            loss: LossConfig::default(),
            mask: MaskConfig::default(),
            augment: AugmentParams::default(),
            negative_level: TOP_LEVEL,
            flat_k: 6,
            ablation: Ablation::default(),
            scope: ClusterScope::Full,
            channels: vec![32, 64, 128],
            kernels: vec![8, 5, 3],
            embed_dim: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::param("train.batch_size", "must be >= 2"));
        }
        if self.recluster_every == 0 {
            return Err(Error::param("train.recluster_every", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.m) {
            return Err(Error::param("train.m", format!("{} not in [0,1)", self.m)));
        }
        if self.flat_k == 0 {
            return Err(Error::param("ablation.flat_k", "must be >= 1"));
        }
        Sgd::new(self.lr, self.sgd_momentum, self.weight_decay, 0)?;
        self.loss.validate()?;
        self.mask.validate()
    }

    pub fn arch(&self, ds: &TimeSeriesDataset) -> Result<ArchConfig> {
        let arch = ArchConfig {
            in_channels: ds.vars(),
            seq_len: ds.steps(),
            channels: self.channels.clone(),
            kernels: self.kernels.clone(),
            embed_dim: self.embed_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    fn pair_options(&self) -> PairOptions {
        PairOptions {
            instance: self.ablation.instance_contrast,
            cluster: self.ablation.cluster_contrast,
            downward_masking: self.ablation.downward_masking && self.ablation.hierarchical,
            negative_level: self.negative_level,
        }
    }
}

/// One optimizer step as logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub total: f64,
    pub instance_part: f64,
    pub cluster_part: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub seed: u64,
    pub query: EncoderParams,
    pub key: EncoderParams,
    pub velocity: Vec<f64>,
    /// Features the current hierarchy was built from, and the epoch it was
    /// built at. The hierarchy itself is rebuilt from them on load.
    pub cluster_features: Option<(usize, Matrix)>,
    pub hierarchy: Option<ClusterHierarchy>,
    pub history: Vec<StepRecord>,
}

impl TrainState {
    /// Fresh state: the momentum encoder starts as a copy of the query.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let query = EncoderParams::init(arch, seed)?;
        let key = EncoderParams::from_values(arch, query.values().to_vec())?;
        Ok(Self {
            epoch: 0,
            step: 0,
            seed,
            velocity: vec![0.0; query.len()],
            query,
            key,
            cluster_features: None,
            hierarchy: None,
            history: Vec::new(),
        })
    }

    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in &self.history {
            let e = r.epoch as usize;
            if out.len() <= e {
                out.resize(e + 1, (0.0, 0));
            }
            out[e].0 += r.total;
            out[e].1 += 1;
        }
        out.into_iter().map(|(s, c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
    }
}

/// L2-normalized momentum-encoder embeddings of every raw sequence.
pub fn embed_all(key: &EncoderParams, ds: &TimeSeriesDataset) -> Result<Matrix> {
    const CHUNK: usize = 256;
    let d = key.arch().embed_dim;
    let mut data = Vec::with_capacity(ds.len() * d);
    let per = ds.instance_len();
    for start in (0..ds.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(ds.len());
        let e = embed(key, &ds.data()[start * per..end * per], end - start)?;
        data.extend_from_slice(e.as_slice());
    }
    Ok(Matrix::from_vec(ds.len(), d, data)?.l2_normalized())
}

/// Single-partition stand-in for the hierarchy.
pub fn flat_hierarchy(features: &Matrix, k: usize, seed: u64) -> Result<ClusterHierarchy> {
    let k = k.min(features.rows());
    let km = kmeans(features, k, 100, seed)?;
    let proto = compute_prototypes(features, &km.labels, k)?;
    let part = Partition {
        masked: vec![false; km.labels.len()],
        labels: km.labels,
        k,
        prototypes_refined: proto.clone(),
        prototypes_original: proto,
        parent_of_cluster: None,
    };
    ClusterHierarchy::from_partitions(features.clone(), vec![part])
}

pub fn cluster_features(features: &Matrix, cfg: &TrainConfig, seed: u64) -> Result<ClusterHierarchy> {
    if features.rows() < 2 {
        return ClusterHierarchy::from_partitions(features.clone(), Vec::new());
    }
    if cfg.ablation.hierarchical {
        build_hierarchy(features, &cfg.mask)
    } else {
        flat_hierarchy(features, cfg.flat_k, seed)
    }
}

/// Loss and embedding gradients for one batch, without touching parameters.
pub fn batch_loss(
    za: &Matrix,
    hb: &Matrix,
    h: &ClusterHierarchy,
    members: &[usize],
    cfg: &TrainConfig,
    coords: &[u64],
) -> Result<(LossBreakdown, BatchPairs)> {
    let opts = cfg.pair_options();
    let pairs = batch_pairs(h, members, &cfg.loss, &opts, cfg.seed, coords)?;
    let b = members.len();
    let anchors = (0..b)
        .into_par_iter()
        .map(|pos| {
            anchor_loss(
                pos,
                za,
                hb,
                pairs.instance.get(pos),
                pairs.cluster.get(pos).map(|c| (c, h)),
                &cfg.loss,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((overall_loss(b, za.cols(), &anchors)?, pairs))
}

/// One optimizer step on `batch`. Parameters are only modified once the
/// loss and gradients are known to be finite.
pub fn train_step(state: &mut TrainState, batch: &Batch, cfg: &TrainConfig, opt: &mut Sgd) -> Result<StepRecord> {
    let b = batch.len();
    let (za, cache) = forward(&state.query, &batch.view_a, b)?;
    let hb = embed(&state.key, &batch.view_b, b)?;

    let local;
    let (h, members): (&ClusterHierarchy, Vec<usize>) = match cfg.scope {
        ClusterScope::Full => {
            let h = state.hierarchy.as_ref().ok_or_else(|| Error::Unsupported("no hierarchy built".into()))?;
            (h, batch.indices.clone())
        }
        ClusterScope::Batch => {
            let feats = embed(&state.key, &batch.raw, b)?.l2_normalized();
            local = cluster_features(&feats, cfg, cfg.seed ^ state.step)?;
            (&local, (0..b).collect())
        }
    };
    let coords = [state.epoch as u64, state.step];
    let (loss, _) = batch_loss(&za, &hb, h, &members, cfg, &coords)?;
    let grads = backward(&state.query, &cache, &loss.grad)?;
    let grad_norm = grads.norm();
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite(format!("gradients at step {}", state.step)));
    }
    opt.step(&mut state.query, &grads)?;
    momentum_update(&mut state.key, &state.query, cfg.m)?;
    state.velocity = opt.velocity().to_vec();
    let rec = StepRecord {
        step: state.step,
        epoch: state.epoch as u64,
        total: loss.total,
        instance_part: loss.instance_part,
        cluster_part: loss.cluster_part,
        grad_norm,
    };
    state.history.push(rec);
    state.step += 1;
    Ok(rec)
}

fn optimizer(state: &TrainState, cfg: &TrainConfig) -> Result<Sgd> {
    let mut opt = Sgd::new(cfg.lr, cfg.sgd_momentum, cfg.weight_decay, state.query.len())?;
    opt.set_velocity(state.velocity.clone())?;
    Ok(opt)
}

/// Reclusters if due, then runs every batch of the epoch. Returns the new
/// step records.
pub fn train_epoch(state: &mut TrainState, ds: &TimeSeriesDataset, cfg: &TrainConfig) -> Result<Vec<StepRecord>> {
    let epoch = state.epoch;
    if cfg.scope == ClusterScope::Full {
        let due = epoch % cfg.recluster_every == 0 || state.hierarchy.is_none();
        if due {
            let feats = embed_all(&state.key, ds)?;
            state.hierarchy = Some(cluster_features(&feats, cfg, cfg.seed ^ epoch as u64)?);
            state.cluster_features = Some((epoch, feats));
        }
    }
    let mut opt = optimizer(state, cfg)?;
    let b = cfg.batch_size.min(ds.len());
    let mut records = Vec::new();
    let augment = AugmentParams { seed: cfg.seed, ..cfg.augment.clone() };
    for batch in minibatches(ds, b, true, cfg.seed, epoch as u64, &augment)? {
        records.push(train_step(state, &batch, cfg, &mut opt)?);
    }
    state.epoch += 1;
    Ok(records)
}

/// One epoch of pair decisions under MHCCL pairing and under flat K-means
/// pairing, both over the same features.
#[derive(Debug, Clone)]
pub struct PairingAudit {
    pub mhccl: Vec<PairDecision>,
    pub mhccl_assign: Assignments,
    pub baseline: Vec<PairDecision>,
    pub baseline_assign: Assignments,
}

impl PairingAudit {
    pub fn report(&self, labels: Option<&[usize]>) -> Result<AuditReport> {
        false_pair_audit((&self.mhccl, &self.mhccl_assign), (&self.baseline, &self.baseline_assign), labels)
    }
}

fn assignments(h: &ClusterHierarchy) -> Assignments {
    (0..h.len()).map(|p| h.instance_labels(p).to_vec()).collect()
}

/// Pairs every instance of `features` once under `cfg`'s pairing and once
/// under a flat K-means partition with `baseline_k` clusters.
pub fn pairing_audit(features: &Matrix, cfg: &TrainConfig, baseline_k: usize) -> Result<PairingAudit> {
    cfg.validate()?;
    let b = cfg.batch_size.min(features.rows());
    let h = cluster_features(features, cfg, cfg.seed)?;
    let mhccl = epoch_decisions(&h, b, &cfg.loss, &cfg.pair_options(), cfg.seed)?;
    let flat = flat_hierarchy(features, baseline_k, cfg.seed)?;
    let opts = PairOptions { downward_masking: false, ..cfg.pair_options() };
    let baseline = epoch_decisions(&flat, b, &cfg.loss, &opts, cfg.seed)?;
    Ok(PairingAudit { mhccl, mhccl_assign: assignments(&h), baseline, baseline_assign: assignments(&flat) })
}

/// Output locations of a pretraining run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.mhck")
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.dir.join(format!("checkpoint_epoch{epoch:04}.mhck"))
    }

    pub fn abort_checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint_abort.mhck")
    }

    pub fn log(&self) -> PathBuf {
        self.dir.join("train_log.jsonl")
    }
}

fn append_log(path: &Path, records: &[StepRecord]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains `ds` (labels are dropped) from `resume` or a fresh state up to
/// `cfg.epochs` epochs. With `out`, writes the log and checkpoints there; on
/// a failing epoch the last good state is saved as the abort checkpoint.
pub fn pretrain(
    cfg: &TrainConfig,
    ds: &TimeSeriesDataset,
    out: Option<&RunPaths>,
    resume: Option<TrainState>,
) -> Result<TrainState> {
    cfg.validate()?;
    let ds = ds.without_labels();
    let arch = cfg.arch(&ds)?;
    let mut state = match resume {
        Some(s) => {
            if s.query.arch() != &arch {
                return Err(Error::Shape("checkpoint architecture does not match the data/config".into()));
            }
            s
        }
        None => TrainState::init(&arch, cfg.seed)?,
    };
    if let Some(paths) = out {
        fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    }
    while state.epoch < cfg.epochs {
        let before = state.clone();
        match train_epoch(&mut state, &ds, cfg) {
            Ok(records) => {
                if let Some(paths) = out {
                    append_log(&paths.log(), &records)?;
                    if cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0 {
                        save_checkpoint(&state, &paths.epoch_checkpoint(state.epoch))?;
                    }
                }
            }
            Err(e) => {
                if let Some(paths) = out {
                    save_checkpoint(&before, &paths.abort_checkpoint())?;
                }
                return Err(e);
            }
        }
    }
    if let Some(paths) = out {
        save_checkpoint(&state, &paths.checkpoint())?;
    }
    Ok(state)
}

// ── Checkpoints ─────────────────────────────────────────────────────────────
//
// Layout (little-endian):
//   "MHCK" | u32 version
//   u32 n | n bytes of architecture key-value text
//   u64 n | n f64 query parameters (encoder tensor order)
//   u64 n | n f64 optimizer velocity
//   u64 n | n f64 momentum-encoder parameters
//   u64 epoch | u64 step | u64 seed
//   u8 has_features [u64 built_epoch | u64 rows | u64 cols | f64 values]
//   u64 n | n step records (u64 step, u64 epoch, 4 x f64)

fn put_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    buf.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_checkpoint(state: &TrainState) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let arch = state.query.arch().to_kv_text();
    buf.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    buf.extend_from_slice(arch.as_bytes());
    put_f64s(&mut buf, state.query.values());
    put_f64s(&mut buf, &state.velocity);
    put_f64s(&mut buf, state.key.values());
    for v in [state.epoch as u64, state.step, state.seed] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    match &state.cluster_features {
        None => buf.push(0),
        Some((epoch, m)) => {
            buf.push(1);
            for v in [*epoch as u64, m.rows() as u64, m.cols() as u64] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for x in m.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    buf.extend_from_slice(&(state.history.len() as u64).to_le_bytes());
    for r in &state.history {
        buf.extend_from_slice(&r.step.to_le_bytes());
        buf.extend_from_slice(&r.epoch.to_le_bytes());
        for x in [r.total, r.instance_part, r.cluster_part, r.grad_norm] {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        // every element needs at least 8 more bytes
        if n > (self.bytes.len() - self.pos) as u64 / 8 {
            return Err(Error::format("checkpoint", format!("{what} length {n} exceeds file size")));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.len(what)?;
        (0..n).map(|_| self.f64(what)).collect()
    }
}

/// Parses a checkpoint. The hierarchy is rebuilt from the stored features
/// with `cfg`, when given.
pub fn decode_checkpoint(bytes: &[u8], cfg: Option<&TrainConfig>) -> Result<TrainState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let n = r.u32("architecture length")? as usize;
    let text = std::str::from_utf8(r.take(n, "architecture")?)
        .map_err(|_| Error::format("checkpoint", "architecture text is not UTF-8"))?;
    let arch = ArchConfig::from_kv_text(text)?;
    let query = EncoderParams::from_values(&arch, r.f64s("query parameters")?)?;
    let velocity = r.f64s("velocity")?;
    let key = EncoderParams::from_values(&arch, r.f64s("momentum parameters")?)?;
    if velocity.len() != query.len() {
        return Err(Error::format("checkpoint", "velocity length does not match parameters"));
    }
    let epoch = r.u64("epoch")? as usize;
    let step = r.u64("step")?;
    let seed = r.u64("seed")?;
    let cluster_features = match r.take(1, "feature flag")?[0] {
        0 => None,
        1 => {
            let built = r.u64("feature epoch")? as usize;
            let rows = r.u64("feature rows")? as usize;
            let cols = r.u64("feature cols")? as usize;
            let count = rows.checked_mul(cols).ok_or_else(|| Error::format("checkpoint", "feature size overflow"))?;
            if count > (bytes.len() - r.pos) / 8 {
                return Err(Error::format("checkpoint", "feature matrix exceeds file size"));
            }
            let data = (0..count).map(|_| r.f64("features")).collect::<Result<Vec<_>>>()?;
            Some((built, Matrix::from_vec(rows, cols, data)?))
        }
        f => return Err(Error::format("checkpoint", format!("bad feature flag {f}"))),
    };
    let n = r.len("history")?;
    let mut history = Vec::with_capacity(n);
    for _ in 0..n {
        history.push(StepRecord {
            step: r.u64("history")?,
            epoch: r.u64("history")?,
            total: r.f64("history")?,
            instance_part: r.f64("history")?,
            cluster_part: r.f64("history")?,
            grad_norm: r.f64("history")?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let hierarchy = match (&cluster_features, cfg) {
        (Some((built, feats)), Some(cfg)) if cfg.scope == ClusterScope::Full => {
            Some(cluster_features_for(feats, cfg, *built)?)
        }
        _ => None,
    };
    Ok(TrainState { epoch, step, seed, query, key, velocity, cluster_features, hierarchy, history })
}

fn cluster_features_for(feats: &Matrix, cfg: &TrainConfig, built: usize) -> Result<ClusterHierarchy> {
    cluster_features(feats, cfg, cfg.seed ^ built as u64)
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(state);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, cfg: Option<&TrainConfig>) -> Result<TrainState> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, cfg)
}

/// Query-encoder embeddings of raw sequences, L2-normalized, for probing.
pub fn probe_features(params: &EncoderParams, ds: &TimeSeriesDataset) -> Result<Matrix> {
    embed_all(params, ds)
}
