//! Flat `key = value` run configuration with dotted keys.
//!
//! Resolution order is defaults, then the config file, then command-line
//! overrides. `#` starts a comment. Every key is checked against the table
//! below; unknown keys and unparsable values are errors naming the key.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evalmetrics::ProbeConfig;
use crate::hclust::MaskStrategy;
use crate::train::{ClusterScope, TrainConfig, TOP_LEVEL};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub train_frac: f64,
    pub val_frac: f64,
    /// Cluster count of the flat K-means pairing the audit compares against.
    pub audit_baseline_k: usize,
    pub deterministic: bool,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            train_frac: 0.8,
            val_frac: 0.2,
            audit_baseline_k: 6,
            deterministic: false,
            threads: 0,
        }
    }
}

/// Every accepted key, in the order the resolved config is written.
pub const KEYS: &[&str] = &[
    "seed",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.sgd_momentum",
    "train.weight_decay",
    "train.m",
    "train.recluster_every",
    "train.checkpoint_every",
    "loss.tau",
    "loss.s_pos",
    "loss.s_neg",
    "loss.h_pos",
    "loss.h_neg",
    "loss.m_used",
    "mask.strategy",
    "mask.parameter",
    "mask.apply_at",
    "augment.weak_noise_sigma",
    "augment.weak_scale_sigma",
    "augment.strong_max_segments",
    "augment.strong_noise_sigma",
    "pairs.negative_level",
    "cluster.scope",
    "ablation.instance_contrast",
    "ablation.cluster_contrast",
    "ablation.hierarchical",
    "ablation.downward_masking",
    "ablation.flat_k",
    "encoder.channels",
    "encoder.kernels",
    "encoder.embed_dim",
    "probe.epochs",
    "probe.lr",
    "data.train_frac",
    "data.val_frac",
    "audit.baseline_k",
    "run.deterministic",
    "run.threads",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config { key: key.into(), message: format!("cannot parse `{value}`") })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config { key: key.into(), message: format!("expected a boolean, got `{value}`") }),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn join(xs: impl IntoIterator<Item = usize>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_level(key: &str, value: &str) -> Result<usize> {
    match value {
        "next" => Ok(0),
        "top" => Ok(TOP_LEVEL),
        v => parse(key, v),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "seed" => {
                t.seed = parse(key, v)?;
                self.probe.seed = t.seed;
            }
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.lr" => t.lr = parse(key, v)?,
            "train.sgd_momentum" => t.sgd_momentum = parse(key, v)?,
            "train.weight_decay" => t.weight_decay = parse(key, v)?,
            "train.m" => t.m = parse(key, v)?,
            "train.recluster_every" => t.recluster_every = parse(key, v)?,
            "train.checkpoint_every" => t.checkpoint_every = parse(key, v)?,
            "loss.tau" => t.loss.tau = parse(key, v)?,
            "loss.s_pos" => t.loss.s_pos = parse(key, v)?,
            "loss.s_neg" => t.loss.s_neg = parse(key, v)?,
            "loss.h_pos" => t.loss.h_pos = parse(key, v)?,
            "loss.h_neg" => t.loss.h_neg = parse(key, v)?,
            "loss.m_used" => t.loss.m_used = parse(key, v)?,
            "mask.strategy" => {
                t.mask.strategy =
                    v.parse::<MaskStrategy>().map_err(|e| Error::Config { key: key.into(), message: e.to_string() })?
            }
            "mask.parameter" => t.mask.parameter = parse(key, v)?,
            "mask.apply_at" => t.mask.apply_at = parse_list(key, v)?.into_iter().collect::<BTreeSet<_>>(),
            "augment.weak_noise_sigma" => t.augment.weak_noise_sigma = parse(key, v)?,
            "augment.weak_scale_sigma" => t.augment.weak_scale_sigma = parse(key, v)?,
            "augment.strong_max_segments" => t.augment.strong_max_segments = parse(key, v)?,
            "augment.strong_noise_sigma" => t.augment.strong_noise_sigma = parse(key, v)?,
            "pairs.negative_level" => t.negative_level = parse_level(key, v)?,
            "cluster.scope" => {
                t.scope = match v {
                    "full" => ClusterScope::Full,
                    "batch" => ClusterScope::Batch,
                    _ => return Err(Error::Config { key: key.into(), message: format!("expected full or batch, got `{v}`") }),
                }
            }
            "ablation.instance_contrast" => t.ablation.instance_contrast = parse_bool(key, v)?,
            "ablation.cluster_contrast" => t.ablation.cluster_contrast = parse_bool(key, v)?,
            "ablation.hierarchical" => t.ablation.hierarchical = parse_bool(key, v)?,
            "ablation.downward_masking" => t.ablation.downward_masking = parse_bool(key, v)?,
            "ablation.flat_k" => t.flat_k = parse(key, v)?,
            "encoder.channels" => t.channels = parse_list(key, v)?,
            "encoder.kernels" => t.kernels = parse_list(key, v)?,
            "encoder.embed_dim" => t.embed_dim = parse(key, v)?,
            "probe.epochs" => self.probe.epochs = parse(key, v)?,
            "probe.lr" => self.probe.lr = parse(key, v)?,
            "data.train_frac" => self.train_frac = parse(key, v)?,
            "data.val_frac" => self.val_frac = parse(key, v)?,
            "audit.baseline_k" => self.audit_baseline_k = parse(key, v)?,
            "run.deterministic" => self.deterministic = parse_bool(key, v)?,
            "run.threads" => self.threads = parse(key, v)?,
            other => return Err(Error::Config { key: other.into(), message: "unknown key".into() }),
        }
        Ok(())
    }

    /// Applies every assignment of a config text. Later lines win.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: format!("line {}", n + 1),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config { key: o.into(), message: "override must be key=value".into() })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Checks every constraint; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if t.channels.len() != t.kernels.len() || t.channels.is_empty() {
            return bad("encoder.kernels", "need one kernel width per conv block".into());
        }
        if t.embed_dim == 0 || t.channels.contains(&0) || t.kernels.contains(&0) {
            return bad("encoder.channels", "sizes must be >= 1".into());
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad("data.train_frac", format!("{} not in (0,1)", self.train_frac));
        }
        if !(self.val_frac >= 0.0 && self.val_frac < 1.0) {
            return bad("data.val_frac", format!("{} not in [0,1)", self.val_frac));
        }
        if self.audit_baseline_k == 0 {
            return bad("audit.baseline_k", "must be >= 1".into());
        }
        if !(self.probe.lr >= 0.0 && self.probe.lr.is_finite()) {
            return bad("probe.lr", format!("{} must be finite and >= 0", self.probe.lr));
        }
        t.augment.validate(usize::MAX).map_err(|e| keyed("augment", e))?;
        t.validate().map_err(|e| keyed("train", e))
    }

    /// Canonical text form; parsing it reproduces this config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let level = match t.negative_level {
            TOP_LEVEL => "top".to_string(),
            0 => "next".to_string(),
            l => l.to_string(),
        };
        let scope = match t.scope {
            ClusterScope::Full => "full",
            ClusterScope::Batch => "batch",
        };
        let values: Vec<String> = vec![
            t.seed.to_string(),
            t.epochs.to_string(),
            t.batch_size.to_string(),
            fmt_f(t.lr),
            fmt_f(t.sgd_momentum),
            fmt_f(t.weight_decay),
            fmt_f(t.m),
            t.recluster_every.to_string(),
            t.checkpoint_every.to_string(),
            fmt_f(t.loss.tau),
            t.loss.s_pos.to_string(),
            t.loss.s_neg.to_string(),
            t.loss.h_pos.to_string(),
            t.loss.h_neg.to_string(),
            t.loss.m_used.to_string(),
            t.mask.strategy.to_string(),
            fmt_f(t.mask.parameter),
            join(t.mask.apply_at.iter().copied()),
            fmt_f(t.augment.weak_noise_sigma),
            fmt_f(t.augment.weak_scale_sigma),
            t.augment.strong_max_segments.to_string(),
            fmt_f(t.augment.strong_noise_sigma),
            level,
            scope.to_string(),
            t.ablation.instance_contrast.to_string(),
            t.ablation.cluster_contrast.to_string(),
            t.ablation.hierarchical.to_string(),
            t.ablation.downward_masking.to_string(),
            t.flat_k.to_string(),
            join(t.channels.iter().copied()),
            join(t.kernels.iter().copied()),
            t.embed_dim.to_string(),
            self.probe.epochs.to_string(),
            fmt_f(self.probe.lr),
            fmt_f(self.train_frac),
            fmt_f(self.val_frac),
            self.audit_baseline_k.to_string(),
            self.deterministic.to_string(),
            self.threads.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Shortest text that parses back to the same f64.
fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

fn keyed(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParam { name, message } => {
            let key = if name.contains('.') { name.to_string() } else { format!("{prefix}.{name}") };
            Error::Config { key, message }
        }
        other => other,
    }
}

/// Defaults, then `file` (if any), then `overrides`; validated.
pub fn parse_config<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}
