//! Command-line front end: `pretrain`, `evaluate`, `cluster`, `audit-pairs`.
//!
//! Every subcommand writes only inside `--out`, starting with the resolved
//! config as `config.txt`. Failures print one JSON line on stderr and exit 1.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_config, RunConfig};
use crate::dataset::{load_raw, split, DataFormat, Normalization, Split, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::evalmetrics::{evaluate, false_pair_audit, linear_probe_train, MetricsReport};
use crate::hclust::{build_hierarchy, read_partitions_csv, write_partitions_csv};
use crate::matrix::Matrix;
use crate::pairsel::{read_decisions_csv, write_decisions_csv};
use crate::synth::{blob_time_series, hierarchical_blobs, BlobSpec, SeriesSpec};
use crate::train::{
    embed_all, load_checkpoint, pairing_audit, pretrain, probe_features, PairingAudit, RunPaths, TrainState,
};

#[derive(Debug, Parser)]
#[command(name = "mhccl", version, about = "Masked hierarchical cluster-wise contrastive learning")]
pub struct Cli {
    /// `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = "mhccl-run")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded everywhere.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Config override `key=value`, repeatable; applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Use generated hierarchical blobs instead of `--data`.
    #[arg(long, global = true, num_args = 3, value_names = ["N", "CLASSES", "DEPTH"])]
    pub demo_blobs: Option<Vec<usize>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `binary` or `csv`; guessed from the extension when absent.
    #[arg(long)]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-supervised pretraining; writes checkpoints and a JSONL log.
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Linear probe on frozen embeddings of the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Hierarchy of an embedding matrix (container with T = 1).
    Cluster {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        format: Option<DataFormat>,
    },
    /// False-negative audit of MHCCL pairing against flat K-means pairing.
    ///
    /// Either pairs the features of `--data` (momentum-encoder embeddings
    /// with `--checkpoint`, raw values without), or audits decision and
    /// partition CSVs written by an earlier run.
    AuditPairs {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires_all = ["assignments", "baseline_decisions", "baseline_assignments"])]
        decisions: Option<PathBuf>,
        #[arg(long)]
        assignments: Option<PathBuf>,
        #[arg(long)]
        baseline_decisions: Option<PathBuf>,
        #[arg(long)]
        baseline_assignments: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Format { .. } => "format",
        Error::InvalidParam { .. } => "invalid_param",
        Error::Shape(_) => "shape",
        Error::NonFinite(_) => "non_finite",
        Error::StaleCache { .. } => "stale_cache",
        Error::EmptyCluster(_) => "empty_cluster",
        Error::ZeroVector => "zero_vector",
        Error::Config { .. } => "config",
        Error::Unsupported(_) => "unsupported",
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let line = ErrorLine { error: error_kind(&e), message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&line).unwrap_or_else(|_| e.to_string()));
            1
        }
    }
}

/// Resolves the config: defaults, file, `--set`, then the dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if cli.deterministic {
        overrides.push("run.deterministic=true".into());
    }
    if let Some(t) = cli.threads {
        overrides.push(format!("run.threads={t}"));
    }
    parse_config(cli.config.as_deref(), &overrides)
}

fn configure_threads(cfg: &RunConfig) {
    let threads = if cfg.deterministic { 1 } else { cfg.threads };
    // a second call in the same process fails; the first pool stays
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    configure_threads(&cfg);
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    write_file(&cli.out.join("config.txt"), cfg.to_text().as_bytes())?;
    let demo = demo_spec(cli)?;
    match &cli.command {
        Command::Pretrain { data, resume } => run_pretrain(&cfg, &cli.out, series(data, demo, &cfg)?, resume.as_deref()),
        Command::Evaluate { checkpoint, data } => run_evaluate(&cfg, &cli.out, series(data, demo, &cfg)?, checkpoint),
        Command::Cluster { embeddings, format } => {
            let ds = match (embeddings, demo) {
                (Some(p), _) => load_raw(p, format.unwrap_or_else(|| DataFormat::from_path(p)))?,
                (None, Some(spec)) => demo_points(&spec, cfg.train.seed)?,
                (None, None) => return Err(Error::param("embeddings", "pass --embeddings or --demo-blobs")),
            };
            run_cluster(&cfg, &cli.out, &ds)
        }
        Command::AuditPairs { data, checkpoint, decisions, assignments, baseline_decisions, baseline_assignments } => {
            match (decisions, assignments, baseline_decisions, baseline_assignments) {
                (Some(d), Some(a), Some(bd), Some(ba)) => {
                    let ds = labelled(data, demo, &cfg, false)?;
                    let audit = PairingAudit {
                        mhccl: read_decisions_csv(open(d)?)?,
                        mhccl_assign: read_partitions_csv(open(a)?)?,
                        baseline: read_decisions_csv(open(bd)?)?,
                        baseline_assign: read_partitions_csv(open(ba)?)?,
                    };
                    emit_audit(&cli.out, &audit, ds.labels(), false)
                }
                _ => {
                    let ds = labelled(data, demo, &cfg, checkpoint.is_some())?;
                    let features = match checkpoint {
                        Some(p) => embed_all(&load_checkpoint(p, Some(&cfg.train))?.key, &ds)?,
                        None => Matrix::from_vec(ds.len(), ds.instance_len(), ds.data().to_vec())?,
                    };
                    let audit = pairing_audit(&features, &cfg.train, cfg.audit_baseline_k)?;
                    emit_audit(&cli.out, &audit, ds.labels(), true)
                }
            }
        }
    }
}

fn demo_spec(cli: &Cli) -> Result<Option<(usize, usize, usize)>> {
    match cli.demo_blobs.as_deref() {
        None => Ok(None),
        Some(&[n, classes, depth]) => Ok(Some((n, classes, depth))),
        Some(_) => Err(Error::param("demo_blobs", "expects N CLASSES DEPTH")),
    }
}

/// Blob points as a dataset with T = 1.
fn demo_points(spec: &(usize, usize, usize), seed: u64) -> Result<TimeSeriesDataset> {
    let (x, y) = hierarchical_blobs(&BlobSpec::new(spec.0, spec.1, spec.2), seed)?;
    TimeSeriesDataset::new(x.rows(), 1, x.cols(), x.as_slice().to_vec(), Some(y))
}

fn load(data: &DataArgs) -> Result<TimeSeriesDataset> {
    let p = data.data.as_ref().ok_or_else(|| Error::param("data", "pass --data or --demo-blobs"))?;
    load_raw(p, data.format.unwrap_or_else(|| DataFormat::from_path(p)))
}

/// Training/evaluation series: the file (or demo series) split by the run
/// seed, with every part normalized by training-split statistics.
fn series(data: &DataArgs, demo: Option<(usize, usize, usize)>, cfg: &RunConfig) -> Result<Split> {
    let ds = match (&data.data, demo) {
        (None, Some((n, classes, depth))) => blob_time_series(&SeriesSpec::new(n, classes, depth), cfg.train.seed)?,
        _ => load(data)?,
    };
    let mut parts = split(&ds, cfg.train_frac, cfg.val_frac, cfg.train.seed)?;
    let norm = Normalization::fit(&parts.train);
    for part in [&mut parts.train, &mut parts.val, &mut parts.test] {
        norm.apply(part)?;
    }
    Ok(parts)
}

/// Whole labelled dataset for the audit: series when they go through an
/// encoder, blob points otherwise.
fn labelled(
    data: &DataArgs,
    demo: Option<(usize, usize, usize)>,
    cfg: &RunConfig,
    encoded: bool,
) -> Result<TimeSeriesDataset> {
    let ds = match (&data.data, demo) {
        (None, Some((n, classes, depth))) if encoded => {
            blob_time_series(&SeriesSpec::new(n, classes, depth), cfg.train.seed)?
        }
        (None, Some(spec)) => demo_points(&spec, cfg.train.seed)?,
        _ => load(data)?,
    };
    if ds.labels().is_none() {
        return Err(Error::param("data", "the audit needs labels"));
    }
    Ok(ds)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn run_pretrain(cfg: &RunConfig, out: &Path, data: Split, resume: Option<&Path>) -> Result<()> {
    let resume = resume.map(|p| load_checkpoint(p, Some(&cfg.train))).transpose()?;
    let state = pretrain(&cfg.train, &data.train, Some(&RunPaths::new(out)), resume)?;
    match state.history.last() {
        Some(r) => println!("pretrained {} epochs ({} steps), final loss {:.6}", state.epoch, state.step, r.total),
        None => println!("pretrained {} epochs ({} steps)", state.epoch, state.step),
    }
    Ok(())
}

fn probe_report(cfg: &RunConfig, state: &TrainState, data: &Split) -> Result<MetricsReport> {
    let labels = |ds: &TimeSeriesDataset| {
        ds.labels().map(<[usize]>::to_vec).ok_or_else(|| Error::param("data", "evaluation needs labels"))
    };
    let train = probe_features(&state.query, &data.train)?;
    let test = probe_features(&state.query, &data.test)?;
    let probe = linear_probe_train(&train, &labels(&data.train)?, &cfg.probe)?;
    evaluate(&probe, &test, &labels(&data.test)?)
}

fn run_evaluate(cfg: &RunConfig, out: &Path, data: Split, checkpoint: &Path) -> Result<()> {
    let state = load_checkpoint(checkpoint, Some(&cfg.train))?;
    let report = probe_report(cfg, &state, &data)?;
    let text = json(&report);
    write_file(&out.join("metrics.json"), text.as_bytes())?;
    write_file(&out.join("confusion.csv"), report.confusion.to_csv().as_bytes())?;
    println!("{text}");
    Ok(())
}

fn run_cluster(cfg: &RunConfig, out: &Path, ds: &TimeSeriesDataset) -> Result<()> {
    let points = Matrix::from_vec(ds.len(), ds.instance_len(), ds.data().to_vec())?;
    let h = build_hierarchy(&points, &cfg.train.mask)?;
    let path = out.join("clusters.csv");
    let mut w = create(&path)?;
    write_partitions_csv(&h, ds.ids(), &mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    let ks: Vec<usize> = h.partitions().iter().map(|p| p.k).collect();
    println!("{} partitions, cluster counts {ks:?}", h.len());
    Ok(())
}

fn emit_audit(out: &Path, audit: &PairingAudit, labels: Option<&[usize]>, write_pairs: bool) -> Result<()> {
    if write_pairs {
        let ids: Vec<usize> = (0..labels.map_or(0, <[usize]>::len)).collect();
        for (name, decisions) in [("decisions.csv", &audit.mhccl), ("baseline_decisions.csv", &audit.baseline)] {
            let path = out.join(name);
            let mut w = create(&path)?;
            write_decisions_csv(decisions, &mut w)?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        for (name, assign) in [("assignments.csv", &audit.mhccl_assign), ("baseline_assignments.csv", &audit.baseline_assign)] {
            write_file(&out.join(name), assignments_csv(assign, &ids).as_bytes())?;
        }
    }
    let report = false_pair_audit((&audit.mhccl, &audit.mhccl_assign), (&audit.baseline, &audit.baseline_assign), labels)?;
    let text = json(&report);
    write_file(&out.join("audit.json"), text.as_bytes())?;
    println!("{text}");
    Ok(())
}

/// Assignments in the cluster CSV layout; masking is not tracked here and
/// written as 0.
fn assignments_csv(assign: &[Vec<usize>], ids: &[usize]) -> String {
    let mut s = String::from("partition,instance_id,cluster_id,masked\n");
    for (p, part) in assign.iter().enumerate() {
        for (i, c) in part.iter().enumerate() {
            s.push_str(&format!("{},{},{c},0\n", p + 1, ids[i]));
        }
    }
    s
}
