//! Multivariate time-series datasets: loading, normalization, splitting,
//! augmentation and minibatching.
//!
//! Sequences are stored flat in instance-major, time-major, variable-minor
//! order, i.e. value `(i, t, v)` lives at `(i * T + t) * V + v`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};

pub const BINARY_MAGIC: &[u8; 4] = b"MHC1";

/// Channels whose standard deviation falls below this are treated as constant.
pub const MIN_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Binary,
    Csv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(DataFormat::Binary),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::param("format", format!("unknown data format `{other}`"))),
        }
    }
}

/// Per-channel z-normalization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Fits per-variable mean and (population) standard deviation.
    pub fn fit(ds: &TimeSeriesDataset) -> Self {
        let v = ds.vars;
        let mut sum = vec![0.0f64; v];
        let mut count = 0usize;
        for row in ds.data.chunks_exact(v) {
            for (s, x) in sum.iter_mut().zip(row) {
                *s += x;
            }
            count += 1;
        }
        let count = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let mut sq = vec![0.0f64; v];
        for row in ds.data.chunks_exact(v) {
            for ((s, x), m) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, ds: &mut TimeSeriesDataset) -> Result<()> {
        if self.mean.len() != ds.vars {
            return Err(Error::Shape(format!(
                "normalization has {} channels, dataset has {}",
                self.mean.len(),
                ds.vars
            )));
        }
        for row in ds.data.chunks_exact_mut(self.mean.len()) {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        ds.normalization = Some(self.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    len: usize,
    steps: usize,
    vars: usize,
    data: Vec<f64>,
    labels: Option<Vec<usize>>,
    ids: Vec<usize>,
    normalization: Option<Normalization>,
}

impl TimeSeriesDataset {
    pub fn new(
        len: usize,
        steps: usize,
        vars: usize,
        data: Vec<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if steps == 0 || vars == 0 {
            return Err(Error::Shape(format!("T={steps} and V={vars} must be positive")));
        }
        if data.len() != len * steps * vars {
            return Err(Error::Shape(format!(
                "{} values do not match N={len}, T={steps}, V={vars}",
                data.len()
            )));
        }
        let per = steps * vars;
        for i in 0..len {
            if let Some(p) = data[i * per..(i + 1) * per].iter().position(|x| !x.is_finite()) {
                return Err(Error::format(
                    format!("instance {i}"),
                    format!("non-finite value at t={}, v={}", p / vars, p % vars),
                ));
            }
        }
        if let Some(l) = &labels {
            if l.len() != len {
                return Err(Error::Shape(format!("{} labels for {len} instances", l.len())));
            }
        }
        Ok(Self {
            len,
            steps,
            vars,
            data,
            labels,
            ids: (0..len).collect(),
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn instance_len(&self) -> usize {
        self.steps * self.vars
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One `T x V` sequence, time-major.
    pub fn instance(&self, i: usize) -> &[f64] {
        let per = self.instance_len();
        &self.data[i * per..(i + 1) * per]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.as_ref().and_then(|l| l.iter().max()).map_or(0, |m| m + 1)
    }

    /// Copy of the dataset with labels removed, for label-free training paths.
    pub fn without_labels(&self) -> Self {
        Self { labels: None, ..self.clone() }
    }

    /// Rows `idx` in the given order; ids are carried over.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let per = self.instance_len();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(self.instance(i));
        }
        Self {
            len: idx.len(),
            steps: self.steps,
            vars: self.vars,
            data,
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            normalization: self.normalization.clone(),
        }
    }
}

// ── Container I/O ───────────────────────────────────────────────────────────

/// Reads a dataset and z-normalizes every channel with statistics over the
/// whole file. Pipelines that split first should use [`load_raw`] and fit a
/// [`Normalization`] on the training portion instead.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<TimeSeriesDataset> {
    let mut ds = load_raw(path, format)?;
    let norm = Normalization::fit(&ds);
    norm.apply(&mut ds)?;
    Ok(ds)
}

pub fn load_raw(path: &Path, format: DataFormat) -> Result<TimeSeriesDataset> {
    match format {
        DataFormat::Binary => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            read_binary(BufReader::new(file))
        }
        DataFormat::Csv => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            read_csv(BufReader::new(file))
        }
    }
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::format("header", format!("truncated before {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_binary(mut r: impl Read) -> Result<TimeSeriesDataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::format("header", "file shorter than magic"))?;
    if &magic != BINARY_MAGIC {
        return Err(Error::format("header", format!("bad magic {magic:?}, expected \"MHC1\"")));
    }
    let n = read_u32(&mut r, "N")? as usize;
    let t = read_u32(&mut r, "T")? as usize;
    let v = read_u32(&mut r, "V")? as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(|_| Error::format("header", "missing label flag"))?;
    let has_labels = match flag[0] {
        0 => false,
        1 => true,
        other => return Err(Error::format("header", format!("label flag must be 0 or 1, got {other}"))),
    };
    if t == 0 || v == 0 {
        return Err(Error::format("header", format!("T={t} and V={v} must be positive")));
    }
    let per = t * v;
    let mut data = Vec::with_capacity(n * per);
    let mut buf = [0u8; 4];
    for i in 0..n {
        for k in 0..per {
            r.read_exact(&mut buf).map_err(|_| {
                Error::format(format!("instance {i}"), "truncated value block")
            })?;
            let x = f32::from_le_bytes(buf);
            if !x.is_finite() {
                return Err(Error::format(
                    format!("instance {i}"),
                    format!("non-finite value at t={}, v={}", k / v, k % v),
                ));
            }
            data.push(x as f64);
        }
    }
    let labels = if has_labels {
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            r.read_exact(&mut buf)
                .map_err(|_| Error::format(format!("label {i}"), "truncated label block"))?;
            let l = i32::from_le_bytes(buf);
            if l < 0 {
                return Err(Error::format(format!("label {i}"), format!("negative label {l}")));
            }
            labels.push(l as usize);
        }
        Some(labels)
    } else {
        None
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| Error::format("trailer", e.to_string()))?;
    if !rest.is_empty() {
        return Err(Error::format("trailer", format!("{} unexpected trailing bytes", rest.len())));
    }
    TimeSeriesDataset::new(n, t, v, data, labels)
}

/// Writes the binary container. Values are narrowed to 32-bit floats.
pub fn write_binary(ds: &TimeSeriesDataset, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    for x in [ds.len, ds.steps, ds.vars] {
        w.write_all(&(x as u32).to_le_bytes())?;
    }
    w.write_all(&[u8::from(ds.labels.is_some())])?;
    for x in &ds.data {
        w.write_all(&(*x as f32).to_le_bytes())?;
    }
    if let Some(labels) = &ds.labels {
        for &l in labels {
            w.write_all(&(l as i32).to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_binary(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_binary(ds, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

/// Parses the CSV layout: one row per (instance, timestep) with columns
/// `id, t, v1..vV` and an optional trailing `label`. A header row is
/// required; the label column is detected by its name.
pub fn read_csv(r: impl Read) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::format("header", e.to_string()))?.clone();
    let has_label = headers.iter().last().is_some_and(|h| h.eq_ignore_ascii_case("label"));
    let value_cols = headers.len().checked_sub(2 + usize::from(has_label)).unwrap_or(0);
    if headers.len() < 3 || value_cols == 0 {
        return Err(Error::format("header", "expected columns id, t, v1..vV[, label]"));
    }

    // Rows are grouped by id in order of first appearance.
    let mut order: Vec<i64> = Vec::new();
    let mut rows: std::collections::HashMap<i64, Vec<(i64, Vec<f64>, Option<i64>)>> =
        std::collections::HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(format!("row {}", line + 1), e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(Error::format(
                format!("row {}", line + 1),
                format!("{} fields, expected {}", rec.len(), headers.len()),
            ));
        }
        let parse_int = |s: &str, what: &str| -> Result<i64> {
            s.parse::<i64>()
                .map_err(|_| Error::format(format!("row {}", line + 1), format!("bad {what} `{s}`")))
        };
        let id = parse_int(&rec[0], "id")?;
        let t = parse_int(&rec[1], "t")?;
        let mut values = Vec::with_capacity(value_cols);
        for k in 0..value_cols {
            let s = &rec[2 + k];
            let x: f64 = s.parse().map_err(|_| {
                Error::format(format!("instance {id}"), format!("bad value `{s}` at t={t}"))
            })?;
            if !x.is_finite() {
                return Err(Error::format(
                    format!("instance {id}"),
                    format!("non-finite value at t={t}, v={k}"),
                ));
            }
            values.push(x);
        }
        let label = if has_label { Some(parse_int(&rec[2 + value_cols], "label")?) } else { None };
        rows.entry(id)
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push((t, values, label));
    }
    if order.is_empty() {
        return Err(Error::format("body", "no data rows"));
    }

    let steps = rows[&order[0]].len();
    let mut data = Vec::with_capacity(order.len() * steps * value_cols);
    let mut labels = Vec::with_capacity(order.len());
    for id in &order {
        let mut inst = rows.remove(id).unwrap_or_default();
        if inst.len() != steps {
            return Err(Error::format(
                format!("instance {id}"),
                format!("{} timesteps, expected {steps}", inst.len()),
            ));
        }
        inst.sort_by_key(|(t, _, _)| *t);
        for (k, (t, _, _)) in inst.iter().enumerate() {
            if *t != k as i64 {
                return Err(Error::format(format!("instance {id}"), format!("timestep {t} out of sequence")));
            }
        }
        let first_label = inst[0].2;
        if inst.iter().any(|(_, _, l)| *l != first_label) {
            return Err(Error::format(format!("instance {id}"), "label changes across timesteps"));
        }
        if let Some(l) = first_label {
            if l < 0 {
                return Err(Error::format(format!("instance {id}"), format!("negative label {l}")));
            }
            labels.push(l as usize);
        }
        for (_, values, _) in inst {
            data.extend(values);
        }
    }
    TimeSeriesDataset::new(order.len(), steps, value_cols, data, has_label.then_some(labels))
}

pub fn write_csv(ds: &TimeSeriesDataset, w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string(), "t".to_string()];
    header.extend((1..=ds.vars).map(|k| format!("v{k}")));
    if ds.labels.is_some() {
        header.push("label".into());
    }
    let csv_err = |e: csv::Error| Error::format("csv output", e.to_string());
    wr.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.len {
        let x = ds.instance(i);
        for t in 0..ds.steps {
            let mut rec = vec![ds.ids[i].to_string(), t.to_string()];
            rec.extend(x[t * ds.vars..(t + 1) * ds.vars].iter().map(|v| v.to_string()));
            if let Some(l) = &ds.labels {
                rec.push(l[i].to_string());
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
    }
    wr.flush().map_err(|e| Error::format("csv output", e.to_string()))
}

// ── Splitting ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Split {
    pub train: TimeSeriesDataset,
    pub val: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
}

/// Shuffled train/val/test split. `train_frac` of N goes to training (with
/// `val_frac` of that carved out for validation), the rest is test.
pub fn split(ds: &TimeSeriesDataset, train_frac: f64, val_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::param("train_frac", format!("{train_frac} not in (0,1)")));
    }
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::param("val_frac", format!("{val_frac} not in (0,1)")));
    }
    let n = ds.len();
    let n_train_all = (n as f64 * train_frac).round() as usize;
    let n_val = (n_train_all as f64 * val_frac).round() as usize;
    let n_train = n_train_all.saturating_sub(n_val);
    let n_test = n - n_train_all.min(n);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::param(
            "split",
            format!("N={n} too small: train={n_train}, val={n_val}, test={n_test}"),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Stream::Split, &[]));
    Ok(Split {
        train: ds.subset(&idx[..n_train]),
        val: ds.subset(&idx[n_train..n_train_all]),
        test: ds.subset(&idx[n_train_all..]),
    })
}

// ── Augmentation ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub weak_noise_sigma: f64,
    pub weak_scale_sigma: f64,
    pub strong_max_segments: usize,
    pub strong_noise_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            weak_noise_sigma: 0.05,
            weak_scale_sigma: 0.1,
            strong_max_segments: 8,
            strong_noise_sigma: 0.08,
            seed: 0,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self, steps: usize) -> Result<()> {
        for (name, s) in [
            ("weak_noise_sigma", self.weak_noise_sigma),
            ("weak_scale_sigma", self.weak_scale_sigma),
            ("strong_noise_sigma", self.strong_noise_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param(name, format!("{s} must be finite and >= 0")));
            }
        }
        if self.strong_max_segments == 0 || self.strong_max_segments > steps {
            return Err(Error::param(
                "strong_max_segments",
                format!("{} not in [1, T={steps}]", self.strong_max_segments),
            ));
        }
        Ok(())
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    // sigma is validated non-negative and finite
    Normal::new(0.0, sigma).expect("valid sigma")
}

/// Jitter-and-scale: `x * s + eps`, one scale per channel.
pub fn weak_augment(x: &[f64], vars: usize, p: &AugmentParams, rng: &mut Rng) -> Vec<f64> {
    let scale_dist = normal(p.weak_scale_sigma);
    let noise = normal(p.weak_noise_sigma);
    let scales: Vec<f64> = (0..vars).map(|_| 1.0 + scale_dist.sample(rng)).collect();
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(vars) {
        for (v, s) in row.iter().zip(&scales) {
            out.push(v * s + noise.sample(rng));
        }
    }
    out
}

/// Reassembles time rows: segments delimited by sorted `cuts` are emitted in
/// `order`.
pub fn permute_segments(x: &[f64], vars: usize, cuts: &[usize], order: &[usize]) -> Vec<f64> {
    let steps = x.len() / vars;
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(cuts);
    bounds.push(steps);
    let mut out = Vec::with_capacity(x.len());
    for &seg in order {
        out.extend_from_slice(&x[bounds[seg] * vars..bounds[seg + 1] * vars]);
    }
    out
}

/// Permutation-and-jitter.
pub fn strong_augment(x: &[f64], vars: usize, p: &AugmentParams, rng: &mut Rng) -> Vec<f64> {
    let steps = x.len() / vars;
    let max_k = p.strong_max_segments.clamp(1, steps.max(1));
    let k = rng.random_range(1..=max_k);
    let mut out = if k > 1 {
        let mut cuts = rand::seq::index::sample(rng, steps - 1, k - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect::<Vec<_>>();
        cuts.sort_unstable();
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(rng);
        permute_segments(x, vars, &cuts, &order)
    } else {
        x.to_vec()
    };
    let noise = normal(p.strong_noise_sigma);
    for v in &mut out {
        *v += noise.sample(rng);
    }
    out
}

// ── Minibatches ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Batch {
    pub raw: Vec<f64>,
    pub view_a: Vec<f64>,
    pub view_b: Vec<f64>,
    /// Positions into the dataset the batch was drawn from.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Iterator over the minibatches of one epoch.
pub struct Minibatches<'a> {
    ds: &'a TimeSeriesDataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
    params: AugmentParams,
    epoch: u64,
}

impl Iterator for Minibatches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let per = self.ds.instance_len();
        let vars = self.ds.vars();
        let mut batch = Batch {
            raw: Vec::with_capacity(indices.len() * per),
            view_a: Vec::with_capacity(indices.len() * per),
            view_b: Vec::with_capacity(indices.len() * per),
            indices,
        };
        for &i in &batch.indices {
            let x = self.ds.instance(i);
            let coords = [self.epoch, i as u64];
            let mut weak = rng::stream(self.params.seed, Stream::AugmentWeak, &coords);
            let mut strong = rng::stream(self.params.seed, Stream::AugmentStrong, &coords);
            batch.raw.extend_from_slice(x);
            batch.view_a.extend(weak_augment(x, vars, &self.params, &mut weak));
            batch.view_b.extend(strong_augment(x, vars, &self.params, &mut strong));
        }
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.cursor).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

/// Batches covering every instance once. Augmentations are drawn from
/// streams keyed by `(params.seed, epoch, index)`, the shuffle from
/// `(seed, epoch)`.
pub fn minibatches<'a>(
    ds: &'a TimeSeriesDataset,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: u64,
    params: &AugmentParams,
) -> Result<Minibatches<'a>> {
    if batch_size < 2 {
        return Err(Error::param("batch_size", format!("{batch_size} < 2")));
    }
    if batch_size > ds.len() {
        return Err(Error::param("batch_size", format!("{batch_size} exceeds N={}", ds.len())));
    }
    params.validate(ds.steps())?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        order.shuffle(&mut rng::stream(seed, Stream::Shuffle, &[epoch]));
    }
    Ok(Minibatches { ds, order, batch_size, cursor: 0, params: params.clone(), epoch })
}
