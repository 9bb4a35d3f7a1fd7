//! Linear probe, classification metrics, K-means, and the false-negative
//! pair audit.

use std::cmp::Ordering;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, sq_dist, Matrix};
use crate::pairsel::{PairDecision, PairKind, Role};
use crate::rng::{stream, Stream};

// ── Confusion metrics ───────────────────────────────────────────────────────

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        let mut counts = vec![vec![0u64; classes]; classes];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= classes || p >= classes {
                return Err(Error::Shape(format!("class index outside [0, {classes})")));
            }
            counts[t][p] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, c: usize) -> i128 {
        self.counts[c].iter().map(|&x| x as i128).sum()
    }

    fn col_sum(&self, c: usize) -> i128 {
        self.counts.iter().map(|r| r[c] as i128).sum()
    }

    fn diag(&self) -> i128 {
        (0..self.classes()).map(|c| self.counts[c][c] as i128).sum()
    }

    pub fn accuracy_exact(&self) -> Ratio<i128> {
        let n = self.total() as i128;
        if n == 0 {
            return Ratio::zero();
        }
        Ratio::new(self.diag(), n)
    }

    /// Chance agreement `sum_c row_c * col_c / N^2`.
    pub fn chance_agreement_exact(&self) -> Ratio<i128> {
        let n = self.total() as i128;
        if n == 0 {
            return Ratio::zero();
        }
        let s: i128 = (0..self.classes()).map(|c| self.row_sum(c) * self.col_sum(c)).sum();
        Ratio::new(s, n * n)
    }

    /// Cohen's kappa. When chance agreement is 1 (a single class everywhere)
    /// the matrix is diagonal and kappa is 1.
    pub fn kappa_exact(&self) -> Ratio<i128> {
        let n = self.total() as i128;
        let s: i128 = (0..self.classes()).map(|c| self.row_sum(c) * self.col_sum(c)).sum();
        let denom = n * n - s;
        if denom == 0 {
            return if n == 0 { Ratio::zero() } else { Ratio::from_integer(1) };
        }
        Ratio::new(n * self.diag() - s, denom)
    }

    /// Unweighted mean of per-class `2TP / (2TP + FP + FN)`; a class with a
    /// zero denominator scores 0.
    pub fn macro_f1_exact(&self) -> Ratio<i128> {
        let c = self.classes();
        let mut sum = Ratio::zero();
        for k in 0..c {
            let tp = self.counts[k][k] as i128;
            let fp = self.col_sum(k) - tp;
            let fn_ = self.row_sum(k) - tp;
            let denom = 2 * tp + fp + fn_;
            if denom > 0 {
                sum += Ratio::new(2 * tp, denom);
            }
        }
        sum / Ratio::from_integer(c as i128)
    }

    pub fn accuracy(&self) -> f64 {
        ratio_f64(self.accuracy_exact())
    }

    pub fn kappa(&self) -> f64 {
        ratio_f64(self.kappa_exact())
    }

    pub fn macro_f1(&self) -> f64 {
        ratio_f64(self.macro_f1_exact())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in 0..self.classes() {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (t, row) in self.counts.iter().enumerate() {
            out.push_str(&t.to_string());
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

fn ratio_f64(r: Ratio<i128>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub mf1: f64,
    pub kappa: f64,
    pub n: u64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        Self {
            acc: confusion.accuracy(),
            mf1: confusion.macro_f1(),
            kappa: confusion.kappa(),
            n: confusion.total(),
            confusion,
        }
    }
}

// ── Linear probe ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { epochs: 500, lr: 0.5, seed: 0 }
    }
}

/// Multinomial logistic regression: `weights` is `classes x dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearProbe {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter_rows().zip(&self.bias).map(|(w, b)| dot(w, x) + b).collect()
    }

    pub fn predict(&self, emb: &Matrix) -> Result<Vec<usize>> {
        if emb.cols() != self.weights.cols() {
            return Err(Error::Shape(format!("embedding dim {} vs probe dim {}", emb.cols(), self.weights.cols())));
        }
        Ok(emb
            .iter_rows()
            .map(|x| {
                let l = self.logits(x);
                // first maximum wins
                (0..l.len()).fold(0, |best, c| if l[c] > l[best] { c } else { best })
            })
            .collect())
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

/// Full-batch gradient descent on mean cross-entropy. Instances are summed
/// in a canonical order (by label, then by embedding values), so the result
/// does not depend on the order of the input rows.
pub fn linear_probe_train(emb: &Matrix, labels: &[usize], cfg: &ProbeConfig) -> Result<LinearProbe> {
    let n = emb.rows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} embeddings", labels.len())));
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(Error::param("probe.lr", format!("{} must be >= 0", cfg.lr)));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::param("labels", "linear probe needs at least two classes"));
    }
    if !emb.is_finite() {
        return Err(Error::NonFinite("probe embeddings".into()));
    }
    let d = emb.cols();
    let mut rng = stream(cfg.seed, Stream::Probe, &[]);
    let init: Vec<f64> = (0..classes * d).map(|_| rng.random_range(-0.01..0.01)).collect();
    let mut probe = LinearProbe { weights: Matrix::from_vec(classes, d, init)?, bias: vec![0.0; classes] };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        labels[i].cmp(&labels[j]).then_with(|| {
            emb.row(i)
                .iter()
                .zip(emb.row(j))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });

    let step = cfg.lr / n as f64;
    for _ in 0..cfg.epochs {
        let mut gw = Matrix::zeros(classes, d);
        let mut gb = vec![0.0; classes];
        for &i in &order {
            let x = emb.row(i);
            let mut p = probe.logits(x);
            softmax_in_place(&mut p);
            p[labels[i]] -= 1.0;
            for (c, pc) in p.iter().enumerate() {
                gb[c] += pc;
                for (g, xv) in gw.row_mut(c).iter_mut().zip(x) {
                    *g += pc * xv;
                }
            }
        }
        for (wv, g) in probe.weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *wv -= step * g;
        }
        for (bv, g) in probe.bias.iter_mut().zip(&gb) {
            *bv -= step * g;
        }
    }
    Ok(probe)
}

pub fn evaluate(probe: &LinearProbe, emb: &Matrix, labels: &[usize]) -> Result<MetricsReport> {
    let pred = probe.predict(emb)?;
    let classes = probe.classes().max(labels.iter().max().map_or(0, |m| m + 1));
    let cm = ConfusionMatrix::from_predictions(labels, &pred, classes)?;
    Ok(MetricsReport::from_confusion(cm))
}

// ── K-means ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Matrix,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn nearest(centers: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centers.iter_rows().enumerate() {
        let d = sq_dist(x, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm from farthest-point initialization (first center drawn
/// from `seed`). Empty clusters are re-seeded at the point farthest from its
/// current center.
pub fn kmeans(points: &Matrix, k: usize, iters: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::param("k", format!("{k} not in [1, {n}]")));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("k-means points".into()));
    }
    let d = points.cols();
    let mut rng = stream(seed, Stream::KMeans, &[]);
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    while chosen.len() < k {
        let mut best = None;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            match best {
                Some(b) if min_d[b] >= min_d[i] => {}
                _ => best = Some(i),
            }
        }
        let next = best.expect("k <= n leaves an unchosen point");
        chosen.push(next);
        for i in 0..n {
            min_d[i] = min_d[i].min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centers = points.select_rows(&chosen);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..iters.max(1) {
        let mut dists = vec![0.0; n];
        let mut changed = false;
        for i in 0..n {
            let (c, dd) = nearest(&centers, points.row(i));
            changed |= labels[i] != c;
            labels[i] = c;
            dists[i] = dd;
        }
        // empty clusters take the worst-fit point
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None, |acc: Option<usize>, i| match acc {
                    Some(a) if dists[a] >= dists[i] => Some(a),
                    _ => Some(i),
                });
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                dists[i] = 0.0;
                centers.row_mut(c).copy_from_slice(points.row(i));
                changed = true;
            }
        }
        history.push(dists.iter().sum());
        if !changed && history.len() > 1 {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        for i in 0..n {
            for (s, x) in sums.row_mut(labels[i]).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            let cnt = counts[c] as f64;
            for (ctr, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                *ctr = s / cnt;
            }
        }
    }
    Ok(KMeansResult { labels, centers, inertia_history: history })
}

// ── False-negative audit ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCounts {
    pub total_instance_negatives: u64,
    pub false_instance_negatives: u64,
    pub total_cluster_negatives: u64,
    pub false_cluster_negatives: u64,
}

impl AuditCounts {
    pub fn instance_rate(&self) -> Option<f64> {
        rate(self.false_instance_negatives, self.total_instance_negatives)
    }

    pub fn cluster_rate(&self) -> Option<f64> {
        rate(self.false_cluster_negatives, self.total_cluster_negatives)
    }
}

fn rate(f: u64, t: u64) -> Option<f64> {
    (t > 0).then(|| f as f64 / t as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub mhccl: AuditCounts,
    pub baseline: AuditCounts,
    /// `1 - mhccl_rate / baseline_rate`, as a fraction.
    pub instance_reduction: Option<f64>,
    pub cluster_reduction: Option<f64>,
}

fn reduction(ours: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (ours, base) {
        (Some(o), Some(b)) if b > 0.0 => Some(1.0 - o / b),
        _ => None,
    }
}

/// Per-partition instance-to-cluster assignments of one pairing run; index
/// `p` holds the cluster of every instance at partition `p`.
pub type Assignments = Vec<Vec<usize>>;

/// Majority class of every cluster at every partition (ties to the smaller
/// class).
fn majority_labels(assign: &Assignments, labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    assign
        .iter()
        .map(|part| {
            if part.len() != labels.len() {
                return Err(Error::Shape(format!("{} assignments for {} labels", part.len(), labels.len())));
            }
            let k = part.iter().max().map_or(0, |m| m + 1);
            let mut votes = vec![vec![0usize; classes]; k];
            for (i, &c) in part.iter().enumerate() {
                votes[c][labels[i]] += 1;
            }
            Ok(votes
                .iter()
                .map(|v| (0..classes).fold(0, |best, c| if v[c] > v[best] { c } else { best }))
                .collect())
        })
        .collect()
}

/// Counts negative decisions and those whose members share a class. A
/// cluster counterpart takes the majority class of its members.
pub fn count_false_negatives(
    decisions: &[PairDecision],
    assign: &Assignments,
    labels: &[usize],
) -> Result<AuditCounts> {
    let majority = majority_labels(assign, labels)?;
    let mut out = AuditCounts::default();
    for dcs in decisions.iter().filter(|d| d.role == Role::Negative) {
        let anchor = *labels
            .get(dcs.anchor)
            .ok_or_else(|| Error::Shape(format!("anchor {} has no label", dcs.anchor)))?;
        match dcs.kind {
            PairKind::Instance => {
                let other = *labels
                    .get(dcs.counterpart)
                    .ok_or_else(|| Error::Shape(format!("instance {} has no label", dcs.counterpart)))?;
                out.total_instance_negatives += 1;
                out.false_instance_negatives += u64::from(other == anchor);
            }
            PairKind::Cluster => {
                let other = *majority
                    .get(dcs.partition)
                    .and_then(|m| m.get(dcs.counterpart))
                    .ok_or_else(|| {
                        Error::Shape(format!("cluster {} at partition {} unknown", dcs.counterpart, dcs.partition + 1))
                    })?;
                out.total_cluster_negatives += 1;
                out.false_cluster_negatives += u64::from(other == anchor);
            }
        }
    }
    Ok(out)
}

pub fn false_pair_audit(
    mhccl: (&[PairDecision], &Assignments),
    baseline: (&[PairDecision], &Assignments),
    labels: Option<&[usize]>,
) -> Result<AuditReport> {
    let labels = labels.ok_or_else(|| Error::param("labels", "the audit needs a labelled dataset"))?;
    let ours = count_false_negatives(mhccl.0, mhccl.1, labels)?;
    let base = count_false_negatives(baseline.0, baseline.1, labels)?;
    Ok(AuditReport {
        instance_reduction: reduction(ours.instance_rate(), base.instance_rate()),
        cluster_reduction: reduction(ours.cluster_rate(), base.cluster_rate()),
        mhccl: ours,
        baseline: base,
    })
}
