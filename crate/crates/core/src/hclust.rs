//! First-nearest-neighbor hierarchical clustering with upward masking.
//!
//! Each level links every point to its nearest neighbor (plus points that
//! share a nearest neighbor), takes connected components as clusters, and
//! recurses on the cluster prototypes. Upward masking drops far-away members
//! before a level's prototypes are handed to the next level.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskStrategy {
    None,
    Threshold,
    Proportion,
    ReplacePrototypes,
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MaskStrategy::None),
            "mask_threshold" => Ok(MaskStrategy::Threshold),
            "mask_proportion" => Ok(MaskStrategy::Proportion),
            "replace_prototypes" => Ok(MaskStrategy::ReplacePrototypes),
            other => Err(Error::param("mask.strategy", format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskStrategy::None => "none",
            MaskStrategy::Threshold => "mask_threshold",
            MaskStrategy::Proportion => "mask_proportion",
            MaskStrategy::ReplacePrototypes => "replace_prototypes",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    pub strategy: MaskStrategy,
    /// Threshold `t` or proportion `rho`, depending on the strategy.
    pub parameter: f64,
    /// 1-based partition indices where masking runs.
    pub apply_at: BTreeSet<usize>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { strategy: MaskStrategy::Threshold, parameter: 0.3, apply_at: BTreeSet::from([1]) }
    }
}

impl MaskConfig {
    pub fn none() -> Self {
        Self { strategy: MaskStrategy::None, parameter: 0.0, apply_at: BTreeSet::new() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            MaskStrategy::Threshold if self.parameter.is_nan() || self.parameter < 0.0 => {
                Err(Error::param("mask.parameter", format!("threshold {} must be >= 0", self.parameter)))
            }
            MaskStrategy::Proportion if !(0.0..1.0).contains(&self.parameter) => {
                Err(Error::param("mask.parameter", format!("proportion {} not in [0,1)", self.parameter)))
            }
            _ if self.apply_at.contains(&0) => {
                Err(Error::param("mask.apply_at", "partition indices are 1-based"))
            }
            _ => Ok(()),
        }
    }
}

/// One level of the hierarchy. `labels` index the level's own points: data
/// instances at the bottom, the clusters of the level below elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k: usize,
    pub prototypes_original: Matrix,
    pub prototypes_refined: Matrix,
    pub masked: Vec<bool>,
    pub parent_of_cluster: Option<Vec<usize>>,
}

impl Partition {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHierarchy {
    partitions: Vec<Partition>,
    features: Matrix,
    instance_labels: Vec<Vec<usize>>,
}

impl ClusterHierarchy {
    /// Assembles a hierarchy from partitions ordered bottom-up, checking
    /// shapes and nesting.
    pub fn from_partitions(features: Matrix, mut partitions: Vec<Partition>) -> Result<Self> {
        let n = features.rows();
        let mut expected = n;
        for (p, part) in partitions.iter().enumerate() {
            if part.labels.len() != expected {
                return Err(Error::Shape(format!(
                    "partition {} has {} labels, expected {expected}",
                    p + 1,
                    part.labels.len()
                )));
            }
            if part.labels.iter().any(|&l| l >= part.k) {
                return Err(Error::Shape(format!("partition {} has labels outside [0, {})", p + 1, part.k)));
            }
            expected = part.k;
        }
        let m = partitions.len();
        for p in 0..m.saturating_sub(1) {
            let parent = partitions[p + 1].labels.clone();
            partitions[p].parent_of_cluster = Some(parent);
        }
        if let Some(top) = partitions.last_mut() {
            top.parent_of_cluster = None;
        }
        let mut instance_labels: Vec<Vec<usize>> = Vec::with_capacity(m);
        for part in &partitions {
            let next = match instance_labels.last() {
                None => part.labels.clone(),
                Some(prev) => prev.iter().map(|&c| part.labels[c]).collect(),
            };
            instance_labels.push(next);
        }
        Ok(Self { partitions, features, instance_labels })
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn num_instances(&self) -> usize {
        self.features.rows()
    }

    /// Cluster of every instance at partition `p` (0-based).
    pub fn instance_labels(&self, p: usize) -> &[usize] {
        &self.instance_labels[p]
    }

    /// Bottom-partition labels; a hierarchy without partitions puts every
    /// instance in one cluster.
    pub fn bottom_labels(&self) -> Vec<usize> {
        self.instance_labels.first().cloned().unwrap_or_else(|| vec![0; self.num_instances()])
    }

    /// Whether the point representing instance `i` at partition `p` was masked.
    pub fn instance_masked(&self, p: usize, i: usize) -> bool {
        let point = if p == 0 { i } else { self.instance_labels[p - 1][i] };
        self.partitions[p].masked[point]
    }

    /// Cluster containing cluster `c` of partition `p` at partition `q >= p`.
    pub fn ancestor(&self, p: usize, c: usize, q: usize) -> usize {
        (p..q).fold(c, |c, level| {
            self.partitions[level].parent_of_cluster.as_ref().expect("partition below the top has parents")[c]
        })
    }

    /// Refined prototype of cluster `c` at partition `p`.
    pub fn prototype(&self, p: usize, c: usize) -> &[f64] {
        self.partitions[p].prototypes_refined.row(c)
    }

    /// Instances of every cluster at partition `p`.
    pub fn members(&self, p: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.partitions[p].k];
        for (i, &c) in self.instance_labels[p].iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Writes `partition,instance_id,cluster_id,masked` rows, partitions
/// numbered from 1. `ids[i]` names instance `i`.
pub fn write_partitions_csv(h: &ClusterHierarchy, ids: &[usize], w: impl std::io::Write) -> Result<()> {
    if ids.len() != h.num_instances() {
        return Err(Error::Shape(format!("{} ids for {} instances", ids.len(), h.num_instances())));
    }
    let err = |e: csv::Error| Error::format("cluster csv", e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["partition", "instance_id", "cluster_id", "masked"]).map_err(err)?;
    for p in 0..h.len() {
        for (i, &c) in h.instance_labels(p).iter().enumerate() {
            let masked = if h.instance_masked(p, i) { "1" } else { "0" };
            out.write_record([(p + 1).to_string(), ids[i].to_string(), c.to_string(), masked.into()])
                .map_err(err)?;
        }
    }
    out.flush().map_err(|e| Error::format("cluster csv", e.to_string()))
}

/// Reads a partition CSV back into per-partition cluster labels indexed by
/// `instance_id`, which must run over `0..n` at every partition.
pub fn read_partitions_csv(r: impl std::io::Read) -> Result<Vec<Vec<usize>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut parts: Vec<Vec<Option<usize>>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let what = format!("cluster row {}", row + 1);
        let rec = rec.map_err(|e| Error::format(&what, e.to_string()))?;
        let field = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(&what, format!("column {} is not an unsigned integer", k + 1)))
        };
        let (p, i, c) = (field(0)?, field(1)?, field(2)?);
        if p == 0 {
            return Err(Error::format(&what, "partitions are numbered from 1"));
        }
        if parts.len() < p {
            parts.resize(p, Vec::new());
        }
        let part = &mut parts[p - 1];
        if part.len() <= i {
            part.resize(i + 1, None);
        }
        if part[i].replace(c).is_some() {
            return Err(Error::format(&what, format!("instance {i} listed twice at partition {p}")));
        }
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(p, part)| {
            part.into_iter()
                .enumerate()
                .map(|(i, c)| c.ok_or_else(|| Error::format("cluster csv", format!("partition {} lacks instance {i}", p + 1))))
                .collect()
        })
        .collect()
}

// ── Building blocks ─────────────────────────────────────────────────────────

/// Index of each row's nearest other row (Euclidean); ties go to the
/// smallest index.
pub fn first_neighbors(points: &Matrix) -> Result<Vec<usize>> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::param("points", format!("need at least 2 points, got {n}")));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("clustering points".into()));
    }
    let mut omega = vec![0; n];
    let mut best = vec![f64::INFINITY; n];
    for i in 0..n {
        let xi = points.row(i);
        for j in (i + 1)..n {
            let d = sq_dist(xi, points.row(j));
            // j > i: strict `<` on i's side keeps the smaller index on ties
            if d < best[i] {
                best[i] = d;
                omega[i] = j;
            }
            if d < best[j] || (d == best[j] && i < omega[j]) {
                best[j] = d;
                omega[j] = i;
            }
        }
    }
    Ok(omega)
}

/// Symmetric sparse link relation without self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<BTreeSet<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self { neighbors: vec![BTreeSet::new(); n] }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn link(&mut self, i: usize, j: usize) {
        if i != j {
            self.neighbors[i].insert(j);
            self.neighbors[j].insert(i);
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(&j)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i].iter().copied()
    }

    pub fn num_links(&self) -> usize {
        self.neighbors.iter().map(BTreeSet::len).sum::<usize>() / 2
    }
}

/// `A(i,j) = 1` iff `omega[i] == j`, `omega[j] == i`, or `omega[i] == omega[j]`.
pub fn finch_adjacency(omega: &[usize]) -> Adjacency {
    let n = omega.len();
    let mut adj = Adjacency::empty(n);
    let mut by_target: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &w) in omega.iter().enumerate() {
        adj.link(i, w);
        by_target[w].push(i);
    }
    for group in &by_target {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                adj.link(i, j);
            }
        }
    }
    adj
}

/// Component labels numbered in order of each component's smallest member.
pub fn connected_components(adj: &Adjacency) -> (Vec<usize>, usize) {
    let n = adj.len();
    let mut labels = vec![usize::MAX; n];
    let mut k = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = k;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in adj.neighbors(i) {
                if labels[j] == usize::MAX {
                    labels[j] = k;
                    queue.push_back(j);
                }
            }
        }
        k += 1;
    }
    (labels, k)
}

/// Row `k` is the mean of the rows labelled `k`.
pub fn compute_prototypes(points: &Matrix, labels: &[usize], k: usize) -> Result<Matrix> {
    if labels.len() != points.rows() {
        return Err(Error::Shape(format!("{} labels for {} points", labels.len(), points.rows())));
    }
    let mut protos = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        if c >= k {
            return Err(Error::Shape(format!("label {c} outside [0, {k})")));
        }
        counts[c] += 1;
        for (p, x) in protos.row_mut(c).iter_mut().zip(points.row(i)) {
            *p += x;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            return Err(Error::EmptyCluster(c));
        }
        protos.row_mut(c).iter_mut().for_each(|p| *p /= cnt as f64);
    }
    Ok(protos)
}

fn masked_means(points: &Matrix, part: &Partition, masked: &[bool]) -> Matrix {
    let mut refined = Matrix::zeros(part.k, points.cols());
    let mut counts = vec![0usize; part.k];
    for (i, &c) in part.labels.iter().enumerate() {
        if masked[i] {
            continue;
        }
        counts[c] += 1;
        for (p, x) in refined.row_mut(c).iter_mut().zip(points.row(i)) {
            *p += x;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            // every member masked: keep the original prototype
            refined.row_mut(c).copy_from_slice(part.prototypes_original.row(c));
        } else {
            refined.row_mut(c).iter_mut().for_each(|p| *p /= cnt as f64);
        }
    }
    refined
}

/// Applies one masking strategy to a partition whose original prototypes
/// are set, returning the partition with mask flags and refined prototypes.
pub fn upward_mask(points: &Matrix, partition: &Partition, cfg: &MaskConfig) -> Result<Partition> {
    cfg.validate()?;
    if points.rows() != partition.labels.len() {
        return Err(Error::Shape(format!(
            "{} points for a partition over {}",
            points.rows(),
            partition.labels.len()
        )));
    }
    let dist_to_proto: Vec<f64> = partition
        .labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), partition.prototypes_original.row(c)).sqrt())
        .collect();
    let mut out = partition.clone();
    out.masked = vec![false; partition.labels.len()];
    match cfg.strategy {
        MaskStrategy::None => {
            out.prototypes_refined = partition.prototypes_original.clone();
        }
        MaskStrategy::Threshold => {
            for (m, d) in out.masked.iter_mut().zip(&dist_to_proto) {
                *m = *d > cfg.parameter;
            }
            out.prototypes_refined = masked_means(points, partition, &out.masked);
        }
        MaskStrategy::Proportion => {
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); partition.k];
            for (i, &c) in partition.labels.iter().enumerate() {
                members[c].push(i);
            }
            for mut group in members {
                let drop = (cfg.parameter * group.len() as f64).floor() as usize;
                // farthest first; equal distances mask the larger index first
                group.sort_by(|&a, &b| dist_to_proto[b].total_cmp(&dist_to_proto[a]).then(b.cmp(&a)));
                for &i in group.iter().take(drop) {
                    out.masked[i] = true;
                }
            }
            out.prototypes_refined = masked_means(points, partition, &out.masked);
        }
        MaskStrategy::ReplacePrototypes => {
            let mut best: Vec<Option<usize>> = vec![None; partition.k];
            for (i, &c) in partition.labels.iter().enumerate() {
                match best[c] {
                    Some(j) if dist_to_proto[j] <= dist_to_proto[i] => {}
                    _ => best[c] = Some(i),
                }
            }
            let mut refined = Matrix::zeros(partition.k, points.cols());
            for (c, b) in best.iter().enumerate() {
                let i = b.ok_or(Error::EmptyCluster(c))?;
                refined.row_mut(c).copy_from_slice(points.row(i));
            }
            out.prototypes_refined = refined;
        }
    }
    Ok(out)
}

/// Builds partitions bottom-up until a level would have fewer than two
/// clusters. Levels listed in `cfg.apply_at` are masked before their refined
/// prototypes become the next level's points.
pub fn build_hierarchy(points: &Matrix, cfg: &MaskConfig) -> Result<ClusterHierarchy> {
    cfg.validate()?;
    if points.rows() < 2 {
        return Err(Error::param("points", format!("need at least 2 points, got {}", points.rows())));
    }
    let mut partitions: Vec<Partition> = Vec::new();
    let mut level = points.clone();
    while level.rows() >= 2 {
        let omega = first_neighbors(&level)?;
        let (labels, k) = connected_components(&finch_adjacency(&omega));
        if k < 2 || partitions.last().is_some_and(|prev| k >= prev.k) {
            break;
        }
        let original = compute_prototypes(&level, &labels, k)?;
        let mut part = Partition {
            masked: vec![false; labels.len()],
            labels,
            k,
            prototypes_refined: original.clone(),
            prototypes_original: original,
            parent_of_cluster: None,
        };
        if cfg.strategy != MaskStrategy::None && cfg.apply_at.contains(&(partitions.len() + 1)) {
            part = upward_mask(&level, &part, cfg)?;
        }
        level = part.prototypes_refined.clone();
        partitions.push(part);
    }
    ClusterHierarchy::from_partitions(points.clone(), partitions)
}

/// Partition over instances with exactly `k_target` clusters: the coarsest
/// partition with at least `k_target` clusters, merged pairwise by nearest
/// prototypes (instance means) until the count matches.
pub fn required_k(h: &ClusterHierarchy, k_target: usize) -> Result<Partition> {
    let k1 = h.partitions.first().map_or(0, |p| p.k);
    if k_target == 0 || k_target > k1 {
        return Err(Error::param("k_target", format!("{k_target} not in [1, K_1={k1}]")));
    }
    let p = h
        .partitions
        .iter()
        .rposition(|part| part.k >= k_target)
        .expect("K_1 >= k_target");
    let part = &h.partitions[p];
    let labels = h.instance_labels[p].clone();
    if part.k == k_target {
        let masked = (0..h.num_instances()).map(|i| h.instance_masked(p, i)).collect();
        return Ok(Partition { labels, masked, ..part.clone() });
    }

    let feats = &h.features;
    let mut members: Vec<Vec<usize>> = h.members(p);
    let mut protos: Vec<Vec<f64>> = members.iter().map(|m| mean_rows(feats, m)).collect();
    while members.len() > k_target {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..members.len() {
            for b in (a + 1)..members.len() {
                let d = sq_dist(&protos[a], &protos[b]);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (_, a, b) = best;
        let moved = members.remove(b);
        protos.remove(b);
        members[a].extend(moved);
        protos[a] = mean_rows(feats, &members[a]);
    }

    // relabel by smallest member index
    members.iter_mut().for_each(|m| m.sort_unstable());
    members.sort_by_key(|m| m[0]);
    let mut labels = vec![0; h.num_instances()];
    for (c, m) in members.iter().enumerate() {
        for &i in m {
            labels[i] = c;
        }
    }
    let protos = compute_prototypes(feats, &labels, k_target)?;
    Ok(Partition {
        masked: vec![false; labels.len()],
        labels,
        k: k_target,
        prototypes_refined: protos.clone(),
        prototypes_original: protos,
        parent_of_cluster: None,
    })
}

fn mean_rows(m: &Matrix, rows: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for &r in rows {
        for (o, x) in out.iter_mut().zip(m.row(r)) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= rows.len() as f64);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn neighbors_on_a_line() {
        assert_eq!(first_neighbors(&line(&[0.0, 1.0, 3.0])).unwrap(), vec![1, 0, 1]);
        assert_eq!(first_neighbors(&line(&[5.0, -2.0])).unwrap(), vec![1, 0]);
        assert!(first_neighbors(&line(&[1.0])).is_err());
    }

    #[test]
    fn duplicates_pick_each_other() {
        let w = first_neighbors(&line(&[2.0, 7.0, 2.0])).unwrap();
        assert_eq!((w[0], w[2]), (2, 0));
    }

    #[test]
    fn adjacency_rule_cases() {
        let a = finch_adjacency(&[1, 0]);
        assert!(a.contains(0, 1) && a.contains(1, 0));

        let omega = first_neighbors(&line(&[0.0, 1.0, 3.0, 10.0])).unwrap();
        assert_eq!(omega, vec![1, 0, 1, 2]);
        let a = finch_adjacency(&omega);
        let mut links: Vec<(usize, usize)> =
            (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))).filter(|&(i, j)| a.contains(i, j)).collect();
        links.sort();
        assert_eq!(links, vec![(0, 1), (0, 2), (1, 2), (2, 3)]);
        assert_eq!(connected_components(&a).1, 1);

        let a = finch_adjacency(&first_neighbors(&line(&[0.0, 1.0, 10.0, 11.0])).unwrap());
        assert_eq!(connected_components(&a), (vec![0, 0, 1, 1], 2));
    }

    #[test]
    fn components_trivial_cases() {
        assert_eq!(connected_components(&Adjacency::empty(3)), (vec![0, 1, 2], 3));
        let mut full = Adjacency::empty(3);
        full.link(0, 1);
        full.link(1, 2);
        full.link(0, 2);
        assert_eq!(connected_components(&full).1, 1);
    }

    #[test]
    fn prototype_means() {
        let pts = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0], vec![5.0, -1.0]]).unwrap();
        let p = compute_prototypes(&pts, &[0, 0, 1], 2).unwrap();
        assert_eq!(p.row(0), &[1.0, 1.0]);
        assert_eq!(p.row(1), &[5.0, -1.0]);
        let perm = pts.select_rows(&[2, 0, 1]);
        assert_eq!(compute_prototypes(&perm, &[1, 0, 0], 2).unwrap(), p);
        assert!(matches!(compute_prototypes(&pts, &[0, 0, 2], 3), Err(Error::EmptyCluster(1))));
    }

    fn single_cluster(points: &Matrix) -> Partition {
        let labels = vec![0; points.rows()];
        let proto = compute_prototypes(points, &labels, 1).unwrap();
        Partition {
            masked: vec![false; labels.len()],
            labels,
            k: 1,
            prototypes_refined: proto.clone(),
            prototypes_original: proto,
            parent_of_cluster: None,
        }
    }

    #[test]
    fn threshold_masks_far_member() {
        // prototype at 0: members at 0.1, -0.2, 0.5, and a balancing point at -0.4
        // gives mean 0; distances 0.1, 0.2, 0.5, 0.4 -> t=0.3 masks the last two
        let pts = line(&[0.1, -0.2, 0.5, -0.4]);
        let part = single_cluster(&pts);
        assert!(part.prototypes_original.row(0)[0].abs() < 1e-15);
        let cfg = MaskConfig { strategy: MaskStrategy::Threshold, parameter: 0.3, apply_at: BTreeSet::from([1]) };
        let out = upward_mask(&pts, &part, &cfg).unwrap();
        assert_eq!(out.masked, vec![false, false, true, true]);
        assert!((out.prototypes_refined.row(0)[0] - (-0.05)).abs() < 1e-12);

        // three members at distances 0.1, 0.2, 0.5 from a fixed prototype
        let pts = line(&[0.1, 0.2, 0.5]);
        let mut part = single_cluster(&pts);
        part.prototypes_original = line(&[0.0]);
        let out = upward_mask(&pts, &part, &cfg).unwrap();
        assert_eq!(out.masked, vec![false, false, true]);
        assert!((out.prototypes_refined.row(0)[0] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn vacuous_masks() {
        let pts = line(&[0.0, 1.0, 4.0]);
        let part = single_cluster(&pts);
        for cfg in [
            MaskConfig { strategy: MaskStrategy::Threshold, parameter: f64::INFINITY, apply_at: BTreeSet::from([1]) },
            MaskConfig { strategy: MaskStrategy::Proportion, parameter: 0.0, apply_at: BTreeSet::from([1]) },
        ] {
            let out = upward_mask(&pts, &part, &cfg).unwrap();
            assert!(out.masked.iter().all(|m| !m));
            assert_eq!(out.prototypes_refined, out.prototypes_original);
        }
    }

    #[test]
    fn all_masked_falls_back_to_original() {
        let pts = line(&[0.0, 1.0]);
        let part = single_cluster(&pts);
        let cfg = MaskConfig { strategy: MaskStrategy::Threshold, parameter: 0.1, apply_at: BTreeSet::from([1]) };
        let out = upward_mask(&pts, &part, &cfg).unwrap();
        assert_eq!(out.masked, vec![true, true]);
        assert_eq!(out.prototypes_refined, out.prototypes_original);
    }

    #[test]
    fn proportion_and_replace() {
        let pts = line(&[0.0, 1.0, 2.0, 9.0]);
        let part = single_cluster(&pts);
        let cfg = MaskConfig { strategy: MaskStrategy::Proportion, parameter: 0.5, apply_at: BTreeSet::from([1]) };
        let out = upward_mask(&pts, &part, &cfg).unwrap();
        // mean 3: distances 3, 2, 1, 6 -> drop 9 and 0
        assert_eq!(out.masked, vec![true, false, false, true]);
        assert_eq!(out.prototypes_refined.row(0), &[1.5]);

        let cfg = MaskConfig { strategy: MaskStrategy::ReplacePrototypes, parameter: 0.0, apply_at: BTreeSet::from([1]) };
        let out = upward_mask(&pts, &part, &cfg).unwrap();
        assert!(out.masked.iter().all(|m| !m));
        assert_eq!(out.prototypes_refined.row(0), &[2.0]);
    }

    #[test]
    fn invalid_mask_parameters() {
        let pts = line(&[0.0, 1.0]);
        let part = single_cluster(&pts);
        let bad = [
            MaskConfig { strategy: MaskStrategy::Threshold, parameter: -1.0, apply_at: BTreeSet::from([1]) },
            MaskConfig { strategy: MaskStrategy::Proportion, parameter: 1.0, apply_at: BTreeSet::from([1]) },
        ];
        for cfg in bad {
            assert!(upward_mask(&pts, &part, &cfg).is_err());
        }
        assert!("mask_everything".parse::<MaskStrategy>().is_err());
    }

    #[test]
    fn four_points_trace() {
        let h = build_hierarchy(&line(&[0.0, 1.0, 10.0, 11.0]), &MaskConfig::none()).unwrap();
        assert_eq!(h.len(), 1);
        let p = &h.partitions()[0];
        assert_eq!((p.labels.clone(), p.k), (vec![0, 0, 1, 1], 2));
        assert_eq!(p.prototypes_original, line(&[0.5, 10.5]));
        assert!(p.parent_of_cluster.is_none());
    }

    fn blobs(centers: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = crate::rng::stream(seed, crate::rng::Stream::Synth, &[]);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                rows.push(center.iter().map(|x| x + noise.sample(&mut rng)).collect());
                truth.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn separated_blobs_recovered_at_bottom() {
        let centers = vec![vec![0.0, 0.0], vec![6.0, 0.0], vec![0.0, 7.0]];
        for seed in 0..5 {
            let (pts, truth) = blobs(&centers, 20, 0.1, seed);
            let h = build_hierarchy(&pts, &MaskConfig::none()).unwrap();
            // every bottom cluster is pure, and cutting the hierarchy at three
            // clusters recovers the blobs exactly
            let p1 = h.instance_labels(0);
            for i in 0..pts.rows() {
                for j in 0..pts.rows() {
                    if p1[i] == p1[j] {
                        assert_eq!(truth[i], truth[j]);
                    }
                }
            }
            let ks: Vec<usize> = h.partitions().iter().map(|p| p.k).collect();
            let three = required_k(&h, 3).unwrap();
            assert!(rand_index(&three.labels, &truth) == 1.0, "seed {seed}, levels {ks:?}");
        }
    }

    fn rand_index(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let mut agree = 0usize;
        let mut total = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                total += 1;
                if (a[i] == a[j]) == (b[i] == b[j]) {
                    agree += 1;
                }
            }
        }
        agree as f64 / total as f64
    }

    #[test]
    fn none_equals_infinite_threshold() {
        let (pts, _) = blobs(&[vec![0.0, 0.0], vec![3.0, 1.0]], 15, 0.5, 9);
        let a = build_hierarchy(&pts, &MaskConfig::none()).unwrap();
        let inf = MaskConfig { strategy: MaskStrategy::Threshold, parameter: f64::INFINITY, apply_at: BTreeSet::from([1, 2, 3]) };
        assert_eq!(a, build_hierarchy(&pts, &inf).unwrap());
    }

    fn manual_three(protos: &[f64]) -> ClusterHierarchy {
        // each cluster has two instances straddling its prototype
        let mut xs = Vec::new();
        for &p in protos {
            xs.push(p - 0.1);
            xs.push(p + 0.1);
        }
        let feats = line(&xs);
        let labels: Vec<usize> = (0..xs.len()).map(|i| i / 2).collect();
        let proto = compute_prototypes(&feats, &labels, protos.len()).unwrap();
        let part = Partition {
            masked: vec![false; labels.len()],
            labels,
            k: protos.len(),
            prototypes_refined: proto.clone(),
            prototypes_original: proto,
            parent_of_cluster: None,
        };
        ClusterHierarchy::from_partitions(feats, vec![part]).unwrap()
    }

    #[test]
    fn required_k_merges_nearest() {
        let h = manual_three(&[0.0, 1.0, 10.0]);
        let p = required_k(&h, 2).unwrap();
        assert_eq!(p.labels, vec![0, 0, 0, 0, 1, 1]);
        assert!((p.prototypes_original.row(0)[0] - 0.5).abs() < 1e-12);
        let all = required_k(&h, 1).unwrap();
        assert!(all.labels.iter().all(|&l| l == 0));
        assert_eq!(required_k(&h, 3).unwrap().labels, h.instance_labels(0));
        assert!(required_k(&h, 4).is_err());
        assert!(required_k(&h, 0).is_err());
    }

    #[test]
    fn required_k_exact_hit_at_upper_level() {
        let (pts, _) = blobs(&[vec![0.0], vec![5.0], vec![40.0], vec![46.0]], 6, 0.3, 4);
        let h = build_hierarchy(&pts, &MaskConfig::none()).unwrap();
        for p in 0..h.len() {
            let k = h.partitions()[p].k;
            let got = required_k(&h, k).unwrap();
            assert_eq!(got.labels, h.instance_labels(p));
        }
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::stream(seed, crate::rng::Stream::Synth, &[1]);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    proptest! {
        #[test]
        fn hierarchy_laws(n in 2usize..60, d in 1usize..5, seed in any::<u64>(), t in 0.0f64..1.0) {
            let pts = random_points(n, d, seed);
            let cfg = MaskConfig { strategy: MaskStrategy::Threshold, parameter: t, apply_at: BTreeSet::from([1, 2]) };
            let h = build_hierarchy(&pts, &cfg).unwrap();
            for (p, part) in h.partitions().iter().enumerate() {
                prop_assert!(part.k >= 2);
                prop_assert!(part.cluster_sizes().iter().all(|&s| s > 0));
                if p > 0 {
                    prop_assert!(part.k < h.partitions()[p - 1].k);
                }
                let level_points = if p == 0 { pts.clone() } else { h.partitions()[p - 1].prototypes_refined.clone() };
                let orig = compute_prototypes(&level_points, &part.labels, part.k).unwrap();
                for (a, b) in orig.as_slice().iter().zip(part.prototypes_original.as_slice()) {
                    prop_assert!((a - b).abs() < 1e-5);
                }
                // nesting over instances
                if p + 1 < h.len() {
                    let lo = h.instance_labels(p);
                    let hi = h.instance_labels(p + 1);
                    for i in 0..n {
                        for j in 0..n {
                            if lo[i] == lo[j] {
                                prop_assert_eq!(hi[i], hi[j]);
                            }
                        }
                    }
                }
            }
        }

        #[test]
        fn permutation_equivariance(n in 2usize..40, seed in any::<u64>()) {
            let pts = random_points(n, 3, seed);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.reverse();
            perm.rotate_left(seed as usize % n);
            let permuted = pts.select_rows(&perm);
            let a = build_hierarchy(&pts, &MaskConfig::default()).unwrap();
            let b = build_hierarchy(&permuted, &MaskConfig::default()).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for p in 0..a.len() {
                let la: Vec<usize> = perm.iter().map(|&i| a.instance_labels(p)[i]).collect();
                prop_assert!(same_partition(&la, b.instance_labels(p)));
            }
        }
    }
}
