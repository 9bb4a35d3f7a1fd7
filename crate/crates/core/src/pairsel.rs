//! Positive and negative pair construction.
//!
//! Instance pairs are drawn inside a minibatch from bottom-partition
//! labels. Cluster pairs are drawn per partition from the hierarchy; with
//! downward masking, clusters sharing the anchor cluster's parent count as
//! positives rather than negatives.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hclust::ClusterHierarchy;
use crate::loss::LossConfig;
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    /// Weak view through the query encoder.
    A,
    /// Strong view through the momentum encoder.
    B,
}

/// One view of one batch member (`index` is a batch position).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ViewRef {
    pub index: usize,
    pub view: View,
}

impl ViewRef {
    pub fn a(index: usize) -> Self {
        Self { index, view: View::A }
    }

    pub fn b(index: usize) -> Self {
        Self { index, view: View::B }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstancePairSet {
    pub anchor: usize,
    pub positives: Vec<ViewRef>,
    pub negatives: Vec<ViewRef>,
    /// No negative candidate existed; the anchor is skipped by the loss.
    pub degenerate: bool,
}

/// Draws `k` distinct positions of `0..n`, or `k` positions with replacement
/// when `n < k`.
fn draw(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    if n >= k {
        index::sample(rng, n, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Pairs for the anchor at batch position `anchor`.
///
/// `labels[j]` is the bottom cluster of batch member `j`; positives come from
/// the anchor's bottom cluster. `negative_labels[j]` decides negatives: only
/// members whose label differs from the anchor's are eligible. Passing
/// `labels` again gives plain bottom-partition negatives.
pub fn instance_pairs(
    anchor: usize,
    labels: &[usize],
    negative_labels: &[usize],
    s_pos: usize,
    s_neg: usize,
    rng: &mut Rng,
) -> Result<InstancePairSet> {
    if s_pos == 0 || s_neg == 0 {
        return Err(Error::param("s_pos/s_neg", "pair counts must be >= 1"));
    }
    if labels.len() != negative_labels.len() || anchor >= labels.len() {
        return Err(Error::Shape(format!(
            "anchor {anchor} with {} labels and {} negative labels",
            labels.len(),
            negative_labels.len()
        )));
    }
    let own = labels[anchor];
    let own_neg = negative_labels[anchor];
    let same: Vec<usize> = (0..labels.len()).filter(|&j| j != anchor && labels[j] == own).collect();
    let others: Vec<usize> = (0..labels.len()).filter(|&j| negative_labels[j] != own_neg).collect();

    let mut positives = Vec::with_capacity(2 * s_pos);
    positives.push(ViewRef::b(anchor));
    positives.push(ViewRef::b(anchor));
    let take = (s_pos - 1).min(same.len());
    for k in index::sample(rng, same.len(), take) {
        positives.push(ViewRef::a(same[k]));
        positives.push(ViewRef::b(same[k]));
    }
    while positives.len() < 2 * s_pos {
        positives.push(ViewRef::b(anchor));
    }

    if others.is_empty() {
        return Ok(InstancePairSet { anchor, positives, negatives: Vec::new(), degenerate: true });
    }
    let mut negatives = Vec::with_capacity(2 * s_neg);
    for k in draw(rng, others.len(), s_neg) {
        negatives.push(ViewRef::a(others[k]));
        negatives.push(ViewRef::b(others[k]));
    }
    Ok(InstancePairSet { anchor, positives, negatives, degenerate: false })
}

/// A refined prototype: cluster `cluster` at 0-based partition `partition`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProtoRef {
    pub partition: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPairs {
    pub partition: usize,
    pub positives: Vec<ProtoRef>,
    /// Empty when every other cluster is a sibling.
    pub negatives: Vec<ProtoRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPairSet {
    /// Instance index into the clustered set.
    pub anchor: usize,
    pub levels: Vec<PartitionPairs>,
}

/// Cluster-level pairs over the lowest `counts.m_used` partitions.
/// Partitions with a single cluster contribute nothing.
///
/// With downward masking, positives at partition `p` are the anchor's own
/// prototype plus draws from its siblings (same parent at `p + 1`) and the
/// parent itself. Negatives come from clusters outside the anchor's ancestor
/// at partition `max(p + 1, opts.negative_level - 1)` (0-based, clamped to
/// the top); clusters inside it that are not siblings are left out. The top
/// partition has no parent: every other cluster is a negative.
pub fn cluster_pairs(
    h: &ClusterHierarchy,
    anchor: usize,
    counts: &LossConfig,
    opts: &PairOptions,
    rng: &mut Rng,
) -> Result<ClusterPairSet> {
    let (h_pos, h_neg) = (counts.h_pos, counts.h_neg);
    if h_pos == 0 || h_neg == 0 {
        return Err(Error::param("h_pos/h_neg", "pair counts must be >= 1"));
    }
    if anchor >= h.num_instances() {
        return Err(Error::Shape(format!("anchor {anchor} outside {} instances", h.num_instances())));
    }
    let top = h.len().saturating_sub(1);
    let mut levels = Vec::new();
    for p in 0..counts.m_used.min(h.len()) {
        let part = &h.partitions()[p];
        if part.k < 2 {
            continue;
        }
        let own = h.instance_labels(p)[anchor];
        let own_ref = ProtoRef { partition: p, cluster: own };
        let others = (0..part.k).filter(|&c| c != own);

        let mut pool = Vec::new();
        let mut rivals = Vec::new();
        if opts.downward_masking && p < top {
            let parent = part.parent_of_cluster.as_deref().expect("partition below the top has parents");
            let q = (p + 1).max(opts.negative_level.saturating_sub(1)).min(top);
            let own_anc = h.ancestor(p, own, q);
            for c in others {
                let r = ProtoRef { partition: p, cluster: c };
                if parent[c] == parent[own] {
                    pool.push(r);
                } else if h.ancestor(p, c, q) != own_anc {
                    rivals.push(r);
                }
            }
            pool.push(ProtoRef { partition: p + 1, cluster: parent[own] });
        } else {
            rivals.extend(others.map(|c| ProtoRef { partition: p, cluster: c }));
        }

        let mut positives = vec![own_ref];
        let take = (h_pos - 1).min(pool.len());
        positives.extend(index::sample(rng, pool.len(), take).into_iter().map(|k| pool[k]));
        positives.resize(h_pos, own_ref);

        let negatives = if rivals.is_empty() {
            Vec::new()
        } else {
            draw(rng, rivals.len(), h_neg).into_iter().map(|k| rivals[k]).collect()
        };
        levels.push(PartitionPairs { partition: p, positives, negatives });
    }
    Ok(ClusterPairSet { anchor, levels })
}

/// Labels that decide instance-level negatives. Without downward masking
/// this is the bottom partition. With it, members of clusters that share the
/// anchor's ancestor at 1-based partition `level` (at least the second, at
/// most the top) are not used as negatives.
pub fn negative_exclusion_labels(h: &ClusterHierarchy, downward_masking: bool, level: usize) -> Vec<usize> {
    if downward_masking && h.len() >= 2 {
        h.instance_labels(level.clamp(2, h.len()) - 1).to_vec()
    } else {
        h.bottom_labels()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOptions {
    pub instance: bool,
    pub cluster: bool,
    pub downward_masking: bool,
    /// 1-based partition whose clusters bound negatives under downward
    /// masking; 0 or 2 means the next partition up, `usize::MAX` the top.
    pub negative_level: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self { instance: true, cluster: true, downward_masking: true, negative_level: usize::MAX }
    }
}

/// Pair sets of one minibatch; `members[j]` is the hierarchy instance at
/// batch position `j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchPairs {
    pub instance: Vec<InstancePairSet>,
    pub cluster: Vec<ClusterPairSet>,
}

/// Pairs for every anchor of a batch. Each anchor draws from its own
/// streams keyed by `(seed, coords.., position)`.
pub fn batch_pairs(
    h: &ClusterHierarchy,
    members: &[usize],
    counts: &LossConfig,
    opts: &PairOptions,
    seed: u64,
    coords: &[u64],
) -> Result<BatchPairs> {
    if let Some(&bad) = members.iter().find(|&&i| i >= h.num_instances()) {
        return Err(Error::Shape(format!("batch member {bad} outside {} instances", h.num_instances())));
    }
    let bottom = h.bottom_labels();
    let exclusion = negative_exclusion_labels(h, opts.downward_masking, opts.negative_level);
    let labels: Vec<usize> = members.iter().map(|&i| bottom[i]).collect();
    let neg_labels: Vec<usize> = members.iter().map(|&i| exclusion[i]).collect();
    let mut out = BatchPairs::default();
    for pos in 0..members.len() {
        let mut key = coords.to_vec();
        key.push(pos as u64);
        if opts.instance {
            let mut rng = stream(seed, Stream::InstancePairs, &key);
            out.instance.push(instance_pairs(pos, &labels, &neg_labels, counts.s_pos, counts.s_neg, &mut rng)?);
        }
        if opts.cluster {
            let mut rng = stream(seed, Stream::ClusterPairs, &key);
            out.cluster.push(cluster_pairs(h, members[pos], counts, opts, &mut rng)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Instance,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
}

/// One selected pair, with instances named by hierarchy index. `partition`
/// is 0-based; instance pairs use the bottom partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairDecision {
    pub anchor: usize,
    pub kind: PairKind,
    pub counterpart: usize,
    pub role: Role,
    pub partition: usize,
}

/// Flattens batch pairs into decisions: one per selected instance (its two
/// views count once) and one per drawn prototype. The anchor's own view and
/// own prototype are left out.
pub fn decisions(members: &[usize], pairs: &BatchPairs) -> Vec<PairDecision> {
    let mut out = Vec::new();
    for set in pairs.instance.iter().filter(|s| !s.degenerate) {
        let anchor = members[set.anchor];
        let mut emit = |refs: &[ViewRef], role| {
            for chunk in refs.chunks(2) {
                if chunk[0].view == View::A {
                    let counterpart = members[chunk[0].index];
                    out.push(PairDecision { anchor, kind: PairKind::Instance, counterpart, role, partition: 0 });
                }
            }
        };
        emit(&set.positives, Role::Positive);
        emit(&set.negatives, Role::Negative);
    }
    for set in &pairs.cluster {
        for level in &set.levels {
            for (refs, role) in [(&level.positives[1..], Role::Positive), (&level.negatives[..], Role::Negative)] {
                for r in refs {
                    out.push(PairDecision {
                        anchor: set.anchor,
                        kind: PairKind::Cluster,
                        counterpart: r.cluster,
                        role,
                        partition: r.partition,
                    });
                }
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct DecisionRow {
    anchor_id: usize,
    kind: PairKind,
    counterpart_id: usize,
    role: Role,
    /// 1-based, as in the cluster CSV.
    partition: usize,
}

/// Writes decisions as `anchor_id,kind,counterpart_id,role,partition`.
pub fn write_decisions_csv(decisions: &[PairDecision], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for d in decisions {
        out.serialize(DecisionRow {
            anchor_id: d.anchor,
            kind: d.kind,
            counterpart_id: d.counterpart,
            role: d.role,
            partition: d.partition + 1,
        })
        .map_err(|e| Error::format("decision csv", e.to_string()))?;
    }
    out.flush().map_err(|e| Error::format("decision csv", e.to_string()))
}

pub fn read_decisions_csv(r: impl std::io::Read) -> Result<Vec<PairDecision>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rdr.deserialize::<DecisionRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::format(format!("decision row {}", i + 1), e.to_string()))?;
            if row.partition == 0 {
                return Err(Error::format(format!("decision row {}", i + 1), "partitions are numbered from 1"));
            }
            Ok(PairDecision {
                anchor: row.anchor_id,
                kind: row.kind,
                counterpart: row.counterpart_id,
                role: row.role,
                partition: row.partition - 1,
            })
        })
        .collect()
}

/// Decisions of one pass over `0..n` in shuffled batches of `batch_size`.
pub fn epoch_decisions(
    h: &ClusterHierarchy,
    batch_size: usize,
    counts: &LossConfig,
    opts: &PairOptions,
    seed: u64,
) -> Result<Vec<PairDecision>> {
    let n = h.num_instances();
    if batch_size < 2 {
        return Err(Error::param("batch_size", "must be >= 2"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Stream::Shuffle, &[]));
    let mut out = Vec::new();
    for (b, members) in order.chunks(batch_size).enumerate() {
        let pairs = batch_pairs(h, members, counts, opts, seed, &[b as u64])?;
        out.extend(decisions(members, &pairs));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hclust::{compute_prototypes, Partition};
    use crate::matrix::Matrix;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn counts(h_pos: usize, h_neg: usize, m_used: usize) -> LossConfig {
        LossConfig { h_pos, h_neg, m_used, ..LossConfig::default() }
    }

    fn opts(downward_masking: bool) -> PairOptions {
        PairOptions { downward_masking, negative_level: 0, ..PairOptions::default() }
    }

    fn rng(seed: u64) -> crate::rng::Rng {
        stream(seed, Stream::InstancePairs, &[])
    }

    #[test]
    fn same_cluster_members_become_positives() {
        // batch z1..z5 at positions 0..4; z1,z2,z3 share a bottom cluster
        let labels = [0, 0, 0, 1, 2];
        let set = instance_pairs(0, &labels, &labels, 3, 2, &mut rng(1)).unwrap();
        assert!(!set.degenerate);
        assert_eq!(&set.positives[..2], &[ViewRef::b(0), ViewRef::b(0)]);
        let pos: HashSet<usize> = set.positives[2..].iter().map(|r| r.index).collect();
        assert_eq!(pos, HashSet::from([1, 2]));
        assert_eq!(set.positives[2].view, View::A);
        assert_eq!(set.positives[3].view, View::B);
        let neg: HashSet<usize> = set.negatives.iter().map(|r| r.index).collect();
        assert_eq!(neg, HashSet::from([3, 4]));
    }

    #[test]
    fn singleton_anchor_replicates_own_view() {
        let labels = [0, 1, 1, 2];
        let set = instance_pairs(0, &labels, &labels, 3, 1, &mut rng(2)).unwrap();
        assert_eq!(set.positives, vec![ViewRef::b(0); 6]);
        assert_eq!(set.negatives.len(), 2);
    }

    #[test]
    fn single_positive_is_classic_pairing() {
        let labels = [0, 0, 1];
        let set = instance_pairs(0, &labels, &labels, 1, 1, &mut rng(3)).unwrap();
        assert_eq!(set.positives, vec![ViewRef::b(0); 2]);
        assert_eq!(set.negatives, vec![ViewRef::a(2), ViewRef::b(2)]);
    }

    #[test]
    fn all_same_cluster_is_degenerate() {
        let labels = [4, 4, 4];
        let set = instance_pairs(1, &labels, &labels, 2, 2, &mut rng(4)).unwrap();
        assert!(set.degenerate && set.negatives.is_empty());
        assert!(instance_pairs(0, &labels, &labels, 0, 1, &mut rng(4)).is_err());
    }

    #[test]
    fn exclusion_labels_filter_negatives() {
        let bottom = [0, 1, 2, 3];
        let parent = [0, 0, 1, 1];
        let set = instance_pairs(0, &bottom, &parent, 1, 4, &mut rng(5)).unwrap();
        assert!(set.negatives.iter().all(|r| r.index >= 2));
    }

    fn manual(features: usize, levels: Vec<(Vec<usize>, usize)>) -> ClusterHierarchy {
        let feats = Matrix::from_rows(&(0..features).map(|i| vec![i as f64 + 1.0, 1.0]).collect::<Vec<_>>()).unwrap();
        let mut pts = feats.clone();
        let mut parts = Vec::new();
        for (labels, k) in levels {
            let proto = compute_prototypes(&pts, &labels, k).unwrap();
            pts = proto.clone();
            parts.push(Partition {
                masked: vec![false; labels.len()],
                labels,
                k,
                prototypes_refined: proto.clone(),
                prototypes_original: proto,
                parent_of_cluster: None,
            });
        }
        ClusterHierarchy::from_partitions(feats, parts).unwrap()
    }

    #[test]
    fn siblings_and_parent_are_positives() {
        // P1: {0,1} {2} {3,4} {5}; P2: {c0,c1} {c2,c3}
        let h = manual(6, vec![(vec![0, 0, 1, 2, 2, 3], 4), (vec![0, 0, 1, 1], 2)]);
        let set = cluster_pairs(&h, 0, &counts(3, 2, 2), &opts(true), &mut rng(6)).unwrap();
        let p1 = &set.levels[0];
        assert_eq!(p1.positives[0], ProtoRef { partition: 0, cluster: 0 });
        let rest: HashSet<ProtoRef> = p1.positives[1..].iter().copied().collect();
        assert_eq!(
            rest,
            HashSet::from([ProtoRef { partition: 0, cluster: 1 }, ProtoRef { partition: 1, cluster: 0 }])
        );
        let neg: HashSet<usize> = p1.negatives.iter().map(|r| r.cluster).collect();
        assert_eq!(neg, HashSet::from([2, 3]));
        // top partition has no parent: own prototype only
        let top = &set.levels[1];
        assert_eq!(top.positives, vec![ProtoRef { partition: 1, cluster: 0 }; 3]);
        assert!(top.negatives.iter().all(|r| r.cluster == 1 && r.partition == 1));
    }

    #[test]
    fn no_non_sibling_means_no_negatives() {
        let h = manual(4, vec![(vec![0, 0, 1, 1], 2), (vec![0, 0], 1)]);
        let set = cluster_pairs(&h, 0, &counts(2, 1, 2), &opts(true), &mut rng(7)).unwrap();
        assert_eq!(set.levels.len(), 1);
        assert!(set.levels[0].negatives.is_empty());
        assert_eq!(set.levels[0].positives.len(), 2);
    }

    #[test]
    fn without_downward_masking_only_own_prototype() {
        let h = manual(6, vec![(vec![0, 0, 1, 2, 2, 3], 4), (vec![0, 0, 1, 1], 2)]);
        let set = cluster_pairs(&h, 3, &counts(3, 3, 1), &opts(false), &mut rng(8)).unwrap();
        assert_eq!(set.levels.len(), 1);
        assert_eq!(set.levels[0].positives, vec![ProtoRef { partition: 0, cluster: 2 }; 3]);
        assert!(set.levels[0].negatives.iter().all(|r| r.cluster != 2));
        let masked = cluster_pairs(&h, 3, &counts(3, 3, 1), &opts(true), &mut rng(8)).unwrap();
        let with: HashSet<ProtoRef> = masked.levels[0].positives.iter().copied().collect();
        assert!(with.contains(&set.levels[0].positives[0]));
    }

    proptest! {
        #[test]
        fn instance_cardinality_and_soundness(
            labels in proptest::collection::vec(0usize..5, 2..40),
            s_pos in 1usize..5,
            s_neg in 1usize..8,
            seed in any::<u64>(),
        ) {
            for anchor in 0..labels.len() {
                let a = instance_pairs(anchor, &labels, &labels, s_pos, s_neg, &mut rng(seed)).unwrap();
                let b = instance_pairs(anchor, &labels, &labels, s_pos, s_neg, &mut rng(seed)).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(a.positives.len(), 2 * s_pos);
                prop_assert_eq!(a.positives[0], ViewRef::b(anchor));
                for (j, r) in a.positives.iter().enumerate() {
                    prop_assert_eq!(labels[r.index], labels[anchor]);
                    // odd 1-based slots other than the first use view a
                    if j % 2 == 1 || j == 0 {
                        prop_assert_eq!(r.view, View::B);
                    }
                }
                if a.degenerate {
                    prop_assert!(labels.iter().all(|&l| l == labels[anchor]));
                } else {
                    prop_assert_eq!(a.negatives.len(), 2 * s_neg);
                    prop_assert!(a.negatives.iter().all(|r| labels[r.index] != labels[anchor]));
                }
            }
        }
    }
}
