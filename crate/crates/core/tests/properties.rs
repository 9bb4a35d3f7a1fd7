use std::collections::{BTreeMap, BTreeSet};

use mhccl::evalmetrics::{count_false_negatives, kmeans};
use mhccl::hclust::{build_hierarchy, read_partitions_csv, write_partitions_csv, MaskConfig, MaskStrategy};
use mhccl::loss::LossConfig;
use mhccl::matrix::Matrix;
use mhccl::pairsel::{
    batch_pairs, cluster_pairs, decisions, epoch_decisions, read_decisions_csv, write_decisions_csv, PairOptions,
};
use mhccl::rng::{stream, Stream};
use proptest::prelude::*;
use rand::Rng;

fn points(seed: u64, n: usize, d: usize) -> Matrix {
    let mut r = stream(seed, Stream::Synth, &[99]);
    let data = (0..n * d).map(|_| r.random_range(-4.0..4.0)).collect();
    Matrix::from_vec(n, d, data).unwrap()
}

/// Instance index sets of every cluster at every partition.
fn induced_sets(labels: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let mut m: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        m.entry(c).or_default().insert(i);
    }
    m.into_values().collect()
}

fn counts() -> LossConfig {
    LossConfig { s_pos: 2, s_neg: 4, h_pos: 3, h_neg: 4, m_used: 3, ..LossConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hierarchy_is_permutation_equivariant(n in 3usize..50, d in 1usize..4, seed in any::<u64>()) {
        let x = points(seed, n, d);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut stream(seed, Stream::Shuffle, &[]));
        let h = build_hierarchy(&x, &MaskConfig::none()).unwrap();
        let hp = build_hierarchy(&x.select_rows(&perm), &MaskConfig::none()).unwrap();
        prop_assert_eq!(h.len(), hp.len());
        for p in 0..h.len() {
            let back: Vec<usize> = {
                let lp = hp.instance_labels(p);
                let mut v = vec![0; n];
                for (pos, &orig) in perm.iter().enumerate() {
                    v[orig] = lp[pos];
                }
                v
            };
            prop_assert_eq!(induced_sets(h.instance_labels(p)), induced_sets(&back));
        }
    }

    #[test]
    fn refined_prototypes_are_unmasked_means(n in 3usize..50, d in 1usize..4, seed in any::<u64>(), t in 0.1f64..3.0) {
        let x = points(seed, n, d);
        for cfg in [
            MaskConfig { parameter: t, apply_at: [1, 2, 3].into(), ..MaskConfig::default() },
            MaskConfig { strategy: MaskStrategy::Proportion, parameter: 0.4, apply_at: [1, 2].into() },
        ] {
            let h = build_hierarchy(&x, &cfg).unwrap();
            let mut level_points = x.clone();
            for part in h.partitions() {
                for c in 0..part.k {
                    let members: Vec<usize> = (0..part.labels.len()).filter(|&i| part.labels[i] == c).collect();
                    let kept: Vec<usize> = members.iter().copied().filter(|&i| !part.masked[i]).collect();
                    let want: Vec<f64> = if kept.is_empty() {
                        part.prototypes_original.row(c).to_vec()
                    } else {
                        (0..d).map(|j| kept.iter().map(|&i| level_points.row(i)[j]).sum::<f64>() / kept.len() as f64).collect()
                    };
                    for (a, b) in part.prototypes_refined.row(c).iter().zip(&want) {
                        prop_assert!((a - b).abs() < 1e-5);
                    }
                }
                level_points = part.prototypes_refined.clone();
            }
        }
    }

    #[test]
    fn downward_masking_only_removes_negatives(n in 8usize..60, seed in any::<u64>(), anchor_pick in any::<u64>()) {
        let x = points(seed, n, 2).l2_normalized();
        let h = build_hierarchy(&x, &MaskConfig::default()).unwrap();
        let anchor = (anchor_pick % n as u64) as usize;
        let with = PairOptions { negative_level: 0, ..PairOptions::default() };
        let without = PairOptions { downward_masking: false, ..with };
        let a = cluster_pairs(&h, anchor, &counts(), &with, &mut stream(seed, Stream::ClusterPairs, &[])).unwrap();
        let b = cluster_pairs(&h, anchor, &counts(), &without, &mut stream(seed, Stream::ClusterPairs, &[])).unwrap();
        prop_assert_eq!(a.levels.len(), b.levels.len());
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            let p = la.partition;
            let own = h.instance_labels(p)[anchor];
            prop_assert_eq!(la.positives[0].cluster, own);
            prop_assert!(lb.positives.iter().all(|r| r.cluster == own && r.partition == p));
            if p + 1 < h.len() {
                let parent = h.partitions()[p].parent_of_cluster.as_ref().unwrap();
                // every negative under masking lies outside the anchor's parent
                prop_assert!(la.negatives.iter().all(|r| parent[r.cluster] != parent[own]));
                // every extra positive is a sibling or the parent
                for r in &la.positives[1..] {
                    let sibling = r.partition == p && parent[r.cluster] == parent[own];
                    let is_parent = r.partition == p + 1 && r.cluster == parent[own];
                    prop_assert!(sibling || is_parent || (r.partition == p && r.cluster == own));
                }
            }
        }
    }

    #[test]
    fn pairs_are_deterministic(n in 6usize..40, seed in any::<u64>()) {
        let x = points(seed, n, 3).l2_normalized();
        let h = build_hierarchy(&x, &MaskConfig::default()).unwrap();
        let members: Vec<usize> = (0..n).rev().collect();
        let opts = PairOptions::default();
        let a = batch_pairs(&h, &members, &counts(), &opts, seed, &[1, 2]).unwrap();
        let b = batch_pairs(&h, &members, &counts(), &opts, seed, &[1, 2]).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn audit_is_sound_with_labels_as_clusters(n in 12usize..80, k in 2usize..5, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let x = points(seed, n, 2);
        let proto = mhccl::hclust::compute_prototypes(&x, &labels, k).unwrap();
        let part = mhccl::hclust::Partition {
            masked: vec![false; n],
            labels: labels.clone(),
            k,
            prototypes_refined: proto.clone(),
            prototypes_original: proto,
            parent_of_cluster: None,
        };
        let h = mhccl::hclust::ClusterHierarchy::from_partitions(x, vec![part]).unwrap();
        let ds = epoch_decisions(&h, 8, &counts(), &PairOptions::default(), seed).unwrap();
        let audit = count_false_negatives(&ds, &vec![labels.clone()], &labels).unwrap();
        prop_assert_eq!(audit.false_instance_negatives, 0);
        prop_assert_eq!(audit.false_cluster_negatives, 0);
        prop_assert!(audit.total_instance_negatives > 0);
    }

    #[test]
    fn kmeans_inertia_never_increases(n in 3usize..60, k in 1usize..6, seed in any::<u64>()) {
        let x = points(seed, n, 2);
        let r = kmeans(&x, k.min(n), 30, seed).unwrap();
        prop_assert!(r.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }
}

#[test]
fn decision_and_partition_csv_round_trip() {
    let x = points(7, 40, 2).l2_normalized();
    let h = build_hierarchy(&x, &MaskConfig::default()).unwrap();
    let members: Vec<usize> = (0..16).collect();
    let pairs = batch_pairs(&h, &members, &counts(), &PairOptions::default(), 7, &[]).unwrap();
    let ds = decisions(&members, &pairs);
    let mut buf = Vec::new();
    write_decisions_csv(&ds, &mut buf).unwrap();
    assert!(buf.starts_with(b"anchor_id,kind,counterpart_id,role,partition\n"));
    assert_eq!(read_decisions_csv(buf.as_slice()).unwrap(), ds);

    let mut buf = Vec::new();
    let ids: Vec<usize> = (0..40).collect();
    write_partitions_csv(&h, &ids, &mut buf).unwrap();
    let back = read_partitions_csv(buf.as_slice()).unwrap();
    let want: Vec<Vec<usize>> = (0..h.len()).map(|p| h.instance_labels(p).to_vec()).collect();
    assert_eq!(back, want);
    assert!(read_partitions_csv("partition,instance_id,cluster_id,masked\n0,0,0,0\n".as_bytes()).is_err());
    assert!(read_decisions_csv("anchor_id,kind,counterpart_id,role,partition\n1,instance,2,maybe,1\n".as_bytes()).is_err());
}
