//! Sigmoid-BCE contrastive losses at instance and cluster level, with
//! analytic gradients with respect to query-encoder embeddings.

use crate::error::{Error, Result};
use crate::hclust::ClusterHierarchy;
use crate::matrix::{dot, Matrix};
use crate::pairsel::{ClusterPairSet, InstancePairSet, View, ViewRef};

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
    pub s_pos: usize,
    pub s_neg: usize,
    pub h_pos: usize,
    pub h_neg: usize,
    pub m_used: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau: 0.2, s_pos: 3, s_neg: 12, h_pos: 3, h_neg: 12, m_used: 3 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::param("loss.tau", format!("{} must be > 0", self.tau)));
        }
        let counts = [self.s_pos, self.s_neg, self.h_pos, self.h_neg, self.m_used];
        if counts.contains(&0) {
            return Err(Error::param("loss", "pair counts and m_used must be >= 1"));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(x)`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Similarity and its gradients with respect to `a` and `b`.
fn cosine_with_grads(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (na2, nb2) = (dot(a, a), dot(b, b));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let inv = 1.0 / (na2.sqrt() * nb2.sqrt());
    let s = dot(a, b) * inv;
    let ga = a.iter().zip(b).map(|(x, y)| y * inv - s * x / na2).collect();
    let gb = a.iter().zip(b).map(|(x, y)| x * inv - s * y / nb2).collect();
    Ok((s, ga, gb))
}

/// Loss of one pair and d(loss)/d(similarity).
fn pair_term(sim: f64, tau: f64, positive: bool) -> (f64, f64) {
    let x = sim / tau;
    if positive {
        (neg_log_sigmoid(x), (sigmoid(x) - 1.0) / tau)
    } else {
        (neg_log_sigmoid(-x), sigmoid(x) / tau)
    }
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLoss {
    pub value: f64,
    pub grad_anchor: Vec<f64>,
    /// Gradients for query-encoder counterparts, keyed by batch position.
    pub grad_counterparts: Vec<(usize, Vec<f64>)>,
}

/// Instance-level loss of one anchor. `za` holds query embeddings of view a
/// and `hb` momentum embeddings of view b, both indexed by batch position.
/// Gradients reach `za` rows only.
pub fn instance_loss(
    anchor: &[f64],
    pairs: &InstancePairSet,
    za: &Matrix,
    hb: &Matrix,
    cfg: &LossConfig,
) -> Result<InstanceLoss> {
    let d = anchor.len();
    let mut out = InstanceLoss { value: 0.0, grad_anchor: vec![0.0; d], grad_counterparts: Vec::new() };
    if pairs.degenerate {
        return Ok(out);
    }
    let lookup = |r: &ViewRef| match r.view {
        View::A => za.row(r.index),
        View::B => hb.row(r.index),
    };
    let terms = pairs.positives.iter().map(|r| (r, true)).chain(pairs.negatives.iter().map(|r| (r, false)));
    for (r, positive) in terms {
        let (s, ga, gb) = cosine_with_grads(anchor, lookup(r))?;
        let (l, dl) = pair_term(s, cfg.tau, positive);
        out.value += l;
        axpy(&mut out.grad_anchor, dl, &ga);
        if r.view == View::A {
            let g: Vec<f64> = gb.iter().map(|x| dl * x).collect();
            match out.grad_counterparts.iter_mut().find(|(i, _)| *i == r.index) {
                Some((_, acc)) => axpy(acc, 1.0, &g),
                None => out.grad_counterparts.push((r.index, g)),
            }
        }
    }
    Ok(out)
}

/// Cluster-level loss of one anchor: the mean over contributing partitions.
/// Prototypes are constants, so only the anchor receives a gradient.
pub fn cluster_loss(
    anchor: &[f64],
    pairs: &ClusterPairSet,
    h: &ClusterHierarchy,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; anchor.len()];
    let mut total = 0.0;
    let mut count = 0usize;
    for level in &pairs.levels {
        if level.positives.is_empty() {
            continue;
        }
        count += 1;
        let terms = level.positives.iter().map(|r| (r, true)).chain(level.negatives.iter().map(|r| (r, false)));
        for (r, positive) in terms {
            let (s, ga, _) = cosine_with_grads(anchor, h.prototype(r.partition, r.cluster))?;
            let (l, dl) = pair_term(s, cfg.tau, positive);
            total += l;
            axpy(&mut grad, dl, &ga);
        }
    }
    if count == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}

/// Per-anchor result: loss parts and gradient rows into the view-a
/// embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLoss {
    pub anchor: usize,
    pub instance: f64,
    pub cluster: f64,
    pub grad_rows: Vec<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub instance_part: f64,
    pub cluster_part: f64,
    pub per_anchor: Vec<f64>,
    pub grad: Matrix,
}

/// Sums anchors in the given order into a `b x d` gradient matrix.
pub fn overall_loss(b: usize, d: usize, anchors: &[AnchorLoss]) -> Result<LossBreakdown> {
    let mut grad = Matrix::zeros(b, d);
    let (mut inst, mut clu) = (0.0, 0.0);
    let mut per_anchor = Vec::with_capacity(anchors.len());
    for a in anchors {
        inst += a.instance;
        clu += a.cluster;
        per_anchor.push(a.instance + a.cluster);
        for (row, g) in &a.grad_rows {
            if *row >= b || g.len() != d {
                return Err(Error::Shape(format!("gradient row {row} of length {} for {b}x{d}", g.len())));
            }
            axpy(grad.row_mut(*row), 1.0, g);
        }
    }
    let total = inst + clu;
    if !total.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(LossBreakdown { total, instance_part: inst, cluster_part: clu, per_anchor, grad })
}

/// Loss of one anchor from its (optional) pair sets.
pub fn anchor_loss(
    anchor: usize,
    za: &Matrix,
    hb: &Matrix,
    instance: Option<&InstancePairSet>,
    cluster: Option<(&ClusterPairSet, &ClusterHierarchy)>,
    cfg: &LossConfig,
) -> Result<AnchorLoss> {
    let z = za.row(anchor);
    let mut grad_rows = Vec::new();
    let mut own = vec![0.0; z.len()];
    let mut out = AnchorLoss { anchor, instance: 0.0, cluster: 0.0, grad_rows: Vec::new() };
    if let Some(pairs) = instance {
        let l = instance_loss(z, pairs, za, hb, cfg)?;
        out.instance = l.value;
        axpy(&mut own, 1.0, &l.grad_anchor);
        grad_rows.extend(l.grad_counterparts);
    }
    if let Some((pairs, h)) = cluster {
        let (l, g) = cluster_loss(z, pairs, h, cfg)?;
        out.cluster = l;
        axpy(&mut own, 1.0, &g);
    }
    grad_rows.insert(0, (anchor, own));
    out.grad_rows = grad_rows;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hclust::{compute_prototypes, Partition};
    use crate::pairsel::{PartitionPairs, ProtoRef};

    const LN2: f64 = std::f64::consts::LN_2;

    fn unit(d: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    }

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -0.5];
        assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((cosine_sim(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn stable_log_sigmoid() {
        assert!((neg_log_sigmoid(0.0) - LN2).abs() < 1e-15);
        assert!(neg_log_sigmoid(800.0) >= 0.0);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-9);
    }

    fn one_pair_setup(pos_sim_vec: Vec<f64>, neg_vec: Vec<f64>) -> (Vec<f64>, InstancePairSet, Matrix, Matrix) {
        // batch: 0 = anchor, 1 = negative
        let anchor = unit(2, 0);
        let za = Matrix::from_rows(&[anchor.clone(), neg_vec.clone()]).unwrap();
        let hb = Matrix::from_rows(&[pos_sim_vec, neg_vec]).unwrap();
        let pairs = InstancePairSet {
            anchor: 0,
            positives: vec![ViewRef::b(0), ViewRef::b(0)],
            negatives: vec![ViewRef::a(1), ViewRef::b(1)],
            degenerate: false,
        };
        (anchor, pairs, za, hb)
    }

    #[test]
    fn instance_loss_values() {
        let cfg = LossConfig { tau: 1.0, s_pos: 1, s_neg: 1, ..LossConfig::default() };
        let (z, pairs, za, hb) = one_pair_setup(unit(2, 1), unit(2, 1));
        let l = instance_loss(&z, &pairs, &za, &hb, &cfg).unwrap();
        assert!((l.value - 4.0 * LN2).abs() < 1e-12);
        assert!((l.value - 2.7726).abs() < 1e-4);

        let (z, pairs, za, hb) = one_pair_setup(unit(2, 0), vec![-1.0, 0.0]);
        let l = instance_loss(&z, &pairs, &za, &hb, &cfg).unwrap();
        let expect = 4.0 * -(1.0 / (1.0 + (-1.0f64).exp())).ln();
        assert!((l.value - expect).abs() < 1e-12);
        assert!((l.value - 1.2530).abs() < 1e-4);

        let mut deg = pairs.clone();
        deg.degenerate = true;
        let l = instance_loss(&z, &deg, &za, &hb, &cfg).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad_anchor.iter().all(|&g| g == 0.0) && l.grad_counterparts.is_empty());
    }

    fn hierarchy_two_levels() -> ClusterHierarchy {
        let feats = Matrix::from_rows(&[
            vec![1.0, 0.2, 0.0],
            vec![0.9, -0.1, 0.3],
            vec![-0.2, 1.0, 0.1],
            vec![0.1, 0.8, -0.6],
        ])
        .unwrap();
        let l1 = vec![0, 0, 1, 2];
        let p1 = compute_prototypes(&feats, &l1, 3).unwrap();
        let l2 = vec![0, 1, 1];
        let p2 = compute_prototypes(&p1, &l2, 2).unwrap();
        let mk = |labels: Vec<usize>, k, proto: Matrix| Partition {
            masked: vec![false; labels.len()],
            labels,
            k,
            prototypes_refined: proto.clone(),
            prototypes_original: proto,
            parent_of_cluster: None,
        };
        ClusterHierarchy::from_partitions(feats, vec![mk(l1, 3, p1), mk(l2, 2, p2)]).unwrap()
    }

    #[test]
    fn cluster_loss_values() {
        let h = hierarchy_two_levels();
        let cfg = LossConfig { tau: 1.0, ..LossConfig::default() };
        let anchor = [0.0, 0.0, 0.0];
        assert!(cluster_loss(
            &anchor,
            &ClusterPairSet {
                anchor: 0,
                levels: vec![PartitionPairs {
                    partition: 0,
                    positives: vec![ProtoRef { partition: 0, cluster: 0 }],
                    negatives: vec![],
                }],
            },
            &h,
            &cfg
        )
        .is_err());

        // a prototype-orthogonal anchor: sims 0 at both pairs
        let p0 = h.prototype(0, 0).to_vec();
        let p1 = h.prototype(0, 1).to_vec();
        let n = cross(&p0, &p1);
        let one = ClusterPairSet {
            anchor: 0,
            levels: vec![PartitionPairs {
                partition: 0,
                positives: vec![ProtoRef { partition: 0, cluster: 0 }],
                negatives: vec![ProtoRef { partition: 0, cluster: 1 }],
            }],
        };
        let (l, _) = cluster_loss(&n, &one, &h, &cfg).unwrap();
        assert!((l - 2.0 * LN2).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
    }

    fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
        vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    }

    #[test]
    fn cluster_loss_averages_partitions() {
        let h = hierarchy_two_levels();
        let cfg = LossConfig { tau: 0.5, ..LossConfig::default() };
        let z = [0.3, -0.4, 0.8];
        let lvl0 = PartitionPairs {
            partition: 0,
            positives: vec![ProtoRef { partition: 0, cluster: 0 }],
            negatives: vec![ProtoRef { partition: 0, cluster: 2 }],
        };
        let lvl1 = PartitionPairs {
            partition: 1,
            positives: vec![ProtoRef { partition: 1, cluster: 1 }; 2],
            negatives: vec![ProtoRef { partition: 1, cluster: 0 }; 3],
        };
        let single = |l: &PartitionPairs| {
            cluster_loss(&z, &ClusterPairSet { anchor: 0, levels: vec![l.clone()] }, &h, &cfg).unwrap().0
        };
        let (a, b) = (single(&lvl0), single(&lvl1));
        let both = cluster_loss(&z, &ClusterPairSet { anchor: 0, levels: vec![lvl0, lvl1] }, &h, &cfg).unwrap().0;
        assert!((both - (a + b) / 2.0).abs() < 1e-12);
        let none = cluster_loss(&z, &ClusterPairSet { anchor: 0, levels: vec![] }, &h, &cfg).unwrap();
        assert_eq!(none.0, 0.0);
    }

    #[test]
    fn overall_sums() {
        let a = AnchorLoss { anchor: 0, instance: 1.5, cluster: 0.25, grad_rows: vec![(0, vec![1.0, 2.0])] };
        let b = AnchorLoss { anchor: 1, instance: 0.5, cluster: 0.0, grad_rows: vec![(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0])] };
        let one = overall_loss(2, 2, std::slice::from_ref(&a)).unwrap();
        assert_eq!(one.total, 1.75);
        let two = overall_loss(2, 2, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(two.instance_part, 2.0);
        assert_eq!(two.grad.row(0), &[2.0, 2.0]);
        let doubled = overall_loss(2, 2, &[a.clone(), b.clone(), a, b]).unwrap();
        assert_eq!(doubled.total, 2.0 * two.total);
        let empty = overall_loss(2, 2, &[]).unwrap();
        assert_eq!(empty.total, 0.0);
        assert!(empty.grad.as_slice().iter().all(|&g| g == 0.0));
    }
}
