//! Synthetic data with a planted class hierarchy.
//!
//! Classes are leaves of a binary tree of the given depth: at depth 2 with
//! six classes, classes {0,1}, {2,3} and {4,5} share a parent. Each tree
//! node offsets its center from its parent's by a random direction whose
//! length shrinks by `decay` per level.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n: usize,
    pub classes: usize,
    pub depth: usize,
    pub dim: usize,
    /// Distance of top-level centers from the origin.
    pub spread: f64,
    pub decay: f64,
    /// Per-coordinate standard deviation around a class center.
    pub noise: f64,
    /// 0 gives near-equal class sizes; larger values skew them.
    pub imbalance: f64,
}

impl BlobSpec {
    pub fn new(n: usize, classes: usize, depth: usize) -> Self {
        Self { n, classes, depth, dim: 8, spread: 8.0, decay: 0.35, noise: 1.0, imbalance: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.depth < 1 || self.dim < 1 {
            return Err(Error::param("blobs", "need >= 2 classes, depth >= 1 and dim >= 1"));
        }
        if self.n < 2 * self.classes {
            return Err(Error::param("blobs.n", format!("{} too small for {} classes", self.n, self.classes)));
        }
        if !(self.noise >= 0.0 && self.spread > 0.0 && self.decay > 0.0 && self.imbalance >= 0.0) {
            return Err(Error::param("blobs", "spread, decay must be > 0; noise, imbalance >= 0"));
        }
        Ok(())
    }
}

/// Ancestor of class `c` at tree level `level` (1 = top, `depth` = the
/// class itself).
pub fn ancestor(c: usize, level: usize, depth: usize) -> usize {
    c >> (depth - level)
}

fn random_direction(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Leaf centers, `classes x dim`.
pub fn class_centers(spec: &BlobSpec, rng: &mut Rng) -> Matrix {
    let mut centers = Matrix::zeros(spec.classes, spec.dim);
    let mut scale = spec.spread;
    for level in 1..=spec.depth {
        let nodes = ancestor(spec.classes - 1, level, spec.depth) + 1;
        let offsets: Vec<Vec<f64>> = (0..nodes).map(|_| random_direction(rng, spec.dim)).collect();
        for c in 0..spec.classes {
            let off = &offsets[ancestor(c, level, spec.depth)];
            for (x, o) in centers.row_mut(c).iter_mut().zip(off) {
                *x += scale * o;
            }
        }
        scale *= spec.decay;
    }
    centers
}

/// Class sizes summing to `n`, each at least 2.
pub fn class_sizes(n: usize, classes: usize, imbalance: f64, rng: &mut Rng) -> Vec<usize> {
    let w: Vec<f64> = (0..classes).map(|_| (imbalance * rng.random_range(-1.0..1.0)).exp()).collect();
    let total: f64 = w.iter().sum();
    let spare = n - 2 * classes;
    let mut sizes: Vec<usize> = w.iter().map(|x| 2 + (spare as f64 * x / total).floor() as usize).collect();
    let mut c = 0;
    while sizes.iter().sum::<usize>() < n {
        sizes[c % classes] += 1;
        c += 1;
    }
    sizes
}

/// Points and class labels, ordered by class.
pub fn hierarchical_blobs(spec: &BlobSpec, seed: u64) -> Result<(Matrix, Vec<usize>)> {
    spec.validate()?;
    let mut rng = stream(seed, Stream::Synth, &[0]);
    let centers = class_centers(spec, &mut rng);
    let sizes = class_sizes(spec.n, spec.classes, spec.imbalance, &mut rng);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::param("blobs.noise", e.to_string()))?;
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    let mut labels = Vec::with_capacity(spec.n);
    for (c, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            data.extend(centers.row(c).iter().map(|x| x + noise.sample(&mut rng)));
            labels.push(c);
        }
    }
    Ok((Matrix::from_vec(spec.n, spec.dim, data)?, labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub blobs: BlobSpec,
    pub steps: usize,
    pub vars: usize,
    /// Additive white noise on every observation.
    pub observation_noise: f64,
    /// Largest random circular time shift, in steps.
    pub max_shift: usize,
    /// Basis frequencies are drawn from `[min_cycles, max_cycles)` cycles per
    /// sequence.
    pub min_cycles: f64,
    pub max_cycles: f64,
    /// Tree level whose nodes become the labels: `blobs.depth` labels leaf
    /// classes, 1 labels the top-level groups.
    pub label_level: usize,
}

impl SeriesSpec {
    /// Latent codes in 6 dimensions, mapped through smooth per-variable bases.
    pub fn new(n: usize, classes: usize, depth: usize) -> Self {
        let blobs = BlobSpec { dim: 6, spread: 1.0, decay: 0.5, noise: 0.45, ..BlobSpec::new(n, classes, depth) };
        Self { blobs, steps: 32, vars: 2, observation_noise: 0.3, max_shift: 2, min_cycles: 1.0, max_cycles: 4.0, label_level: depth }
    }
}

/// Multivariate series whose latent codes are hierarchical blobs. Instance
/// `i` is `sum_j z_ij * basis_j(t)` per variable, circularly shifted and
/// noised. Rows are shuffled so classes are interleaved.
pub fn blob_time_series(spec: &SeriesSpec, seed: u64) -> Result<TimeSeriesDataset> {
    if spec.steps < 2 || spec.vars < 1 {
        return Err(Error::param("series", "need steps >= 2 and vars >= 1"));
    }
    if !(1..=spec.blobs.depth).contains(&spec.label_level) {
        return Err(Error::param("series.label_level", format!("must be in 1..={}", spec.blobs.depth)));
    }
    let (codes, labels) = hierarchical_blobs(&spec.blobs, seed)?;
    let mut rng = stream(seed, Stream::Synth, &[1]);
    let l = spec.blobs.dim;
    let (t_len, v_len) = (spec.steps, spec.vars);
    // basis[j][t*V + v]
    let basis: Vec<Vec<f64>> = (0..l)
        .map(|_| {
            let mut b = vec![0.0; t_len * v_len];
            for v in 0..v_len {
                let freq = rng.random_range(spec.min_cycles..spec.max_cycles);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                for t in 0..t_len {
                    let u = t as f64 / t_len as f64;
                    b[t * v_len + v] = (std::f64::consts::TAU * freq * u + phase).sin();
                }
            }
            b
        })
        .collect();
    let noise = Normal::new(0.0, spec.observation_noise).map_err(|e| Error::param("series.noise", e.to_string()))?;
    let n = codes.rows();
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut data = Vec::with_capacity(n * t_len * v_len);
    let mut out_labels = Vec::with_capacity(n);
    for &i in &order {
        let z = codes.row(i);
        let shift = if spec.max_shift == 0 { 0 } else { rng.random_range(0..=2 * spec.max_shift) };
        let mut x = vec![0.0; t_len * v_len];
        for t in 0..t_len {
            let src = (t + t_len + shift - spec.max_shift) % t_len;
            for v in 0..v_len {
                let clean: f64 = (0..l).map(|j| z[j] * basis[j][src * v_len + v]).sum();
                x[t * v_len + v] = clean + noise.sample(&mut rng);
            }
        }
        data.extend(x);
        out_labels.push(ancestor(labels[i], spec.label_level, spec.blobs.depth));
    }
    TimeSeriesDataset::new(n, t_len, v_len, data, Some(out_labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_ancestry() {
        assert_eq!((0..6).map(|c| ancestor(c, 1, 2)).collect::<Vec<_>>(), vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(ancestor(5, 2, 2), 5);
        assert_eq!(ancestor(5, 1, 1), 5);
    }

    #[test]
    fn blob_shapes_and_siblings() {
        let spec = BlobSpec::new(120, 6, 2);
        let (x, y) = hierarchical_blobs(&spec, 3).unwrap();
        assert_eq!((x.rows(), x.cols(), y.len()), (120, 8, 120));
        let mut rng = stream(3, Stream::Synth, &[0]);
        let c = class_centers(&spec, &mut rng);
        let d = |a: usize, b: usize| crate::matrix::dist(c.row(a), c.row(b));
        // siblings are closer than cousins
        assert!(d(0, 1) < d(0, 2) && d(2, 3) < d(3, 4));
        assert_eq!(hierarchical_blobs(&spec, 3).unwrap(), (x, y));
    }

    #[test]
    fn sizes_sum_and_skew() {
        let mut rng = stream(1, Stream::Synth, &[]);
        let s = class_sizes(600, 6, 1.5, &mut rng);
        assert_eq!(s.iter().sum::<usize>(), 600);
        assert!(s.iter().all(|&k| k >= 2));
        assert!(BlobSpec::new(5, 3, 1).validate().is_err());
    }

    #[test]
    fn series_shape() {
        let ds = blob_time_series(&SeriesSpec::new(60, 3, 2), 0).unwrap();
        assert_eq!((ds.len(), ds.steps(), ds.vars()), (60, 32, 2));
        assert_eq!(ds.num_classes(), 3);
        assert!(ds.data().iter().all(|x| x.is_finite()));
        let top = blob_time_series(&SeriesSpec { label_level: 1, ..SeriesSpec::new(60, 6, 2) }, 0).unwrap();
        assert_eq!(top.num_classes(), 3);
        assert!(blob_time_series(&SeriesSpec { label_level: 3, ..SeriesSpec::new(60, 6, 2) }, 0).is_err());
    }
}
