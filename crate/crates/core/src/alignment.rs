//! Class centroids and the distance-matrix alignment losses between the
//! adversarial and clustering branches.
//!
//! Both distance matrices are made scale free before comparison: the
//! centroid-centroid matrix is divided by the mean of its off-diagonal
//! entries and the centroid-sample matrix by the mean of all its entries.
//! The losses therefore compare the shape of the class geometry, not its
//! absolute size.

use serde::{Deserialize, Serialize};

use crate::error::{DcpError, Result};
use crate::tensor::{Graph, Tensor, Var, SQRT_EPS};

pub const DEFAULT_EMA_MOMENTUM: f64 = 0.7;

/// Normalizers at or below this are treated as collapsed geometry.
pub const DEGENERATE_SCALE: f64 = 1e-12;

/// Per-class centroids of one branch's feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidBank {
    pub centroids: Tensor,
    /// Samples behind each centroid. Zero marks a class with no
    /// contributing sample yet.
    pub counts: Vec<usize>,
    pub ema_momentum: f64,
}

impl CentroidBank {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn with_momentum(mut self, ema_momentum: f64) -> Self {
        self.ema_momentum = ema_momentum;
        self
    }
}

/// `K × K` centroid-centroid and `K × N_b` centroid-sample matrices, both
/// relativized.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrices {
    pub d_cc: Tensor,
    pub d_cs: Tensor,
}

/// Row-averaging matrix: entry `(k, i)` is `1 / count_k` when sample `i`
/// has label `k`. Labels of `-1` are skipped.
fn averaging_matrix(labels: &[i64], k: usize, counts: &[usize]) -> Tensor {
    let mut a = Tensor::zeros(k, labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            let c = l as usize;
            a.set(c, i, 1.0 / counts[c] as f64);
        }
    }
    a
}

fn count_labels(blocks: &[&[i64]], k: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; k];
    for labels in blocks {
        for (row, &l) in labels.iter().enumerate() {
            if l < -1 || l >= k as i64 {
                return Err(DcpError::LabelOutOfRange { row, label: l, classes: k });
            }
            if l >= 0 {
                counts[l as usize] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(DcpError::EmptyInput("no labelled sample to build centroids from".into()));
    }
    Ok(counts)
}

/// Differentiable per-class means over several feature blocks that share a
/// label space. Each block is `(features, labels)` with `-1` for unlabeled
/// rows. Classes without samples get a zero row and a zero count.
pub fn centroids_in_graph(g: &mut Graph, blocks: &[(Var, &[i64])], k: usize) -> Result<(Var, Vec<usize>)> {
    let label_blocks: Vec<&[i64]> = blocks.iter().map(|(_, l)| *l).collect();
    let counts = count_labels(&label_blocks, k)?;
    let mut acc: Option<Var> = None;
    for &(features, labels) in blocks {
        if g.value(features).rows() != labels.len() {
            return Err(DcpError::Shape {
                op: "compute_centroids",
                lhs: g.value(features).shape(),
                rhs: (labels.len(), 1),
            });
        }
        if labels.iter().all(|&l| l < 0) {
            continue;
        }
        let avg = g.constant(averaging_matrix(labels, k, &counts));
        let part = g.matmul(avg, features)?;
        acc = Some(match acc {
            Some(a) => g.add(a, part)?,
            None => part,
        });
    }
    Ok((acc.expect("at least one labelled block"), counts))
}

/// Per-class mean of `features` rows labelled `0..k`; rows labelled `-1`
/// are ignored.
pub fn compute_centroids(features: &Tensor, labels: &[i64], k: usize) -> Result<CentroidBank> {
    let mut g = Graph::new();
    let f = g.constant(features.clone());
    let (c, counts) = centroids_in_graph(&mut g, &[(f, labels)], k)?;
    Ok(CentroidBank {
        centroids: g.value(c).clone(),
        counts,
        ema_momentum: DEFAULT_EMA_MOMENTUM,
    })
}

/// Mixing weight applied to the fresh centroid of each class.
fn fresh_weights(old: Option<&CentroidBank>, fresh_counts: &[usize]) -> Vec<f64> {
    fresh_counts
        .iter()
        .enumerate()
        .map(|(k, &n)| match old {
            _ if n == 0 => 0.0,
            Some(o) if o.counts[k] > 0 => 1.0 - o.ema_momentum,
            _ => 1.0,
        })
        .collect()
}

fn merged_counts(old: Option<&CentroidBank>, fresh_counts: &[usize]) -> Vec<usize> {
    fresh_counts
        .iter()
        .enumerate()
        .map(|(k, &n)| if n > 0 { n } else { old.map_or(0, |o| o.counts[k]) })
        .collect()
}

/// Exponential moving average of centroids, recorded on `g` so gradients
/// reach the fresh centroids. The old bank is treated as a constant.
///
/// With no old bank, or for a class the old bank has never seen, the fresh
/// centroid is taken as is. Classes absent from the fresh batch keep their
/// old centroid.
pub fn ema_in_graph(
    g: &mut Graph,
    old: Option<&CentroidBank>,
    fresh: Var,
    fresh_counts: &[usize],
) -> Result<(Var, Vec<usize>)> {
    let (k, d) = g.value(fresh).shape();
    if fresh_counts.len() != k {
        return Err(DcpError::Shape {
            op: "update_centroids_ema",
            lhs: (k, d),
            rhs: (fresh_counts.len(), d),
        });
    }
    if let Some(o) = old {
        if o.centroids.shape() != (k, d) {
            return Err(DcpError::Shape {
                op: "update_centroids_ema",
                lhs: o.centroids.shape(),
                rhs: (k, d),
            });
        }
    }
    let w = fresh_weights(old, fresh_counts);
    let mut fresh_mix = Tensor::zeros(k, k);
    let mut old_mix = Tensor::zeros(k, k);
    for (i, &wi) in w.iter().enumerate() {
        fresh_mix.set(i, i, wi);
        old_mix.set(i, i, 1.0 - wi);
    }
    let fm = g.constant(fresh_mix);
    let mut out = g.matmul(fm, fresh)?;
    if let Some(o) = old {
        let om = g.constant(old_mix);
        let oc = g.constant(o.centroids.clone());
        let kept = g.matmul(om, oc)?;
        out = g.add(out, kept)?;
    }
    Ok((out, merged_counts(old, fresh_counts)))
}

/// `c <- θ c_old + (1 - θ) c_fresh` for every class present in `fresh`,
/// with `θ = bank.ema_momentum`.
pub fn update_centroids_ema(bank: &CentroidBank, fresh: &CentroidBank) -> Result<CentroidBank> {
    if bank.centroids.shape() != fresh.centroids.shape() || bank.counts.len() != fresh.counts.len() {
        return Err(DcpError::Shape {
            op: "update_centroids_ema",
            lhs: bank.centroids.shape(),
            rhs: fresh.centroids.shape(),
        });
    }
    let w = fresh_weights(Some(bank), &fresh.counts);
    let mut centroids = bank.centroids.clone();
    for (k, &wk) in w.iter().enumerate() {
        for c in 0..centroids.cols() {
            let v = (1.0 - wk) * bank.centroids.get(k, c) + wk * fresh.centroids.get(k, c);
            centroids.set(k, c, v);
        }
    }
    Ok(CentroidBank {
        centroids,
        counts: merged_counts(Some(bank), &fresh.counts),
        ema_momentum: bank.ema_momentum,
    })
}

/// Centroid-centroid distances divided by their off-diagonal mean.
pub fn relative_centroid_distances(g: &mut Graph, centroids: Var) -> Result<Var> {
    let k = g.value(centroids).rows();
    if k < 2 {
        return Err(DcpError::InvalidInput(format!("need at least 2 centroids, got {k}")));
    }
    let d = g.pairwise_euclidean(centroids, centroids)?;
    // the diagonal is exactly zero, so the full sum is the off-diagonal sum
    let total = g.sum(d);
    let mean = g.scale(total, 1.0 / (k * (k - 1)) as f64);
    relativize(g, d, mean, "all centroids coincide")
}

/// Centroid-sample distances (`K × N_b`) divided by their mean.
pub fn relative_sample_distances(g: &mut Graph, centroids: Var, features: Var) -> Result<Var> {
    let d = g.pairwise_euclidean(centroids, features)?;
    let mean = g.mean(d)?;
    relativize(g, d, mean, "every sample sits on every centroid")
}

fn relativize(g: &mut Graph, d: Var, mean: Var, what: &str) -> Result<Var> {
    let m = g.scalar_value(mean)?;
    if m.is_nan() || m <= DEGENERATE_SCALE {
        return Err(DcpError::DegenerateGeometry(format!("{what} (mean distance {m:e})")));
    }
    g.div_scalar(d, mean)
}

pub fn centroid_centroid_matrix(bank: &CentroidBank) -> Result<Tensor> {
    let mut g = Graph::new();
    let c = g.constant(bank.centroids.clone());
    let m = relative_centroid_distances(&mut g, c)?;
    Ok(g.value(m).clone())
}

pub fn centroid_sample_matrix(bank: &CentroidBank, features: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let c = g.constant(bank.centroids.clone());
    let f = g.constant(features.clone());
    let m = relative_sample_distances(&mut g, c, f)?;
    Ok(g.value(m).clone())
}

pub fn distance_matrices(bank: &CentroidBank, features: &Tensor) -> Result<DistanceMatrices> {
    Ok(DistanceMatrices {
        d_cc: centroid_centroid_matrix(bank)?,
        d_cs: centroid_sample_matrix(bank, features)?,
    })
}

/// Mesoscopic alignment loss `(1/K²) sqrt(Σ (adv - cluster)² + ε)`.
pub fn loss_cc(g: &mut Graph, m_cluster: Var, m_adv: Var) -> Result<Var> {
    let (k, cols) = g.value(m_cluster).shape();
    if k != cols {
        return Err(DcpError::Shape {
            op: "loss_cc",
            lhs: (k, cols),
            rhs: (k, k),
        });
    }
    frobenius_mismatch(g, m_cluster, m_adv, 1.0 / (k * k) as f64, "loss_cc")
}

/// Microscopic alignment loss `(1/(K N_b)) sqrt(Σ (adv - cluster)² + ε)`.
pub fn loss_cs(g: &mut Graph, m_cluster: Var, m_adv: Var) -> Result<Var> {
    let (k, n) = g.value(m_cluster).shape();
    frobenius_mismatch(g, m_cluster, m_adv, 1.0 / (k * n) as f64, "loss_cs")
}

fn frobenius_mismatch(g: &mut Graph, a: Var, b: Var, scale: f64, op: &'static str) -> Result<Var> {
    if g.value(a).shape() != g.value(b).shape() {
        return Err(DcpError::Shape {
            op,
            lhs: g.value(a).shape(),
            rhs: g.value(b).shape(),
        });
    }
    let diff = g.sub(b, a)?;
    let sq = g.square(diff);
    let total = g.sum(sq);
    let root = g.sqrt_eps(total, SQRT_EPS)?;
    Ok(g.scale(root, scale))
}
