//! Pseudo-labels for the target domain: K-means on the clustering branch
//! and the double-threshold high-confidence filter.
//!
//! Each branch admits, per predicted class, only the samples closest to that
//! class's centroid; the admitted fraction grows with the iteration count.
//! A sample is pseudo-labelled only when both branches admit it with the
//! same label.

use serde::{Deserialize, Serialize};

use crate::error::{DcpError, Result};
use crate::tensor::Tensor;

/// Admitted fraction for the adversarial branch: `1/(1+e^(-0.0001 T²)) - 0.1`.
pub fn tau_adv(t: u64) -> f64 {
    let t = t as f64;
    1.0 / (1.0 + (-0.0001 * t * t).exp()) - 0.1
}

/// Admitted fraction for the clustering branch: `1/(1+e^(-0.01 T))`.
pub fn tau_clu(t: u64) -> f64 {
    1.0 / (1.0 + (-0.01 * t as f64).exp())
}

/// Iteration counter with both schedule values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub t: u64,
    pub tau_adv: f64,
    pub tau_clu: f64,
}

impl ThresholdState {
    pub fn at(t: u64) -> Self {
        Self {
            t,
            tau_adv: tau_adv(t),
            tau_clu: tau_clu(t),
        }
    }

    pub fn advance(&mut self) {
        *self = Self::at(self.t + 1);
    }
}

impl Default for ThresholdState {
    fn default() -> Self {
        Self::at(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Tensor,
    pub iterations: usize,
    pub converged: bool,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest_centroid(point: &[f64], centroids: &Tensor) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..centroids.rows() {
        let d = squared_distance(point, centroids.row(k));
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Lloyd's algorithm from the given initial centroids. Stops when an
/// assignment repeats or after `max_iters` assignment passes. An empty
/// cluster keeps its previous centroid.
pub fn kmeans_assign(features: &Tensor, init_centroids: &Tensor, max_iters: usize) -> Result<KMeansResult> {
    let (n, d) = features.shape();
    let k = init_centroids.rows();
    if init_centroids.cols() != d {
        return Err(DcpError::Shape {
            op: "kmeans_assign",
            lhs: features.shape(),
            rhs: init_centroids.shape(),
        });
    }
    if k == 0 || k > n {
        return Err(DcpError::InvalidInput(format!(
            "k-means needs 1 <= K <= N, got K={k}, N={n}"
        )));
    }
    if max_iters == 0 {
        return Err(DcpError::InvalidInput("k-means needs max_iters >= 1".into()));
    }

    let mut centroids = init_centroids.clone();
    let mut labels: Vec<usize> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let next: Vec<usize> = (0..n).map(|i| nearest_centroid(features.row(i), &centroids)).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;

        let mut sums = Tensor::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (c, v) in features.row(i).iter().enumerate() {
                sums.data_mut()[l * d + c] += v;
            }
        }
        for (l, &cnt) in counts.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            for c in 0..d {
                centroids.set(l, c, sums.get(l, c) / cnt as f64);
            }
        }
    }
    Ok(KMeansResult {
        labels,
        centroids,
        iterations,
        converged,
    })
}

/// One branch's view of the target mini-batch.
#[derive(Clone, Copy, Debug)]
pub struct BranchView<'a> {
    /// `N_b × d` target features in this branch's space.
    pub features: &'a Tensor,
    /// Predicted class per target sample.
    pub labels: &'a [usize],
    /// `K × d` class centroids used for ranking.
    pub centroids: &'a Tensor,
}

/// Target samples accepted by the double-threshold filter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelBatch {
    /// Batch positions, ascending.
    pub selected_indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub dist_adv: Vec<f64>,
    pub dist_clu: Vec<f64>,
    pub quota_adv: usize,
    pub quota_clu: usize,
    /// Set when the batch holds fewer samples than classes.
    pub quota_degenerate: bool,
}

impl PseudoLabelBatch {
    pub fn len(&self) -> usize {
        self.selected_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_indices.is_empty()
    }

    /// Length-`n` label vector with `-1` for unselected positions.
    pub fn dense_labels(&self, n: usize) -> Vec<i64> {
        let mut out = vec![-1; n];
        for (&i, &l) in self.selected_indices.iter().zip(&self.labels) {
            out[i] = l as i64;
        }
        out
    }
}

/// Per-class quota `floor(tau * N_b / K)`.
pub fn class_quota(tau: f64, batch: usize, classes: usize) -> usize {
    (tau * batch as f64 / classes as f64).floor() as usize
}

/// Distance of each sample to its predicted class's centroid, and whether it
/// ranks inside the class quota (ascending distance, ties by batch index).
fn admitted(view: &BranchView, classes: usize, quota: usize) -> (Vec<bool>, Vec<f64>) {
    let n = view.features.rows();
    let dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(view.features.row(i), view.centroids.row(view.labels[i])).sqrt())
        .collect();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in view.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut ok = vec![false; n];
    for members in &mut by_class {
        members.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        for &i in members.iter().take(quota) {
            ok[i] = true;
        }
    }
    (ok, dist)
}

fn check_view(view: &BranchView, n: usize, classes: usize) -> Result<()> {
    if view.labels.len() != n || view.features.rows() != n {
        return Err(DcpError::Shape {
            op: "select_high_confidence",
            lhs: view.features.shape(),
            rhs: (view.labels.len(), 1),
        });
    }
    if view.centroids.rows() != classes || view.centroids.cols() != view.features.cols() {
        return Err(DcpError::Shape {
            op: "select_high_confidence",
            lhs: view.centroids.shape(),
            rhs: (classes, view.features.cols()),
        });
    }
    if let Some((row, &l)) = view.labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(DcpError::LabelOutOfRange {
            row,
            label: l as i64,
            classes,
        });
    }
    Ok(())
}

/// Double-threshold selection over one target mini-batch.
pub fn select_high_confidence(
    adv: BranchView,
    clu: BranchView,
    state: &ThresholdState,
    classes: usize,
) -> Result<PseudoLabelBatch> {
    if classes == 0 {
        return Err(DcpError::InvalidInput("zero classes".into()));
    }
    let n = adv.labels.len();
    check_view(&adv, n, classes)?;
    check_view(&clu, n, classes)?;

    let quota_adv = class_quota(state.tau_adv, n, classes);
    let quota_clu = class_quota(state.tau_clu, n, classes);
    let (ok_adv, dist_adv) = admitted(&adv, classes, quota_adv);
    let (ok_clu, dist_clu) = admitted(&clu, classes, quota_clu);

    let mut out = PseudoLabelBatch {
        quota_adv,
        quota_clu,
        quota_degenerate: n < classes,
        ..Default::default()
    };
    for i in 0..n {
        if ok_adv[i] && ok_clu[i] && adv.labels[i] == clu.labels[i] {
            out.selected_indices.push(i);
            out.labels.push(adv.labels[i]);
            out.dist_adv.push(dist_adv[i]);
            out.dist_clu.push(dist_clu[i]);
        }
    }
    Ok(out)
}
