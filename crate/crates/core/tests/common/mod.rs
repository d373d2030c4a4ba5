//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use dcp::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn naive_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Per-class mean by explicit accumulation; `None` for empty classes.
pub fn loop_means(x: &[Vec<f64>], labels: &[i64], k: usize) -> Vec<Option<Vec<f64>>> {
    (0..k)
        .map(|c| {
            let members: Vec<&Vec<f64>> = x.iter().zip(labels).filter(|(_, &l)| l == c as i64).map(|(r, _)| r).collect();
            if members.is_empty() {
                return None;
            }
            let mut m = vec![0.0; x[0].len()];
            for r in &members {
                for (acc, v) in m.iter_mut().zip(r.iter()) {
                    *acc += v;
                }
            }
            Some(m.into_iter().map(|v| v / members.len() as f64).collect())
        })
        .collect()
}

/// Index of the closest centroid by exhaustive comparison, lowest on ties.
pub fn brute_nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let d: Vec<f64> = centroids
        .iter()
        .map(|c| c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let best = d.iter().cloned().fold(f64::INFINITY, f64::min);
    d.iter().position(|&v| v == best).unwrap()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
