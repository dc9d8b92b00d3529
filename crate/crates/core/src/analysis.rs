//! Exact t-SNE for visual separability checks, and the silhouette score.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("perplexity {perplexity} needs at least {needed} points, got {got}")]
    PerplexityTooLarge { perplexity: f64, needed: usize, got: usize },
    #[error("all feature vectors are identical")]
    DegenerateFeatures,
    #[error("feature rows must be nonempty, equally long and finite")]
    InvalidFeatures,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init_sigma: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_sigma: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    /// KL(P || Q) after each iteration, computed with the unexaggerated P.
    pub kl_history: Vec<f64>,
    /// Perplexity reached by each point's bandwidth search.
    pub achieved_perplexity: Vec<f64>,
}

/// Symmetric joint affinities with their per-point achieved perplexity.
#[derive(Clone, Debug, PartialEq)]
pub struct Affinities {
    /// Row-major `n x n`, zero diagonal, sums to one.
    pub p: Vec<f64>,
    pub n: usize,
    pub achieved_perplexity: Vec<f64>,
}

fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional row `p_{j|i}` for precision `beta`; returns the entropy in nats.
fn conditional_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    // shift by the nearest neighbour distance so the largest weight is 1
    let dmin = dist.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (r, d)) in row.iter_mut().zip(dist).enumerate() {
        *r = if j == i { 0.0 } else { math::exp(-beta * (d - dmin)) };
        sum += *r;
    }
    let mut h = 0.0;
    for (j, r) in row.iter_mut().enumerate() {
        if j == i {
            continue;
        }
        *r /= sum;
        if *r > 0.0 {
            h -= *r * math::ln(*r);
        }
    }
    h
}

pub const PERPLEXITY_TOLERANCE: f64 = 1e-4;

fn validate(x: &[Vec<f64>]) -> Result<(), AnalysisError> {
    let d = x.first().map_or(0, Vec::len);
    if d == 0 || x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(AnalysisError::InvalidFeatures);
    }
    if x.iter().all(|r| r == &x[0]) {
        return Err(AnalysisError::DegenerateFeatures);
    }
    Ok(())
}

/// Gaussian affinities whose per-point bandwidths match `perplexity`,
/// symmetrized as `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<Affinities, AnalysisError> {
    validate(x)?;
    let n = x.len();
    if perplexity.is_nan() || perplexity <= 0.0 {
        return Err(AnalysisError::InvalidConfig("perplexity must be positive"));
    }
    let needed = math::ceil(3.0 * perplexity) as usize;
    if n < needed {
        return Err(AnalysisError::PerplexityTooLarge { perplexity, needed, got: n });
    }
    let dist = squared_distances(x);
    let target = math::ln(perplexity);
    let mut cond = vec![0.0; n * n];
    let mut achieved = vec![0.0; n];
    for i in 0..n {
        let drow = &dist[i * n..(i + 1) * n];
        let row = &mut cond[i * n..(i + 1) * n];
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut h = conditional_row(drow, i, beta, row);
        for _ in 0..200 {
            if (math::exp(h) - perplexity).abs() < PERPLEXITY_TOLERANCE * 0.1 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = conditional_row(drow, i, beta, row);
        }
        achieved[i] = math::exp(h);
    }
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
            }
        }
    }
    Ok(Affinities { p, n, achieved_perplexity: achieved })
}

const P_FLOOR: f64 = 1e-12;

/// Exact O(n^2) t-SNE into two dimensions.
pub fn tsne(x: &[Vec<f64>], config: &TsneConfig) -> Result<Embedding, AnalysisError> {
    if config.learning_rate <= 0.0 || config.iterations == 0 {
        return Err(AnalysisError::InvalidConfig("learning rate and iterations must be positive"));
    }
    let aff = joint_probabilities(x, config.perplexity)?;
    let n = aff.n;
    let p: Vec<f64> = aff.p.iter().map(|v| v.max(P_FLOOR)).collect();

    let mut rng = rng::seeded(config.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [config.init_sigma * rng::normal(&mut rng), config.init_sigma * rng::normal(&mut rng)])
        .collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0_f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0; 2]; n];
    let mut kl_history = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let exaggeration = if it < config.exaggeration_iters { config.early_exaggeration } else { 1.0 };
        let momentum = if it < config.momentum_switch { config.initial_momentum } else { config.final_momentum };

        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        for (i, g) in grad.iter_mut().enumerate() {
            let mut acc = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let m = (exaggeration * p[i * n + j] - w / z) * w;
                acc[0] += m * (y[i][0] - y[j][0]);
                acc[1] += m * (y[i][1] - y[j][1]);
            }
            *g = [4.0 * acc[0], 4.0 * acc[1]];
        }
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for v in &mut y {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
        kl_history.push(kl_divergence(&p, &y));
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(AnalysisError::InvalidConfig("optimization diverged"));
    }
    Ok(Embedding { points: y, kl_history, achieved_perplexity: aff.achieved_perplexity })
}

/// `KL(P || Q)` for the current layout.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            z += 2.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i == j || pij <= 0.0 {
                continue;
            }
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let q = (1.0 / (1.0 + dx * dx + dy * dy) / z).max(P_FLOOR);
            kl += pij * math::ln(pij / q);
        }
    }
    kl.max(0.0)
}

/// Mean silhouette coefficient under Euclidean distance. Singleton clusters
/// contribute 0.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    if n < 2 || k < 2 {
        return 0.0;
    }
    let dist = |a: &[f64], b: &[f64]| math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(&points[i], &points[j]);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preconditions() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        assert!(matches!(joint_probabilities(&x, 30.0), Err(AnalysisError::PerplexityTooLarge { .. })));
        let same = vec![vec![1.0, 2.0]; 100];
        assert_eq!(joint_probabilities(&same, 30.0), Err(AnalysisError::DegenerateFeatures));
    }

    #[test]
    fn silhouette_of_separated_pairs() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        assert!(silhouette_score(&pts, &[0, 0, 1, 1]) > 0.95);
        assert!(silhouette_score(&pts, &[0, 1, 0, 1]) < 0.0);
    }
}
