//! Multi-class kernel SVM: one-vs-one SMO with second-order working-set
//! selection, standardized inputs, and a C (and optionally gamma) grid
//! tuned by stratified k-fold accuracy.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{DiagnosisClass, DiagnosisLabel};
use crate::corpus::{self, CorpusError};
use crate::linalg::Matrix;
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SvmError {
    #[error("class {0} has no samples after balancing")]
    DegenerateClass(usize),
    #[error("feature row {0} contains a non-finite value")]
    NonFiniteFeature(usize),
    #[error("expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("need at least two classes")]
    TooFewClasses,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                math::exp(-gamma * d2)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    pub c_grid: Vec<f64>,
    /// RBF widths to search; `None` uses `1 / dim` (unit variance after
    /// standardization).
    pub gamma_grid: Option<Vec<f64>>,
    pub folds: usize,
    pub max_iter: usize,
    pub tolerance: f64,
    /// Subsample every class to the minority count before training.
    pub balance: bool,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            gamma_grid: None,
            folds: 5,
            max_iter: 100_000,
            tolerance: 1e-3,
            balance: true,
            seed: 0,
        }
    }
}

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(*r).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; d];
        for r in rows {
            for ((s, x), m) in std.iter_mut().zip(*r).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        std.iter_mut().for_each(|s| {
            *s = math::sqrt(*s / n);
            if *s < 1e-12 {
                *s = 1.0;
            }
        });
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// One binary problem of the one-vs-one decomposition. Positive decision
/// values vote for `positive`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub positive: usize,
    pub negative: usize,
    /// Indices into [`SvmModel::support_vectors`].
    pub support: Vec<usize>,
    /// `alpha_i * y_i` for each support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub hit_max_iter: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    /// Class indices known to the model, ascending.
    pub classes: Vec<usize>,
    pub standardizer: Standardizer,
    /// Standardized support vectors shared across pairs.
    pub support_vectors: Vec<Vec<f64>>,
    pub pairs: Vec<PairModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: Option<f64>,
    pub cv_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub grid: Vec<GridPoint>,
    pub selected_c: f64,
    pub selected_gamma: Option<f64>,
    pub folds: usize,
    pub max_iter: usize,
    pub balanced_count: usize,
    /// Largest KKT residual across the final model's pairs.
    pub max_kkt_residual: f64,
    pub any_hit_max_iter: bool,
    pub pair_iterations: Vec<usize>,
}

/// Result of a single binary dual solve.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub hit_max_iter: bool,
}

const TAU: f64 = 1e-12;

/// Solves `min 1/2 a'Qa - e'a` s.t. `y'a = 0`, `0 <= a <= c`, with
/// `Q_ij = y_i y_j K_ij`. `y` entries must be `+1` or `-1`.
pub fn solve_binary(k: &Matrix, y: &[f64], c: f64, tolerance: f64, max_iter: usize) -> BinarySolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut residual;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let score = -y[t] * grad[t];
            gmin = gmin.min(score);
            if i != usize::MAX && score < gmax {
                let b = gmax - score;
                let mut a = k.get(i, i) + k.get(t, t) - 2.0 * k.get(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        residual = if i == usize::MAX || gmin == f64::INFINITY { 0.0 } else { gmax - gmin };
        if residual < tolerance || j == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k.get(i, j);
        if y[i] != y[j] {
            let mut quad = k.get(i, i) + k.get(j, j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k.get(i, i) + k.get(j, j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k.get(i, t) * di + y[j] * k.get(j, t) * dj);
        }
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            free += 1;
        } else {
            let at_upper = alpha[t] >= c;
            if (at_upper && y[t] < 0.0) || (!at_upper && y[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    BinarySolution {
        alpha,
        bias: -rho,
        iterations,
        kkt_residual: residual,
        hit_max_iter: residual >= tolerance && iterations >= max_iter,
    }
}

fn validate(features: &[Vec<f64>], labels: &[usize]) -> Result<usize, SvmError> {
    if features.len() != labels.len() {
        return Err(SvmError::LengthMismatch { features: features.len(), labels: labels.len() });
    }
    let dim = features.first().map_or(0, |f| f.len());
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(SvmError::DimensionMismatch { expected: dim, actual: f.len() });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFiniteFeature(i));
        }
    }
    Ok(dim)
}

fn distinct_classes(labels: &[usize]) -> Vec<usize> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Fits a model with fixed hyperparameters on all given rows.
pub fn fit(
    features: &[Vec<f64>],
    labels: &[usize],
    kernel: Kernel,
    c: f64,
    tolerance: f64,
    max_iter: usize,
) -> Result<SvmModel, SvmError> {
    validate(features, labels)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::InvalidConfig("C must be positive"));
    }
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(SvmError::TooFewClasses);
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
    let standardizer = Standardizer::fit(&rows);
    let z: Vec<Vec<f64>> = features.iter().map(|f| standardizer.apply(f)).collect();

    let mut sv_slot: Vec<Option<usize>> = vec![None; z.len()];
    let mut support_vectors = Vec::new();
    let mut pairs = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            let idx: Vec<usize> = (0..z.len()).filter(|&i| labels[i] == pos || labels[i] == neg).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == pos { 1.0 } else { -1.0 }).collect();
            let kmat = Matrix::from_fn(idx.len(), idx.len(), |r, s| kernel.eval(&z[idx[r]], &z[idx[s]]));
            let sol = solve_binary(&kmat, &y, c, tolerance, max_iter);
            let mut support = Vec::new();
            let mut coef = Vec::new();
            for (p, &i) in idx.iter().enumerate() {
                if sol.alpha[p] > 0.0 {
                    let slot = *sv_slot[i].get_or_insert_with(|| {
                        support_vectors.push(z[i].clone());
                        support_vectors.len() - 1
                    });
                    support.push(slot);
                    coef.push(sol.alpha[p] * y[p]);
                }
            }
            pairs.push(PairModel {
                positive: pos,
                negative: neg,
                support,
                coef,
                bias: sol.bias,
                iterations: sol.iterations,
                kkt_residual: sol.kkt_residual,
                hit_max_iter: sol.hit_max_iter,
            });
        }
    }
    Ok(SvmModel { kernel, c, classes, standardizer, support_vectors, pairs })
}

/// Voting outcome for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct Vote {
    pub class: usize,
    /// Parallel to [`SvmModel::classes`].
    pub votes: Vec<usize>,
    pub margins: Vec<f64>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn decision_values(&self, feature: &[f64]) -> Result<Vec<f64>, SvmError> {
        if feature.len() != self.dim() {
            return Err(SvmError::DimensionMismatch { expected: self.dim(), actual: feature.len() });
        }
        let z = self.standardizer.apply(feature);
        let kv: Vec<Option<f64>> = vec![None; self.support_vectors.len()];
        let mut cache = kv;
        Ok(self
            .pairs
            .iter()
            .map(|p| {
                let mut f = p.bias;
                for (&s, &a) in p.support.iter().zip(&p.coef) {
                    let k = *cache[s].get_or_insert_with(|| self.kernel.eval(&self.support_vectors[s], &z));
                    f += a * k;
                }
                f
            })
            .collect())
    }

    /// One-vs-one voting; ties go to the larger summed margin, then to the
    /// lower class index.
    pub fn vote(&self, feature: &[f64]) -> Result<Vote, SvmError> {
        let values = self.decision_values(feature)?;
        let slot = |c: usize| self.classes.iter().position(|&k| k == c).expect("pair class in model");
        let mut votes = vec![0usize; self.classes.len()];
        let mut margins = vec![0.0; self.classes.len()];
        for (p, f) in self.pairs.iter().zip(&values) {
            let (a, b) = (slot(p.positive), slot(p.negative));
            if *f > 0.0 {
                votes[a] += 1;
            } else {
                votes[b] += 1;
            }
            margins[a] += f;
            margins[b] -= f;
        }
        let mut best = 0;
        for i in 1..votes.len() {
            if votes[i] > votes[best] || (votes[i] == votes[best] && margins[i] > margins[best]) {
                best = i;
            }
        }
        Ok(Vote { class: self.classes[best], votes, margins })
    }

    pub fn predict_index(&self, feature: &[f64]) -> Result<usize, SvmError> {
        Ok(self.vote(feature)?.class)
    }

    /// Distinct support vectors across all pairs.
    pub fn support_count(&self) -> usize {
        self.support_vectors.len()
    }
}

/// Diagnosis prediction with vote fractions as the probability vector.
pub fn predict_svm(model: &SvmModel, feature: &[f64]) -> Result<DiagnosisLabel, SvmError> {
    let vote = model.vote(feature)?;
    let total: usize = vote.votes.iter().sum();
    let mut probabilities = [0.0; 4];
    for (c, v) in model.classes.iter().zip(&vote.votes) {
        if let Some(p) = probabilities.get_mut(*c) {
            *p = *v as f64 / total.max(1) as f64;
        }
    }
    let value = DiagnosisClass::from_index(vote.class)
        .ok_or(SvmError::DimensionMismatch { expected: DiagnosisClass::ALL.len(), actual: vote.class + 1 })?;
    Ok(DiagnosisLabel { value, probabilities })
}

fn kernels_for(config: &SvmConfig, dim: usize) -> Result<Vec<(Option<f64>, Kernel)>, SvmError> {
    Ok(match config.kernel {
        KernelKind::Linear => vec![(None, Kernel::Linear)],
        KernelKind::Rbf => {
            let grid = match &config.gamma_grid {
                Some(g) if g.is_empty() => return Err(SvmError::InvalidConfig("empty gamma grid")),
                Some(g) => g.clone(),
                None => vec![1.0 / dim.max(1) as f64],
            };
            if grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                return Err(SvmError::InvalidConfig("gamma must be positive"));
            }
            grid.into_iter().map(|g| (Some(g), Kernel::Rbf { gamma: g })).collect()
        }
    })
}

/// Balances, tunes C (and gamma) by stratified k-fold accuracy, then refits
/// on the balanced set. Grid ties go to the smaller C.
pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[usize],
    config: &SvmConfig,
) -> Result<(SvmModel, TuningReport), SvmError> {
    let dim = validate(features, labels)?;
    if config.c_grid.is_empty() || config.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(SvmError::InvalidConfig("C grid must be nonempty and positive"));
    }
    if config.folds < 2 {
        return Err(SvmError::InvalidConfig("folds must be at least 2"));
    }
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(SvmError::TooFewClasses);
    }
    let dense: Vec<usize> = labels.iter().map(|l| classes.iter().position(|c| c == l).unwrap()).collect();
    let chosen: Vec<usize> = if config.balance {
        corpus::balance_indices(&dense, classes.len(), config.seed).map_err(|e| match e {
            CorpusError::EmptyClass(c) => SvmError::DegenerateClass(classes[c]),
            e => e.into(),
        })?
    } else {
        (0..labels.len()).collect()
    };
    let x: Vec<Vec<f64>> = chosen.iter().map(|&i| features[i].clone()).collect();
    let y: Vec<usize> = chosen.iter().map(|&i| labels[i]).collect();
    let balanced_count = classes.iter().map(|c| y.iter().filter(|l| *l == c).count()).min().unwrap_or(0);
    let remapped: Vec<usize> = chosen.iter().map(|&i| dense[i]).collect();
    let folds = corpus::kfold_indices(&remapped, classes.len(), config.folds, config.seed)?;

    let mut c_sorted = config.c_grid.clone();
    c_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let kernels = kernels_for(config, dim)?;
    let mut grid = Vec::new();
    let mut best: Option<(f64, f64, Option<f64>, Kernel)> = None;
    for &c in &c_sorted {
        for &(gamma, kernel) in &kernels {
            let mut correct = 0usize;
            let mut total = 0usize;
            for (f, test) in folds.iter().enumerate() {
                let train: Vec<usize> =
                    folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
                let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
                let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
                let model = fit(&tx, &ty, kernel, c, config.tolerance, config.max_iter)?;
                for &i in test {
                    correct += usize::from(model.predict_index(&x[i])? == y[i]);
                    total += 1;
                }
            }
            let acc = correct as f64 / total.max(1) as f64;
            grid.push(GridPoint { c, gamma, cv_accuracy: acc });
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, c, gamma, kernel));
            }
        }
    }
    let (_, c, gamma, kernel) = best.expect("grid is nonempty");
    let model = fit(&x, &y, kernel, c, config.tolerance, config.max_iter)?;
    let report = TuningReport {
        grid,
        selected_c: c,
        selected_gamma: gamma,
        folds: config.folds,
        max_iter: config.max_iter,
        balanced_count,
        max_kkt_residual: model.pairs.iter().map(|p| p.kkt_residual).fold(0.0, f64::max),
        any_hit_max_iter: model.pairs.iter().any(|p| p.hit_max_iter),
        pair_iterations: model.pairs.iter().map(|p| p.iterations).collect(),
    };
    Ok((model, report))
}
