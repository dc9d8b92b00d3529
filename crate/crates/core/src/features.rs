//! The SVM branch's feature vector: per-sample MFCC mean concatenated with a
//! PCA-magnitude summary of the frame cloud.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::MfccMatrix;
use crate::linalg::{self, Matrix};
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("MFCC matrix has no frames")]
    EmptyMatrix,
    #[error("PCA needs at least 2 frames, got {0}")]
    InsufficientFrames(usize),
    #[error("requested {requested} components but at most {max} are available")]
    TooManyComponents { requested: usize, max: usize },
    #[error("non-finite MFCC value")]
    NonFinite,
}

/// How the top components are folded into one vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentWeighting {
    /// Each component is scaled by the square root of its explained variance.
    #[default]
    Variance,
    /// Components contribute equally.
    Unweighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub pca_components: usize,
    pub weighting: ComponentWeighting,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { pca_components: 5, weighting: ComponentWeighting::Variance }
    }
}

/// `[mean ; pca magnitude]`, length `2M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_half(&self) -> &[f64] {
        &self.values[..self.values.len() / 2]
    }

    pub fn pca_half(&self) -> &[f64] {
        &self.values[self.values.len() / 2..]
    }
}

/// Principal axes of a set of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal components, descending explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Set when fewer than the requested number of components had nonzero
    /// variance and the remainder were completed from the standard basis.
    pub rank_deficient: bool,
}

/// Row-wise mean over frames.
pub fn mfcc_mean(mat: &MfccMatrix) -> Result<Vec<f64>, FeatureError> {
    let c = mat.coefficients();
    if c.cols() == 0 {
        return Err(FeatureError::EmptyMatrix);
    }
    let n = c.cols() as f64;
    Ok((0..c.rows()).map(|r| c.row(r).iter().sum::<f64>() / n).collect())
}

/// PCA over the columns of `frames` (`M x N`, one observation per column)
/// using the unbiased sample covariance.
///
/// Each component's sign is fixed so its largest-magnitude entry is positive.
pub fn pca_fit(frames: &Matrix, n_components: usize) -> Result<PcaModel, FeatureError> {
    let (m, n) = (frames.rows(), frames.cols());
    if n < 2 {
        return Err(FeatureError::InsufficientFrames(n));
    }
    if n_components > m.min(n) {
        return Err(FeatureError::TooManyComponents { requested: n_components, max: m.min(n) });
    }
    if frames.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    let mean: Vec<f64> = (0..m).map(|r| frames.row(r).iter().sum::<f64>() / n as f64).collect();
    let mut cov = Matrix::zeros(m, m);
    for i in 0..m {
        let ri = frames.row(i);
        for j in i..m {
            let rj = frames.row(j);
            let s: f64 = ri.iter().zip(rj).map(|(a, b)| (a - mean[i]) * (b - mean[j])).sum();
            let v = s / (n - 1) as f64;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    let eig = linalg::symmetric_eigen(&cov);
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE);

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    let mut variances = Vec::with_capacity(n_components);
    for (val, vec) in eig.values.iter().zip(&eig.vectors).take(n_components) {
        if *val > tol && top > 0.0 {
            components.push(vec.clone());
            variances.push(*val);
        } else {
            break;
        }
    }
    let rank_deficient = components.len() < n_components;
    // complete with Gram-Schmidt over e_0, e_1, ... for zero-variance slots
    let mut basis_idx = 0;
    while components.len() < n_components && basis_idx < m {
        let mut v = vec![0.0; m];
        v[basis_idx] = 1.0;
        basis_idx += 1;
        for c in &components {
            let d = linalg::dot(&v, c);
            v.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
        }
        let nrm = linalg::norm(&v);
        if nrm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nrm);
            components.push(v);
            variances.push(0.0);
        }
    }
    for c in &mut components {
        let pivot = c.iter().cloned().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(PcaModel { mean, components, explained_variance: variances, rank_deficient })
}

/// Element-wise root-sum-of-squares of the (optionally variance-weighted)
/// top components of the frame cloud.
pub fn pca_magnitude(
    mat: &MfccMatrix,
    n_components: usize,
    weighting: ComponentWeighting,
) -> Result<Vec<f64>, FeatureError> {
    let model = pca_fit(mat.coefficients(), n_components)?;
    Ok(magnitude_of(&model, weighting))
}

pub fn magnitude_of(model: &PcaModel, weighting: ComponentWeighting) -> Vec<f64> {
    let m = model.mean.len();
    let mut out = vec![0.0; m];
    for (comp, var) in model.components.iter().zip(&model.explained_variance) {
        let w = match weighting {
            ComponentWeighting::Variance => math::sqrt(var.max(0.0)),
            ComponentWeighting::Unweighted => 1.0,
        };
        for (o, u) in out.iter_mut().zip(comp) {
            *o += (w * u) * (w * u);
        }
    }
    out.iter_mut().for_each(|v| *v = math::sqrt(*v));
    out
}

pub fn feature_vector(mat: &MfccMatrix, config: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    let mut values = mfcc_mean(mat)?;
    values.extend(pca_magnitude(mat, config.pca_components, config.weighting)?);
    Ok(FeatureVector { values })
}
