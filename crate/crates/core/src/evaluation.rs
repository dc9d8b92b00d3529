//! Confusion matrices, one-vs-rest metrics, and k-fold cross-validation
//! orchestration.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorpusError};
use crate::nn::LossHistory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{truths} truths but {preds} predictions")]
    LengthMismatch { truths: usize, preds: usize },
    #[error("label {label} outside the {classes}-class order")]
    UnknownLabel { label: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("positive class {0} out of range")]
    BadPositive(usize),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(truths: &[usize], preds: &[usize], classes: &[&str]) -> Result<Self, EvalError> {
        if truths.len() != preds.len() {
            return Err(EvalError::LengthMismatch { truths: truths.len(), preds: preds.len() });
        }
        let l = classes.len();
        let mut counts = vec![vec![0u64; l]; l];
        for (&t, &p) in truths.iter().zip(preds) {
            for label in [t, p] {
                if label >= l {
                    return Err(EvalError::UnknownLabel { label, classes: l });
                }
            }
            counts[t][p] += 1;
        }
        Ok(Self { classes: classes.iter().map(|s| String::from(*s)).collect(), counts })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// Row percentages; rows without any truth are all zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter().map(|&c| if s == 0 { 0.0 } else { 100.0 * c as f64 / s as f64 }).collect()
            })
            .collect()
    }
}

/// Metric values whose denominator was zero and were set to 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub sensitivity: bool,
    pub specificity: bool,
    pub f1: bool,
}

impl UndefinedFlags {
    pub fn any(&self) -> bool {
        self.precision || self.sensitivity || self.specificity || self.f1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    /// Overall trace ratio of the full matrix.
    pub accuracy: f64,
    pub undefined: UndefinedFlags,
}

fn ratio(num: f64, den: f64, flag: &mut bool) -> f64 {
    if den == 0.0 {
        *flag = true;
        0.0
    } else {
        num / den
    }
}

/// One-vs-rest reduction around `positive`.
pub fn metrics(cm: &ConfusionMatrix, positive: usize) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    if positive >= cm.len() {
        return Err(EvalError::BadPositive(positive));
    }
    let total = cm.total() as f64;
    let tp = cm.counts[positive][positive] as f64;
    let fn_: f64 = cm.counts[positive].iter().sum::<u64>() as f64 - tp;
    let fp: f64 = (0..cm.len()).map(|r| cm.counts[r][positive]).sum::<u64>() as f64 - tp;
    let tn = total - tp - fn_ - fp;
    let mut undefined = UndefinedFlags::default();
    let precision = ratio(tp, tp + fp, &mut undefined.precision);
    let sensitivity = ratio(tp, tp + fn_, &mut undefined.sensitivity);
    let specificity = ratio(tn, tn + fp, &mut undefined.specificity);
    let f1 = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        undefined.f1 = true;
        0.0
    };
    Ok(Metrics { f1, sensitivity, specificity, precision, accuracy: cm.accuracy(), undefined })
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<Vec<Metrics>, EvalError> {
    (0..cm.len()).map(|c| metrics(cm, c)).collect()
}

/// Element-wise mean of row-normalized matrices.
pub fn mean_normalized(matrices: &[ConfusionMatrix]) -> Vec<Vec<f64>> {
    let Some(first) = matrices.first() else {
        return Vec::new();
    };
    let l = first.len();
    let mut acc = vec![vec![0.0; l]; l];
    for m in matrices {
        for (a, r) in acc.iter_mut().zip(m.normalized()) {
            a.iter_mut().zip(r).for_each(|(x, y)| *x += y);
        }
    }
    let n = matrices.len() as f64;
    acc.iter_mut().flatten().for_each(|x| *x /= n);
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub accuracy: f64,
    pub cumulative: f64,
}

/// Empirical CDF: sorted accuracies with cumulative fraction `i/n`.
pub fn accuracy_cdf(accuracies: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = accuracies.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted.into_iter().enumerate().map(|(i, accuracy)| CdfPoint { accuracy, cumulative: (i + 1) as f64 / n }).collect()
}

/// What a pipeline returns for one held-out fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldOutcome {
    /// Parallel to the fold's test indices.
    pub predictions: Vec<usize>,
    pub loss: Option<LossHistory>,
}

/// A model-training procedure evaluated by [`cross_validate`].
pub trait Pipeline {
    type Error;

    fn fit_predict(&mut self, fold: usize, train: &[usize], test: &[usize]) -> Result<FoldOutcome, Self::Error>;
}

#[derive(Debug, Error)]
pub enum CvError<E> {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("pipeline failed on fold {fold}: {source}")]
    Pipeline { fold: usize, source: E },
    #[error("fold {fold}: {got} predictions for {expected} test samples")]
    PredictionCount { fold: usize, expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<Metrics>,
    pub accuracy: f64,
    pub loss: Option<LossHistory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub mean_normalized: Vec<Vec<f64>>,
    /// One-vs-rest metrics of the pooled matrix, per class.
    pub pooled_metrics: Vec<Metrics>,
    pub accuracy_cdf: Vec<CdfPoint>,
}

impl CvReport {
    pub fn mean_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.accuracy).sum::<f64>() / self.folds.len().max(1) as f64
    }

    /// Sum of all fold matrices.
    pub fn pooled(&self) -> Option<ConfusionMatrix> {
        let mut it = self.folds.iter();
        let mut acc = it.next()?.confusion.clone();
        for f in it {
            for (a, r) in acc.counts.iter_mut().zip(&f.confusion.counts) {
                a.iter_mut().zip(r).for_each(|(x, y)| *x += y);
            }
        }
        Some(acc)
    }
}

/// Stratified k-fold evaluation: train on k-1 folds, predict the held-out
/// one, aggregate in fold order.
pub fn cross_validate<P: Pipeline>(
    pipeline: &mut P,
    labels: &[usize],
    classes: &[&str],
    k: usize,
    seed: u64,
) -> Result<CvReport, CvError<P::Error>> {
    let folds = corpus::kfold_indices(labels, classes.len(), k, seed).map_err(EvalError::from)?;
    let mut reports = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let train = corpus::train_indices(&folds, f);
        let out = pipeline.fit_predict(f, &train, test).map_err(|source| CvError::Pipeline { fold: f, source })?;
        if out.predictions.len() != test.len() {
            return Err(CvError::PredictionCount { fold: f, expected: test.len(), got: out.predictions.len() });
        }
        let truths: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let confusion = ConfusionMatrix::new(&truths, &out.predictions, classes)?;
        let per_class = per_class_metrics(&confusion)?;
        reports.push(FoldReport {
            fold: f,
            test_indices: test.clone(),
            predictions: out.predictions,
            accuracy: confusion.accuracy(),
            confusion,
            per_class,
            loss: out.loss,
        });
    }
    let matrices: Vec<ConfusionMatrix> = reports.iter().map(|r| r.confusion.clone()).collect();
    let accuracies: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let mut report = CvReport {
        k,
        seed,
        mean_normalized: mean_normalized(&matrices),
        pooled_metrics: Vec::new(),
        accuracy_cdf: accuracy_cdf(&accuracies),
        folds: reports,
    };
    if let Some(p) = report.pooled() {
        report.pooled_metrics = per_class_metrics(&p)?;
    }
    Ok(report)
}
