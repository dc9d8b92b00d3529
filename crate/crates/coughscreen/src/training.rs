//! Training recipes for the four screening models and the cross-validation
//! pipelines that wrap them.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use coughscreen_core::classifiers::{self, DiagnosisClass, NetKind};
use coughscreen_core::corpus::{self, CorpusError};
use coughscreen_core::evaluation::{FoldOutcome, Pipeline};
use coughscreen_core::nn::{self, Example, LossHistory, Network, NnError};
use coughscreen_core::svm::{self, SvmConfig, SvmError, SvmModel, TuningReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AppConfig, NetRecipe, Precision};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Folds held out for the validation-loss curve of a full training run.
pub const VALIDATION_FOLDS: usize = 5;

/// Derives an independent seed for a named stage of a run.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stage.wrapping_mul(0xBF58_476D_1CE4_E5B9)) ^ stage
}

pub fn examples<'a>(inputs: &'a [Vec<f64>], labels: &[usize], idx: &[usize]) -> Vec<Example<'a>> {
    idx.iter().map(|&i| Example { input: &inputs[i], label: labels[i] }).collect()
}

/// Diagnosis labels collapsed to the binary COVID-19 task.
pub fn binary_labels(diagnosis: &[usize]) -> Vec<usize> {
    diagnosis.iter().map(|&l| DiagnosisClass::from_index(l).expect("diagnosis label").binary().index()).collect()
}

/// Trains `net` in the requested precision. Parameters are returned in f64
/// either way.
pub fn train_in(
    net: Network<f64>,
    data: &[Example<'_>],
    validation: &[Example<'_>],
    kind: NetKind,
    recipe: &NetRecipe,
    precision: Precision,
    seed: u64,
) -> Result<(Network<f64>, LossHistory), TrainError> {
    let cfg = recipe.train_config(kind, seed);
    Ok(match precision {
        Precision::F64 => {
            let mut net = net;
            let history = nn::train(&mut net, data, validation, &cfg)?;
            (net, history)
        }
        Precision::F32 => {
            let mut net = net.cast::<f32>();
            let history = nn::train(&mut net, data, validation, &cfg)?;
            (net.cast::<f64>(), history)
        }
    })
}

/// A fresh network of `kind`; transfer nets start from `detector`.
pub fn initial_network(kind: NetKind, detector: Option<&Network<f64>>, seed: u64) -> Result<Network<f64>, TrainError> {
    Ok(match (kind, detector) {
        (NetKind::Detector, _) => classifiers::build_detector(seed),
        (NetKind::DtlMc, Some(d)) => classifiers::build_dtl_mc(d, seed)?,
        (NetKind::DtlBc, Some(d)) => classifiers::build_dtl_bc(d, seed)?,
        _ => return Err(NnError::InvalidConfig("transfer network needs a trained detector").into()),
    })
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |best, (i, v)| if *v > p[best] { i } else { best })
}

pub fn predict_classes<S: nn::Real>(net: &Network<S>, inputs: &[&[f64]]) -> Result<Vec<usize>, NnError> {
    Ok(net.predict_proba(inputs, 16)?.iter().map(|p| argmax(p)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetRun {
    pub kind: NetKind,
    pub history: LossHistory,
    pub train_count: usize,
    pub validation_count: usize,
}

/// Full training run: one stratified fold is held out for the validation
/// curve, the rest trains. `labels` must already be in the net's label
/// space.
pub fn train_network(
    kind: NetKind,
    images: &[Vec<f64>],
    labels: &[usize],
    detector: Option<&Network<f64>>,
    config: &AppConfig,
) -> Result<(Network<f64>, NetRun), TrainError> {
    let classes = kind.classes();
    let mut pool: Vec<usize> = (0..images.len()).collect();
    if kind == NetKind::DtlBc && config.training.balance_dtl_bc {
        pool = corpus::balance_indices(labels, classes, stage_seed(config.seed, 1))?;
    }
    let pool_labels: Vec<usize> = pool.iter().map(|&i| labels[i]).collect();
    let folds = corpus::kfold_indices(&pool_labels, classes, VALIDATION_FOLDS, stage_seed(config.seed, 2))?;
    let val: Vec<usize> = folds[0].iter().map(|&p| pool[p]).collect();
    let train: Vec<usize> = corpus::train_indices(&folds, 0).iter().map(|&p| pool[p]).collect();
    let net = initial_network(kind, detector, stage_seed(config.seed, 3))?;
    let (net, history) = train_in(
        net,
        &examples(images, labels, &train),
        &examples(images, labels, &val),
        kind,
        config.training.recipe(kind),
        config.training.precision,
        stage_seed(config.seed, 4),
    )?;
    Ok((net, NetRun { kind, history, train_count: train.len(), validation_count: val.len() }))
}

/// Cross-validation pipeline for one of the screening networks. The held
/// out fold doubles as the validation set of the loss curve.
pub struct NetCv<'a> {
    pub kind: NetKind,
    pub images: &'a [Vec<f64>],
    pub labels: &'a [usize],
    pub detector: Option<&'a Network<f64>>,
    pub recipe: NetRecipe,
    pub precision: Precision,
    pub balance: bool,
    pub seed: u64,
}

impl Pipeline for NetCv<'_> {
    type Error = TrainError;

    fn fit_predict(&mut self, fold: usize, train: &[usize], test: &[usize]) -> Result<FoldOutcome, TrainError> {
        let fold_seed = stage_seed(self.seed, 100 + fold as u64);
        let train: Vec<usize> = if self.balance {
            let sub: Vec<usize> = train.iter().map(|&i| self.labels[i]).collect();
            corpus::balance_indices(&sub, self.kind.classes(), fold_seed)?.into_iter().map(|p| train[p]).collect()
        } else {
            train.to_vec()
        };
        let net = initial_network(self.kind, self.detector, fold_seed)?;
        let (net, history) = train_in(
            net,
            &examples(self.images, self.labels, &train),
            &examples(self.images, self.labels, test),
            self.kind,
            &self.recipe,
            self.precision,
            fold_seed.wrapping_add(1),
        )?;
        let inputs: Vec<&[f64]> = test.iter().map(|&i| self.images[i].as_slice()).collect();
        let predictions = match self.precision {
            Precision::F64 => predict_classes(&net, &inputs)?,
            Precision::F32 => predict_classes(&net.cast::<f32>(), &inputs)?,
        };
        Ok(FoldOutcome { predictions, loss: Some(history) })
    }
}

/// Cross-validation pipeline for the feature SVM. Each fold runs the full
/// balanced grid search on its training part.
pub struct SvmCv<'a> {
    pub features: &'a [Vec<f64>],
    pub labels: &'a [usize],
    pub config: SvmConfig,
}

impl Pipeline for SvmCv<'_> {
    type Error = TrainError;

    fn fit_predict(&mut self, fold: usize, train: &[usize], test: &[usize]) -> Result<FoldOutcome, TrainError> {
        let x: Vec<Vec<f64>> = train.iter().map(|&i| self.features[i].clone()).collect();
        let y: Vec<usize> = train.iter().map(|&i| self.labels[i]).collect();
        let cfg = SvmConfig { seed: stage_seed(self.config.seed, 200 + fold as u64), ..self.config.clone() };
        let (model, _) = svm::train_svm(&x, &y, &cfg)?;
        let predictions =
            test.iter().map(|&i| model.predict_index(&self.features[i])).collect::<Result<Vec<_>, _>>()?;
        Ok(FoldOutcome { predictions, loss: None })
    }
}

pub fn train_cml_mc(
    features: &[Vec<f64>],
    labels: &[usize],
    config: &AppConfig,
) -> Result<(SvmModel, TuningReport), TrainError> {
    Ok(svm::train_svm(features, labels, &config.svm.svm_config(stage_seed(config.seed, 5)))?)
}

/// What every training or evaluation command leaves next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: AppConfig,
    pub seeds: BTreeMap<String, u64>,
    pub corpus: Option<String>,
    pub corpus_size: Option<usize>,
    pub model_versions: BTreeMap<String, String>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub crate_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &AppConfig) -> Self {
        let now = Utc::now();
        let mut seeds = BTreeMap::new();
        seeds.insert("run".to_string(), config.seed);
        Self {
            command: command.to_string(),
            config: config.clone(),
            seeds,
            corpus: None,
            corpus_size: None,
            model_versions: BTreeMap::new(),
            started: now,
            finished: now,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn finish(mut self) -> Self {
        self.finished = Utc::now();
        self
    }
}
