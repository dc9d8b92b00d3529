//! Run configuration: a TOML file with `AI4C_` environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use coughscreen_core::classifiers::NetKind;
use coughscreen_core::nn::{AdamConfig, TrainConfig};
use coughscreen_core::svm::{KernelKind, SvmConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Preprocessor;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("environment override {key}={value:?}: {reason}")]
    Override { key: String, value: String, reason: String },
}

pub const ENV_PREFIX: &str = "AI4C_";

/// Arithmetic used while training networks. Saved models always hold f64
/// parameters; inference runs in f32.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("expected f32 or f64, got {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetRecipe {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl NetRecipe {
    pub fn train_config(&self, kind: NetKind, seed: u64) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() },
            loss: kind.loss(),
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
        }
    }
}

impl Default for NetRecipe {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 16, epochs: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub precision: Precision,
    pub detector: NetRecipe,
    pub dtl_mc: NetRecipe,
    pub dtl_bc: NetRecipe,
    /// Balance DTL-BC classes by subsampling to the minority count.
    pub balance_dtl_bc: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            precision: Precision::F32,
            detector: NetRecipe { learning_rate: 5e-5, batch_size: 16, epochs: 5 },
            dtl_mc: NetRecipe { learning_rate: 1e-3, batch_size: 4, epochs: 15 },
            dtl_bc: NetRecipe { learning_rate: 1e-3, batch_size: 16, epochs: 10 },
            balance_dtl_bc: true,
        }
    }
}

impl TrainingConfig {
    pub fn recipe(&self, kind: NetKind) -> &NetRecipe {
        match kind {
            NetKind::Detector => &self.detector,
            NetKind::DtlMc => &self.dtl_mc,
            NetKind::DtlBc => &self.dtl_bc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmSettings {
    pub kernel: KernelKind,
    pub c_grid: Vec<f64>,
    /// Defaults to `1 / dim` when absent.
    pub gamma_grid: Option<Vec<f64>>,
    pub folds: usize,
    pub max_iter: usize,
    pub tolerance: f64,
    pub balance: bool,
}

impl Default for SvmSettings {
    fn default() -> Self {
        let base = SvmConfig::default();
        Self {
            kernel: base.kernel,
            c_grid: base.c_grid,
            gamma_grid: base.gamma_grid,
            folds: base.folds,
            max_iter: base.max_iter,
            tolerance: base.tolerance,
            balance: base.balance,
        }
    }
}

impl SvmSettings {
    pub fn svm_config(&self, seed: u64) -> SvmConfig {
        SvmConfig {
            kernel: self.kernel,
            c_grid: self.c_grid.clone(),
            gamma_grid: self.gamma_grid.clone(),
            folds: self.folds,
            max_iter: self.max_iter,
            tolerance: self.tolerance,
            balance: self.balance,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub models_dir: PathBuf,
    pub store_dir: PathBuf,
    pub payload_limit: usize,
    pub cors_origin: String,
    /// Opt-in: keep submitted clips here, keyed by record id.
    pub research_audio_dir: Option<PathBuf>,
    pub index_every: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            models_dir: PathBuf::from("models"),
            store_dir: PathBuf::from("records"),
            payload_limit: 4 * 1024 * 1024,
            cors_origin: "*".into(),
            research_audio_dir: None,
            index_every: 100,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub seed: u64,
    pub preprocess: Preprocessor,
    pub training: TrainingConfig,
    pub svm: SvmSettings,
    pub service: ServiceConfig,
}

impl AppConfig {
    /// Reads `path` (or defaults) and applies overrides from the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })
    }

    /// Applies `AI4C_*` variables. Unrelated variables are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let bad = |reason: String| ConfigError::Override { key: key.clone(), value: value.clone(), reason };
            match name {
                "BIND" => self.service.bind = value.parse().map_err(|e| bad(format!("{e}")))?,
                "MODELS_DIR" => self.service.models_dir = PathBuf::from(&value),
                "STORE_DIR" => self.service.store_dir = PathBuf::from(&value),
                "PAYLOAD_LIMIT" => self.service.payload_limit = value.parse().map_err(|e| bad(format!("{e}")))?,
                "CORS_ORIGIN" => self.service.cors_origin = value.clone(),
                "RESEARCH_AUDIO_DIR" => self.service.research_audio_dir = Some(PathBuf::from(&value)),
                "SEED" => self.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
                "PRECISION" => self.training.precision = value.parse().map_err(bad)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
