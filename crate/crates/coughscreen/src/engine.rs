//! The screening engine: detect, then the three diagnosis classifiers in
//! parallel, then the veto mediator. The CLI `predict` command and the HTTP
//! service both go through [`Engine::screen_clip`].

use std::path::Path;

use coughscreen_core::classifiers::{self, screening_architecture, Detection, DetectionLabel, NetKind};
use coughscreen_core::mediator::{self, AppResult, ClassifierOutputs};
use coughscreen_core::nn::{Network, NnError};
use coughscreen_core::svm::{self, SvmError, SvmModel};
use coughscreen_core::AudioClip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_io::{self, ModelIoError};
use crate::pipeline::{PipelineError, Preprocessor};
use crate::wav::{self, WavError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("malformed audio: {0}")]
    MalformedAudio(#[from] WavError),
    #[error("validation failed: {0}")]
    Validation(#[from] coughscreen_core::audio::AudioError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
}

/// Content-hash tags of the four loaded models.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVersions {
    pub detector: String,
    pub dtl_mc: String,
    pub dtl_bc: String,
    pub cml_mc: String,
}

/// Loaded, immutable models. Networks run in single precision.
#[derive(Clone, Debug)]
pub struct Models {
    pub detector: Network<f32>,
    pub dtl_mc: Network<f32>,
    pub dtl_bc: Network<f32>,
    pub cml_mc: SvmModel,
    pub versions: ModelVersions,
}

impl Models {
    /// Reads `detector.aicn`, `dtl_mc.aicn`, `dtl_bc.aicn` and
    /// `cml_mc.svmmodel` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ModelIoError> {
        let net = |kind: NetKind| -> Result<(Network<f32>, String), ModelIoError> {
            let bytes = model_io::read_file(&dir.join(kind.file_name()))?;
            let net = model_io::decode_network_expecting(&bytes, &screening_architecture(kind.classes()))?;
            Ok((net, model_io::version_tag(&bytes)))
        };
        let (detector, v_det) = net(NetKind::Detector)?;
        let (dtl_mc, v_mc) = net(NetKind::DtlMc)?;
        let (dtl_bc, v_bc) = net(NetKind::DtlBc)?;
        let svm_bytes = model_io::read_file(&dir.join(model_io::SVM_FILE_NAME))?;
        let cml_mc = model_io::decode_svm(&svm_bytes)?;
        Ok(Self {
            detector,
            dtl_mc,
            dtl_bc,
            cml_mc,
            versions: ModelVersions {
                detector: v_det,
                dtl_mc: v_mc,
                dtl_bc: v_bc,
                cml_mc: model_io::version_tag(&svm_bytes),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub result: AppResult,
    pub prompt_rerecord: bool,
    pub detection: DetectionLabel,
    /// Absent when the detector rejected the clip.
    pub classifiers: Option<ClassifierOutputs>,
}

#[derive(Clone, Debug)]
pub struct Engine {
    pub models: Models,
    pub preprocessor: Preprocessor,
}

impl Engine {
    pub fn new(models: Models, preprocessor: Preprocessor) -> Self {
        Self { models, preprocessor }
    }

    pub fn versions(&self) -> &ModelVersions {
        &self.models.versions
    }

    pub fn screen_wav(&self, bytes: &[u8]) -> Result<Screening, EngineError> {
        self.screen_clip(&wav::decode_wav(bytes)?)
    }

    pub fn screen_clip(&self, clip: &AudioClip) -> Result<Screening, EngineError> {
        let clip = self.preprocessor.canonical(clip)?;
        let image = self.preprocessor.image(&clip).map_err(PipelineError::from)?;
        let detection = classifiers::detect(&self.models.detector, &image)?;
        if detection.value == Detection::NotCough {
            return Ok(Screening { result: AppResult::NotACough, prompt_rerecord: true, detection, classifiers: None });
        }
        let m = &self.models;
        let (k1, k2, k3) = std::thread::scope(|s| {
            let k1 = s.spawn(|| classifiers::classify_mc(&m.dtl_mc, &image));
            let k2 = s.spawn(|| -> Result<_, EngineError> {
                let fv = self.preprocessor.features(&clip)?;
                Ok(svm::predict_svm(&m.cml_mc, fv.values())?)
            });
            let k3 = classifiers::classify_bc(&m.dtl_bc, &image);
            (k1.join().expect("classifier thread"), k2.join().expect("classifier thread"), k3)
        });
        let outputs = ClassifierOutputs { k1: k1?, k2: k2?, k3: k3? };
        Ok(Screening {
            result: mediator::mediate(&outputs),
            prompt_rerecord: false,
            detection,
            classifiers: Some(outputs),
        })
    }
}
