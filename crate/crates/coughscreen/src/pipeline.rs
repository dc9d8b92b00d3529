//! Clip preprocessing shared by training, the CLI and the service.

use coughscreen_core::audio::{validate_clip, AudioError};
use coughscreen_core::dsp::{self, DspError};
use coughscreen_core::features::{self, FeatureError};
use coughscreen_core::{
    AudioClip, FeatureConfig, FeatureVector, MfccConfig, SpectroConfig, SpectroImage, ValidationPolicy,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{Corpus, CorpusIoError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Corpus(#[from] CorpusIoError),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub policy: ValidationPolicy,
    pub spectro: SpectroConfig,
    pub mfcc: MfccConfig,
    pub features: FeatureConfig,
}

impl Preprocessor {
    pub fn canonical(&self, clip: &AudioClip) -> Result<AudioClip, AudioError> {
        validate_clip(clip, &self.policy)
    }

    /// Spectro-image of an already canonical clip.
    pub fn image(&self, clip: &AudioClip) -> Result<SpectroImage, DspError> {
        dsp::to_image(&dsp::mel_spectrogram(clip, &self.spectro)?)
    }

    /// Feature vector of an already canonical clip.
    pub fn features(&self, clip: &AudioClip) -> Result<FeatureVector, PipelineError> {
        let m = dsp::mfcc(clip, &self.mfcc)?;
        Ok(features::feature_vector(&m, &self.features)?)
    }

    pub fn corpus_images(&self, corpus: &Corpus) -> Result<Vec<Vec<f64>>, PipelineError> {
        (0..corpus.len())
            .map(|i| {
                let clip = self.canonical(&corpus.clip(i)?)?;
                Ok(self.image(&clip)?.pixels().to_vec())
            })
            .collect()
    }

    pub fn corpus_features(&self, corpus: &Corpus) -> Result<Vec<Vec<f64>>, PipelineError> {
        (0..corpus.len())
            .map(|i| {
                let clip = self.canonical(&corpus.clip(i)?)?;
                Ok(self.features(&clip)?.values().to_vec())
            })
            .collect()
    }
}
