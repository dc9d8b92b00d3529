//! Signal processing, classifiers and decision fusion for acoustic cough
//! screening.
//!
//! The crate is `no_std` compatible (it needs `alloc`); the default `std`
//! feature only switches numeric kernels to the platform math library and
//! enables runtime SIMD detection in the matrix multiply backend.
//!
//! Pipeline overview:
//!
//! ```text
//! AudioClip -> Mel spectrogram -> SpectroImage -> detector CNN
//!                                              -> multi-class CNN  (k1)
//!           -> MFCC -> FeatureVector           -> multi-class SVM  (k2)
//!                                              -> binary CNN       (k3)
//!                                 (k1, k2, k3) -> mediator -> AppResult
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod audio;
pub mod classifiers;
pub mod corpus;
pub mod dsp;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod mediator;
pub mod nn;
pub mod rng;
pub mod svm;

mod math;

pub use audio::{AudioClip, ValidationPolicy};
pub use classifiers::{BinaryLabel, DetectionLabel, DiagnosisClass, DiagnosisLabel};
pub use dsp::{MelSpectrogram, MfccConfig, MfccMatrix, SpectroConfig, SpectroImage};
pub use features::{FeatureConfig, FeatureVector};
pub use mediator::{AppResult, ClassifierOutputs, MediatorReport};
