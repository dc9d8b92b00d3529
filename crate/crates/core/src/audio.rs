//! Canonical clip format and normalization.
//!
//! Every downstream stage assumes mono, 44.1 kHz, exactly three seconds.
//! [`validate_clip`] brings an arbitrary decoded clip into that shape.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

pub const CANONICAL_SAMPLE_RATE: u32 = 44_100;
pub const CANONICAL_SECONDS: f64 = 3.0;
/// `CANONICAL_SAMPLE_RATE * CANONICAL_SECONDS`.
pub const CANONICAL_LEN: usize = 132_300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("clip has no samples")]
    EmptyPayload,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("sample {index} is {value}, outside [-1, 1]")]
    AmplitudeOutOfRange { index: usize, value: f64 },
    #[error("clip content is {seconds:.3} s, below the {minimum:.3} s minimum")]
    TooShort { seconds: f64, minimum: f64 },
    #[error("peak amplitude {peak:e} is below the {floor:e} floor")]
    SilentInput { peak: f64, floor: f64 },
}

/// A mono waveform with amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > 1.0) {
            return Err(AudioError::AmplitudeOutOfRange { index, value });
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> u16 {
        1
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// True when the clip already has the canonical rate and length.
    pub fn is_canonical(&self) -> bool {
        self.sample_rate == CANONICAL_SAMPLE_RATE && self.samples.len() == CANONICAL_LEN
    }
}

/// Limits applied by [`validate_clip`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPolicy {
    /// Minimum duration of real (non-padding) content, seconds.
    pub min_content_seconds: f64,
    /// Peak amplitude below which a clip counts as silent.
    pub silence_floor: f64,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self { min_content_seconds: 0.5, silence_floor: 1e-4 }
    }
}

/// Resample to 44.1 kHz, then center-truncate or symmetrically zero-pad to
/// exactly three seconds.
pub fn validate_clip(clip: &AudioClip, policy: &ValidationPolicy) -> Result<AudioClip, AudioError> {
    if clip.samples.is_empty() {
        return Err(AudioError::EmptyPayload);
    }
    let seconds = clip.duration();
    if seconds < policy.min_content_seconds {
        return Err(AudioError::TooShort { seconds, minimum: policy.min_content_seconds });
    }
    let peak = clip.peak();
    if peak < policy.silence_floor {
        return Err(AudioError::SilentInput { peak, floor: policy.silence_floor });
    }
    if clip.is_canonical() {
        return Ok(clip.clone());
    }
    let resampled = if clip.sample_rate == CANONICAL_SAMPLE_RATE {
        clip.samples.clone()
    } else {
        resample_linear(&clip.samples, clip.sample_rate, CANONICAL_SAMPLE_RATE)
    };
    Ok(AudioClip { samples: fit_length(resampled, CANONICAL_LEN), sample_rate: CANONICAL_SAMPLE_RATE })
}

/// Linear-interpolation resampling. Output length is
/// `round(len * to / from)`.
pub fn resample_linear(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if samples.is_empty() || from == to {
        return samples.to_vec();
    }
    let out_len = math::round(samples.len() as f64 * to as f64 / from as f64) as usize;
    let step = from as f64 / to as f64;
    let last = samples.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let left = (math::floor(pos) as usize).min(last);
            let right = (left + 1).min(last);
            let frac = pos - left as f64;
            let v = samples[left] + (samples[right] - samples[left]) * frac;
            v.clamp(-1.0, 1.0)
        })
        .collect()
}

/// Center-truncate or symmetrically zero-pad to `target` samples. With odd
/// padding the extra zero goes to the end.
pub fn fit_length(samples: Vec<f64>, target: usize) -> Vec<f64> {
    use core::cmp::Ordering;
    match samples.len().cmp(&target) {
        Ordering::Equal => samples,
        Ordering::Greater => {
            let start = (samples.len() - target) / 2;
            samples[start..start + target].to_vec()
        }
        Ordering::Less => {
            let pad = target - samples.len();
            let left = pad / 2;
            let mut out = vec![0.0; target];
            out[left..left + samples.len()].copy_from_slice(&samples);
            out
        }
    }
}
