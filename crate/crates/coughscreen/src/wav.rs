//! RIFF/WAVE PCM16 decoding and encoding.

use std::io::Cursor;

use coughscreen_core::audio::AudioError;
use coughscreen_core::AudioClip;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE container: {0}")]
    MalformedContainer(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio payload is empty")]
    EmptyPayload,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

const SCALE: f64 = 32768.0;

/// Decodes 16-bit integer PCM with one or two channels. Amplitudes are
/// scaled by 1/32768 and stereo is averaged to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.is_empty() {
        return Err(WavError::EmptyPayload);
    }
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| match e {
        hound::Error::Unsupported => WavError::UnsupportedEncoding("unsupported WAVE format".into()),
        e => WavError::MalformedContainer(e.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(WavError::UnsupportedEncoding(format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample)));
    }
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(WavError::UnsupportedEncoding(format!("{channels} channels")));
    }
    let raw: Vec<i16> = reader
        .into_samples::<i16>()
        .collect::<Result<_, _>>()
        .map_err(|e| WavError::MalformedContainer(e.to_string()))?;
    if raw.len() < channels {
        return Err(WavError::EmptyPayload);
    }
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| f64::from(s) / SCALE).sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioClip::new(samples, spec.sample_rate)?)
}

/// Encodes a clip as mono PCM16, rounding to the nearest step and clamping
/// at full scale.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = Cursor::new(Vec::with_capacity(44 + 2 * clip.samples().len()));
    {
        let mut w = hound::WavWriter::new(&mut out, spec).expect("in-memory writer");
        for &s in clip.samples() {
            let q = (s * SCALE).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(q).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    out.into_inner()
}
