//! Spectral front end: Mel scale, STFT, Mel filterbank, Mel spectrogram,
//! spectro-image rendering and MFCC.

mod fft;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fft::FftPlan;

use crate::audio::AudioClip;
use crate::linalg::Matrix;
use crate::math;

/// Floor added to powers before taking logarithms.
pub const LOG_EPSILON: f64 = 1e-10;

pub const IMAGE_HEIGHT: usize = 240;
pub const IMAGE_WIDTH: usize = 320;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("negative frequency {0} Hz")]
    NegativeFrequency(f64),
    #[error("negative mel value {0}")]
    NegativeMel(f64),
    #[error("invalid spectrogram configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("clip has {samples} samples, shorter than one {frame}-sample frame")]
    ClipShorterThanFrame { samples: usize, frame: usize },
    #[error("{bins} FFT bins cannot hold {needed} filter edges")]
    TooFewBins { bins: usize, needed: usize },
    #[error("spectrogram contains non-finite values")]
    NonFinite,
    #[error("image must be {IMAGE_HEIGHT}x{IMAGE_WIDTH} with values in [0, 1]")]
    BadImage,
}

/// `m = 2595 * log10(1 + f / 700)`
pub fn hz_to_mel(f: f64) -> Result<f64, DspError> {
    if f < 0.0 || f.is_nan() {
        return Err(DspError::NegativeFrequency(f));
    }
    Ok(2595.0 * math::log10(1.0 + f / 700.0))
}

/// Exact inverse of [`hz_to_mel`].
pub fn mel_to_hz(m: f64) -> Result<f64, DspError> {
    if m < 0.0 || m.is_nan() {
        return Err(DspError::NegativeMel(m));
    }
    Ok(700.0 * (math::powf(10.0, m / 2595.0) - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    /// Periodic window of `len` taps.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    Window::Hann => 0.5 - 0.5 * math::cos(phase),
                    Window::Hamming => 0.54 - 0.46 * math::cos(phase),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Framing and filterbank parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectroConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    pub window: Window,
    pub n_mels: usize,
    pub fmin: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub fmax: Option<f64>,
}

impl Default for SpectroConfig {
    fn default() -> Self {
        Self { frame_length: 2048, hop_length: 512, window: Window::Hann, n_mels: 128, fmin: 0.0, fmax: None }
    }
}

impl SpectroConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        if self.frame_length == 0 {
            return Err(DspError::InvalidConfig("frame_length must be positive"));
        }
        if self.hop_length == 0 || self.hop_length > self.frame_length {
            return Err(DspError::InvalidConfig("hop_length must be in 1..=frame_length"));
        }
        if self.n_mels < 2 {
            return Err(DspError::InvalidConfig("n_mels must be at least 2"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let fmax = self.fmax_for(sample_rate);
        if !(self.fmin >= 0.0 && self.fmin < fmax && fmax <= nyquist) {
            return Err(DspError::InvalidConfig("need 0 <= fmin < fmax <= sample_rate / 2"));
        }
        Ok(())
    }

    pub fn fmax_for(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn fft_bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    /// `1 + floor((samples - frame_length) / hop_length)`, or `None` when
    /// the clip is shorter than a frame.
    pub fn frame_count(&self, samples: usize) -> Option<usize> {
        (samples >= self.frame_length).then(|| 1 + (samples - self.frame_length) / self.hop_length)
    }
}

/// Windowed power spectrogram, `(frame_length/2 + 1) x N`, one column per
/// frame. Frames start at multiples of `hop_length` with no centering.
pub fn stft_power(clip: &AudioClip, config: &SpectroConfig) -> Result<Matrix, DspError> {
    config.validate(clip.sample_rate())?;
    let samples = clip.samples();
    let frames = config
        .frame_count(samples.len())
        .ok_or(DspError::ClipShorterThanFrame { samples: samples.len(), frame: config.frame_length })?;
    let plan = FftPlan::new(config.frame_length);
    let window = config.window.coefficients(config.frame_length);
    let bins = config.fft_bins();
    let mut out = Matrix::zeros(bins, frames);
    let mut frame = vec![0.0; config.frame_length];
    let mut power = vec![0.0; bins];
    for t in 0..frames {
        let start = t * config.hop_length;
        for ((dst, &x), &w) in frame.iter_mut().zip(&samples[start..]).zip(&window) {
            *dst = x * w;
        }
        plan.power_spectrum(&frame, &mut power);
        for (k, &p) in power.iter().enumerate() {
            out.set(k, t, p);
        }
    }
    Ok(out)
}

/// Triangular filters with centers equally spaced on the Mel axis.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    weights: Matrix,
    // (first nonzero bin, weights) per filter
    sparse: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn into_weights(self) -> Matrix {
        self.weights
    }

    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn n_filters(&self) -> usize {
        self.weights.rows()
    }

    /// Filter energies for one power-spectrum column.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((start, w), o) in self.sparse.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// `n_filters x fft_bins` triangular Mel filterbank with unit peaks.
pub fn mel_filterbank(config: &SpectroConfig, fft_bins: usize, sample_rate: u32) -> Result<MelFilterbank, DspError> {
    build_filterbank(config.n_mels, config.fmin, config.fmax_for(sample_rate), fft_bins, sample_rate)
}

fn build_filterbank(
    n_filters: usize,
    fmin: f64,
    fmax: f64,
    fft_bins: usize,
    sample_rate: u32,
) -> Result<MelFilterbank, DspError> {
    if n_filters < 2 {
        return Err(DspError::InvalidConfig("at least two filters required"));
    }
    if fft_bins < n_filters + 2 {
        return Err(DspError::TooFewBins { bins: fft_bins, needed: n_filters + 2 });
    }
    let mel_lo = hz_to_mel(fmin)?;
    let mel_hi = hz_to_mel(fmax)?;
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
        .collect::<Result<_, _>>()?;
    let frame_length = 2 * (fft_bins - 1);
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / frame_length as f64;
    let mut weights = Matrix::zeros(n_filters, fft_bins);
    let mut sparse = Vec::with_capacity(n_filters);
    for m in 0..n_filters {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut first = None;
        let mut last = 0;
        for k in 0..fft_bins {
            let f = bin_hz(k);
            let w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            if w > 0.0 {
                weights.set(m, k, w);
                first.get_or_insert(k);
                last = k;
            }
        }
        let start = first.unwrap_or(0);
        let row = weights.row(m);
        sparse.push((start, row[start..=last.max(start)].to_vec()));
    }
    Ok(MelFilterbank { weights, sparse, centers_hz: edges[1..=n_filters].to_vec() })
}

/// Log-power Mel spectrogram in dB, `n_mels x N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    values: Matrix,
    config: SpectroConfig,
}

impl MelSpectrogram {
    pub fn new(values: Matrix, config: SpectroConfig) -> Self {
        Self { values, config }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_mels(&self) -> usize {
        self.values.rows()
    }

    pub fn frame_count(&self) -> usize {
        self.values.cols()
    }

    pub fn config(&self) -> &SpectroConfig {
        &self.config
    }

    /// The value a silent bin takes: `10 log10(LOG_EPSILON)`.
    pub fn floor_db() -> f64 {
        10.0 * math::log10(LOG_EPSILON)
    }
}

pub fn mel_spectrogram(clip: &AudioClip, config: &SpectroConfig) -> Result<MelSpectrogram, DspError> {
    let power = stft_power(clip, config)?;
    let bank = mel_filterbank(config, power.rows(), clip.sample_rate())?;
    let frames = power.cols();
    let mut values = Matrix::zeros(config.n_mels, frames);
    let mut column = vec![0.0; power.rows()];
    let mut energies = vec![0.0; config.n_mels];
    for t in 0..frames {
        for (k, c) in column.iter_mut().enumerate() {
            *c = power.get(k, t);
        }
        bank.apply(&column, &mut energies);
        for (m, &e) in energies.iter().enumerate() {
            values.set(m, t, 10.0 * math::log10(e + LOG_EPSILON));
        }
    }
    Ok(MelSpectrogram { values, config: *config })
}

/// Grayscale network input: 240 rows (frequency, highest band on top) by
/// 320 columns (time), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectroImage {
    pixels: Vec<f64>,
}

impl SpectroImage {
    pub const HEIGHT: usize = IMAGE_HEIGHT;
    pub const WIDTH: usize = IMAGE_WIDTH;
    pub const CHANNELS: usize = 1;

    pub fn from_pixels(pixels: Vec<f64>) -> Result<Self, DspError> {
        if pixels.len() != IMAGE_HEIGHT * IMAGE_WIDTH || pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(DspError::BadImage);
        }
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMAGE_WIDTH + col]
    }
}

/// Bilinear resize to 240x320 followed by min-max normalization. A constant
/// spectrogram renders as all 0.5.
pub fn to_image(spec: &MelSpectrogram) -> Result<SpectroImage, DspError> {
    let src = spec.values();
    if src.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(DspError::NonFinite);
    }
    let (in_h, in_w) = (src.rows(), src.cols());
    if in_h == 0 || in_w == 0 {
        return Err(DspError::NonFinite);
    }
    let scale = |out: usize, inp: usize, i: usize| {
        if out <= 1 || inp <= 1 {
            0.0
        } else {
            i as f64 * (inp - 1) as f64 / (out - 1) as f64
        }
    };
    let mut pixels = Vec::with_capacity(IMAGE_HEIGHT * IMAGE_WIDTH);
    for row in 0..IMAGE_HEIGHT {
        // row 0 is the top of the image, i.e. the highest Mel band
        let y = scale(IMAGE_HEIGHT, in_h, IMAGE_HEIGHT - 1 - row);
        let y0 = (math::floor(y) as usize).min(in_h - 1);
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = y - y0 as f64;
        for col in 0..IMAGE_WIDTH {
            let x = scale(IMAGE_WIDTH, in_w, col);
            let x0 = (math::floor(x) as usize).min(in_w - 1);
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = x - x0 as f64;
            let top = src.get(y0, x0) * (1.0 - fx) + src.get(y0, x1) * fx;
            let bottom = src.get(y1, x0) * (1.0 - fx) + src.get(y1, x1) * fx;
            pixels.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    let (lo, hi) = pixels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range <= 0.0 {
        pixels.iter_mut().for_each(|p| *p = 0.5);
    } else {
        pixels.iter_mut().for_each(|p| *p = ((*p - lo) / range).clamp(0.0, 1.0));
    }
    Ok(SpectroImage { pixels })
}

/// MFCC parameters. `spectro.n_mels` is ignored; `n_filters` sets the bank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_coefficients: usize,
    pub n_filters: usize,
    pub spectro: SpectroConfig,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self { n_coefficients: 13, n_filters: 40, spectro: SpectroConfig::default() }
    }
}

/// `M x N` cepstral coefficients, one column per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MfccMatrix {
    coefficients: Matrix,
}

impl MfccMatrix {
    pub fn new(coefficients: Matrix) -> Self {
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.coefficients
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.coefficients.cols()
    }

    pub fn frame(&self, t: usize) -> Vec<f64> {
        self.coefficients.column(t)
    }
}

/// Orthonormal DCT-II basis, `n_out x n_in`.
pub fn dct_ii_basis(n_in: usize, n_out: usize) -> Matrix {
    let n = n_in as f64;
    Matrix::from_fn(n_out, n_in, |k, i| {
        let s = if k == 0 { math::sqrt(1.0 / n) } else { math::sqrt(2.0 / n) };
        s * math::cos(PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n))
    })
}

pub fn mfcc(clip: &AudioClip, config: &MfccConfig) -> Result<MfccMatrix, DspError> {
    if config.n_coefficients == 0 || config.n_coefficients > config.n_filters {
        return Err(DspError::InvalidConfig("need 1 <= n_coefficients <= n_filters"));
    }
    let spectro = SpectroConfig { n_mels: config.n_filters, ..config.spectro };
    let power = stft_power(clip, &spectro)?;
    let bank = mel_filterbank(&spectro, power.rows(), clip.sample_rate())?;
    let basis = dct_ii_basis(config.n_filters, config.n_coefficients);
    let frames = power.cols();
    let mut out = Matrix::zeros(config.n_coefficients, frames);
    let mut column = vec![0.0; power.rows()];
    let mut energies = vec![0.0; config.n_filters];
    for t in 0..frames {
        for (k, c) in column.iter_mut().enumerate() {
            *c = power.get(k, t);
        }
        bank.apply(&column, &mut energies);
        energies.iter_mut().for_each(|e| *e = math::ln(*e + LOG_EPSILON));
        for m in 0..config.n_coefficients {
            out.set(m, t, basis.row(m).iter().zip(&energies).map(|(a, b)| a * b).sum());
        }
    }
    Ok(MfccMatrix { coefficients: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::CANONICAL_LEN;

    fn tone_clip(freq: f64) -> AudioClip {
        let s = (0..CANONICAL_LEN).map(|i| 0.5 * math::sin(2.0 * PI * freq * i as f64 / 44_100.0)).collect();
        AudioClip::new(s, 44_100).unwrap()
    }

    #[test]
    fn mel_endpoints() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        let m700 = 2595.0 * core::f64::consts::LOG10_2;
        assert!((hz_to_mel(700.0).unwrap() - m700).abs() < 1e-9 * m700);
        assert!((hz_to_mel(700.0).unwrap() - 781.1728).abs() < 1e-4);
        assert!((hz_to_mel(1000.0).unwrap() - 999.99).abs() < 0.05);
        assert!((mel_to_hz(m700).unwrap() - 700.0).abs() < 1e-3);
        assert!(matches!(hz_to_mel(-1.0), Err(DspError::NegativeFrequency(_))));
        assert!(matches!(mel_to_hz(-1.0), Err(DspError::NegativeMel(_))));
    }

    #[test]
    fn canonical_shapes() {
        let clip = tone_clip(440.0);
        let cfg = SpectroConfig::default();
        let p = stft_power(&clip, &cfg).unwrap();
        assert_eq!((p.rows(), p.cols()), (1025, 255));
        let mel = mel_spectrogram(&clip, &cfg).unwrap();
        assert_eq!((mel.n_mels(), mel.frame_count()), (128, 255));
        let m = mfcc(&clip, &MfccConfig::default()).unwrap();
        assert_eq!((m.n_coefficients(), m.n_frames()), (13, 255));
    }

    #[test]
    fn silence_floors() {
        let clip = AudioClip::new(vec![0.0; CANONICAL_LEN], 44_100).unwrap();
        let cfg = SpectroConfig::default();
        assert!(stft_power(&clip, &cfg).unwrap().as_slice().iter().all(|v| *v == 0.0));
        let mel = mel_spectrogram(&clip, &cfg).unwrap();
        let floor = MelSpectrogram::floor_db();
        assert!((floor + 100.0).abs() < 1e-12);
        assert!(mel.values().as_slice().iter().all(|v| *v == floor));
        let img = to_image(&mel).unwrap();
        assert!(img.pixels().iter().all(|p| *p == 0.5));
    }

    #[test]
    fn filterbank_construction() {
        let cfg = SpectroConfig::default();
        let bank = mel_filterbank(&cfg, 1025, 44_100).unwrap();
        assert_eq!(bank.weights().rows(), 128);
        assert!(bank.center_frequencies().windows(2).all(|w| w[0] < w[1]));
        for m in 0..128 {
            let row = bank.weights().row(m);
            assert!(row.iter().cloned().fold(0.0, f64::max) > 0.0, "empty filter {m}");
            assert!(row.iter().all(|w| *w >= 0.0));
        }
        for m in 1..127 {
            let a = bank.weights().row(m);
            let b = bank.weights().row(m + 1);
            assert!(a.iter().zip(b).any(|(x, y)| *x > 0.0 && *y > 0.0), "no overlap at {m}");
        }
        assert!(matches!(build_filterbank(128, 0.0, 22_050.0, 100, 44_100), Err(DspError::TooFewBins { .. })));
    }

    #[test]
    fn tone_pitch_orders_mel_bands() {
        let cfg = SpectroConfig::default();
        let peak_band = |f: f64| {
            let mel = mel_spectrogram(&tone_clip(f), &cfg).unwrap();
            let t = mel.frame_count() / 2;
            (0..mel.n_mels()).max_by(|&a, &b| mel.values().get(a, t).total_cmp(&mel.values().get(b, t))).unwrap()
        };
        assert!(peak_band(300.0) < peak_band(5000.0));
    }

    #[test]
    fn image_is_normalized() {
        let values = Matrix::from_fn(128, 255, |r, c| (r * 3 + c) as f64 - 50.0);
        let img = to_image(&MelSpectrogram::new(values, SpectroConfig::default())).unwrap();
        assert_eq!(img.pixels().len(), 240 * 320);
        let lo = img.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = img.pixels().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
        // low bands at the bottom
        assert!(img.get(239, 0) < img.get(0, 0));
        let bad = Matrix::from_vec(2, 2, vec![0.0, f64::NAN, 1.0, 2.0]);
        assert!(to_image(&MelSpectrogram::new(bad, SpectroConfig::default())).is_err());
    }

    #[test]
    fn config_rejects_bad_hop() {
        let cfg = SpectroConfig { hop_length: 4096, ..SpectroConfig::default() };
        assert!(cfg.validate(44_100).is_err());
        let short = AudioClip::new(vec![0.1; 100], 44_100).unwrap();
        assert!(matches!(stft_power(&short, &SpectroConfig::default()), Err(DspError::ClipShorterThanFrame { .. })));
    }
}
