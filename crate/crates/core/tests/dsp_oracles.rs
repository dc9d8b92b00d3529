//! DSP stages against brute-force references written independently of the
//! library code.

use std::f64::consts::PI;

use coughscreen_core::audio::{validate_clip, CANONICAL_LEN, CANONICAL_SAMPLE_RATE};
use coughscreen_core::dsp::{
    self, hz_to_mel, mel_filterbank, mel_to_hz, mfcc, stft_power, to_image, MfccConfig, SpectroConfig,
};
use coughscreen_core::{AudioClip, ValidationPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_clip(rng: &mut ChaCha8Rng) -> AudioClip {
    let f0 = rng.random_range(80.0..6000.0);
    let noise = rng.random_range(0.0..0.5);
    let s = (0..CANONICAL_LEN)
        .map(|i| {
            let t = i as f64 / CANONICAL_SAMPLE_RATE as f64;
            0.4 * (2.0 * PI * f0 * t).sin() + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    AudioClip::new(s, CANONICAL_SAMPLE_RATE).unwrap()
}

/// O(n^2) power spectrum of one periodic-Hann-windowed frame.
fn dft_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let windowed: Vec<f64> =
        frame.iter().enumerate().map(|(i, x)| x * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in windowed.iter().enumerate() {
                let a = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Largest deviation scaled by the reference's largest magnitude.
fn normwise_rel(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn mel_of_700_hz_is_2595_log10_2() {
    let want = 2595.0 * 2f64.log10();
    let got = hz_to_mel(700.0).unwrap();
    assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn mel_round_trip_over_random_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let f = rng.random_range(0.0..22_050.0_f64);
        let back = mel_to_hz(hz_to_mel(f).unwrap()).unwrap();
        assert!((back - f).abs() <= 1e-6 * f.max(1e-3), "{f} -> {back}");
    }
}

#[test]
fn negative_inputs_are_rejected() {
    assert!(hz_to_mel(-1.0).is_err());
    assert!(mel_to_hz(-0.5).is_err());
    assert!(hz_to_mel(f64::NAN).is_err());
}

#[test]
fn stft_matches_brute_force_dft() {
    let cfg = SpectroConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let clip = random_clip(&mut rng);
        let power = stft_power(&clip, &cfg).unwrap();
        assert_eq!(power.rows(), 1025);
        assert_eq!(power.cols(), 255);
        let t = rng.random_range(0..power.cols());
        let start = t * cfg.hop_length;
        let want = dft_power(&clip.samples()[start..start + cfg.frame_length]);
        let got = power.column(t);
        assert!(normwise_rel(&got, &want) < 1e-6);
    }
}

#[test]
fn mfcc_dct_matches_direct_sum() {
    let cfg = MfccConfig::default();
    let spectro = SpectroConfig { n_mels: cfg.n_filters, ..cfg.spectro };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let clip = random_clip(&mut rng);
        let coeffs = mfcc(&clip, &cfg).unwrap();
        assert_eq!(coeffs.n_coefficients(), 13);
        let power = stft_power(&clip, &spectro).unwrap();
        let bank = mel_filterbank(&spectro, power.rows(), clip.sample_rate()).unwrap();
        let t = rng.random_range(0..power.cols());
        let col = power.column(t);
        let logs: Vec<f64> = (0..cfg.n_filters)
            .map(|m| (bank.weights().row(m).iter().zip(&col).map(|(w, p)| w * p).sum::<f64>() + 1e-10).ln())
            .collect();
        let n = cfg.n_filters as f64;
        let want: Vec<f64> = (0..cfg.n_coefficients)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                scale
                    * logs
                        .iter()
                        .enumerate()
                        .map(|(i, l)| l * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                        .sum::<f64>()
            })
            .collect();
        assert!(normwise_rel(&coeffs.frame(t), &want) < 1e-6);
    }
}

#[test]
fn filterbank_triangles_peak_at_one_inside_nyquist() {
    let cfg = SpectroConfig::default();
    let bank = mel_filterbank(&cfg, cfg.fft_bins(), CANONICAL_SAMPLE_RATE).unwrap();
    assert_eq!(bank.n_filters(), 128);
    let w = bank.weights();
    for m in 0..w.rows() {
        let row = w.row(m);
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(row.iter().any(|v| *v > 0.0), "filter {m} is empty");
    }
    let centers = bank.center_frequencies();
    assert!(centers.windows(2).all(|c| c[0] < c[1]));
    assert!(*centers.last().unwrap() < 22_050.0);
}

#[test]
fn pure_tone_energy_lands_in_its_mel_band() {
    let f = 1000.0;
    let s = (0..CANONICAL_LEN).map(|i| 0.5 * (2.0 * PI * f * i as f64 / 44_100.0).sin()).collect();
    let clip = AudioClip::new(s, 44_100).unwrap();
    let cfg = SpectroConfig::default();
    let spec = dsp::mel_spectrogram(&clip, &cfg).unwrap();
    let bank = mel_filterbank(&cfg, cfg.fft_bins(), 44_100).unwrap();
    let col = spec.values().column(100);
    let loudest = col.iter().enumerate().fold(0, |b, (i, v)| if *v > col[b] { i } else { b });
    let centre = bank.center_frequencies()[loudest];
    assert!((centre - f).abs() < 60.0, "loudest band centred at {centre} Hz");
}

#[test]
fn spectro_image_is_240_by_320_in_unit_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let clip = random_clip(&mut rng);
    let image = to_image(&dsp::mel_spectrogram(&clip, &SpectroConfig::default()).unwrap()).unwrap();
    assert_eq!(image.pixels().len(), 240 * 320);
    let (lo, hi) = image.pixels().iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(lo >= 0.0 && hi <= 1.0);
    assert!((hi - lo - 1.0).abs() < 1e-12);
}

#[test]
fn silent_image_is_uniform_grey() {
    let clip = AudioClip::new(vec![0.0; CANONICAL_LEN], 44_100).unwrap();
    let spec = dsp::mel_spectrogram(&clip, &SpectroConfig::default()).unwrap();
    let floor = 10.0 * 1e-10_f64.log10();
    assert!(spec.values().as_slice().iter().all(|v| (v - floor).abs() < 1e-9));
    let image = to_image(&spec).unwrap();
    assert!(image.pixels().iter().all(|v| *v == 0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mel_scale_is_strictly_increasing(a in 0.0..20_000.0_f64, b in 0.0..20_000.0_f64) {
        prop_assume!(a != b);
        let (ma, mb) = (hz_to_mel(a).unwrap(), hz_to_mel(b).unwrap());
        prop_assert_eq!(a < b, ma < mb);
    }

    #[test]
    fn validation_always_yields_three_seconds(len in 22_050usize..300_000, rate in prop::sample::select(vec![8_000u32, 16_000, 22_050, 44_100, 48_000])) {
        let s: Vec<f64> = (0..len).map(|i| 0.3 * ((i % 97) as f64 / 97.0 - 0.5)).collect();
        let clip = AudioClip::new(s, rate).unwrap();
        match validate_clip(&clip, &ValidationPolicy::default()) {
            Ok(c) => {
                prop_assert!(c.is_canonical());
                prop_assert_eq!(c.samples().len(), CANONICAL_LEN);
                let again = validate_clip(&c, &ValidationPolicy::default()).unwrap();
                prop_assert_eq!(again, c);
            }
            Err(_) => prop_assert!((len as f64 / rate as f64) < 0.5),
        }
    }
}
