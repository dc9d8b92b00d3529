//! Index-level dataset operations (class balancing, stratified folds) and
//! the synthetic cough/not-cough signal generator.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, CANONICAL_LEN, CANONICAL_SAMPLE_RATE};
use crate::math;
use crate::rng::{self, Rng, SeededRng};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("class {class} has {count} samples, fewer than k = {k}")]
    ClassSmallerThanK { class: usize, count: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("label {label} outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(&'static str),
}

fn class_members(labels: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>, CorpusError> {
    let mut members = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members.get_mut(l).ok_or(CorpusError::LabelOutOfRange { label: l, classes: n_classes })?.push(i);
    }
    Ok(members)
}

/// Seeded uniform subsample of every class down to the smallest class
/// count. Returns sorted indices; never duplicates.
pub fn balance_indices(labels: &[usize], n_classes: usize, seed: u64) -> Result<Vec<usize>, CorpusError> {
    let members = class_members(labels, n_classes)?;
    if let Some(c) = members.iter().position(|m| m.is_empty()) {
        return Err(CorpusError::EmptyClass(c));
    }
    let min = members.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(min * n_classes);
    for mut m in members {
        rng::shuffle(&mut m, &mut rng);
        out.extend_from_slice(&m[..min]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Stratified k-fold assignment: each class is shuffled, the class lists
/// are concatenated, and position `i` goes to fold `i % k`. Fold sizes and
/// per-class fold sizes differ by at most one. Classes with no samples are
/// ignored.
pub fn kfold_indices(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidK(k));
    }
    let members = class_members(labels, n_classes)?;
    for (class, m) in members.iter().enumerate() {
        if !m.is_empty() && m.len() < k {
            return Err(CorpusError::ClassSmallerThanK { class, count: m.len(), k });
        }
    }
    let mut rng = rng::seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut pos = 0;
    for mut m in members {
        rng::shuffle(&mut m, &mut rng);
        for i in m {
            folds[pos % k].push(i);
            pos += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Training indices for held-out fold `f`, ascending.
pub fn train_indices(folds: &[Vec<usize>], f: usize) -> Vec<usize> {
    let mut v: Vec<usize> =
        folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, x)| x.iter().copied()).collect();
    v.sort_unstable();
    v
}

/// Sound classes the generator can produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthClass {
    /// A cough of any diagnosis type.
    Cough,
    /// Environmental non-cough sound.
    NotCough,
    Covid19,
    Pertussis,
    Bronchitis,
    Normal,
}

impl SynthClass {
    pub const ALL: [SynthClass; 6] = [
        SynthClass::Cough,
        SynthClass::NotCough,
        SynthClass::Covid19,
        SynthClass::Pertussis,
        SynthClass::Bronchitis,
        SynthClass::Normal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::Cough => "cough",
            SynthClass::NotCough => "not_cough",
            SynthClass::Covid19 => "covid19",
            SynthClass::Pertussis => "pertussis",
            SynthClass::Bronchitis => "bronchitis",
            SynthClass::Normal => "normal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    fn ordinal(self) -> u64 {
        Self::ALL.iter().position(|c| *c == self).unwrap() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    pub per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.classes.is_empty() {
            return Err(CorpusError::InvalidSpec("no classes"));
        }
        if self.per_class == 0 {
            return Err(CorpusError::InvalidSpec("per-class count must be positive"));
        }
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(CorpusError::InvalidSpec("duplicate class"));
        }
        Ok(())
    }
}

/// A generated clip with its id and class.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub id: String,
    pub class: SynthClass,
    pub clip: AudioClip,
}

/// Every clip of the spec, class-major. Each clip draws from its own RNG
/// stream, so a clip depends only on `(seed, class, index)`.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<Vec<SynthSample>, CorpusError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.classes.len() * spec.per_class);
    for &class in &spec.classes {
        for i in 0..spec.per_class {
            out.push(SynthSample {
                id: format!("{}_{:04}", class.name(), i),
                class,
                clip: synth_clip(class, spec.seed, i as u64),
            });
        }
    }
    Ok(out)
}

/// One canonical 3 s clip of `class`.
pub fn synth_clip(class: SynthClass, seed: u64, index: u64) -> AudioClip {
    let mut rng = rng::seeded_stream(seed, (class.ordinal() << 48) | index);
    let samples = synthesize(class, &mut rng);
    AudioClip::new(samples, CANONICAL_SAMPLE_RATE).expect("generator output is bounded")
}

const SR: f64 = CANONICAL_SAMPLE_RATE as f64;

/// Second-order IIR section (RBJ cookbook coefficients).
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    z: [f64; 2],
}

impl Biquad {
    fn bandpass(center: f64, q: f64) -> Self {
        let w = 2.0 * PI * center / SR;
        let alpha = math::sin(w) / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self { b: [alpha / a0, 0.0, -alpha / a0], a: [-2.0 * math::cos(w) / a0, (1.0 - alpha) / a0], z: [0.0; 2] }
    }

    fn lowpass(cutoff: f64) -> Self {
        let w = 2.0 * PI * cutoff / SR;
        let alpha = math::sin(w) / (2.0 * core::f64::consts::FRAC_1_SQRT_2);
        let cw = math::cos(w);
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - cw) / 2.0 / a0, (1.0 - cw) / a0, (1.0 - cw) / 2.0 / a0],
            a: [-2.0 * cw / a0, (1.0 - alpha) / a0],
            z: [0.0; 2],
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        // transposed direct form II
        let y = self.b[0] * x + self.z[0];
        self.z[0] = self.b[1] * x - self.a[0] * y + self.z[1];
        self.z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Spectral and temporal signature of one cough type.
struct CoughProfile {
    center: (f64, f64),
    q: f64,
    f0: (f64, f64),
    harmonics: usize,
    harmonic_decay: f64,
    harmonic_gain: f64,
    tau: (f64, f64),
    duration: (f64, f64),
    bursts: (usize, usize),
    gap: (f64, f64),
    whoop: bool,
    crackle: bool,
}

fn profile(class: SynthClass) -> CoughProfile {
    match class {
        // dry: bright, short, fast decay
        SynthClass::Covid19 => CoughProfile {
            center: (1800.0, 3200.0),
            q: 1.4,
            f0: (330.0, 460.0),
            harmonics: 3,
            harmonic_decay: 0.5,
            harmonic_gain: 0.35,
            tau: (0.04, 0.09),
            duration: (0.18, 0.3),
            bursts: (1, 2),
            gap: (0.25, 0.4),
            whoop: false,
            crackle: false,
        },
        // paroxysm of short coughs followed by an inspiratory whoop
        SynthClass::Pertussis => CoughProfile {
            center: (900.0, 1600.0),
            q: 1.2,
            f0: (240.0, 330.0),
            harmonics: 4,
            harmonic_decay: 0.6,
            harmonic_gain: 0.5,
            tau: (0.05, 0.09),
            duration: (0.1, 0.15),
            bursts: (3, 5),
            gap: (0.17, 0.24),
            whoop: true,
            crackle: false,
        },
        // wet: dark, long, strongly voiced, with crackles
        SynthClass::Bronchitis => CoughProfile {
            center: (350.0, 750.0),
            q: 0.8,
            f0: (110.0, 175.0),
            harmonics: 6,
            harmonic_decay: 0.75,
            harmonic_gain: 0.7,
            tau: (0.14, 0.24),
            duration: (0.38, 0.52),
            bursts: (1, 1),
            gap: (0.0, 0.0),
            whoop: false,
            crackle: true,
        },
        _ => CoughProfile {
            center: (1100.0, 2000.0),
            q: 1.1,
            f0: (190.0, 270.0),
            harmonics: 4,
            harmonic_decay: 0.6,
            harmonic_gain: 0.45,
            tau: (0.08, 0.14),
            duration: (0.28, 0.4),
            bursts: (1, 2),
            gap: (0.35, 0.5),
            whoop: false,
            crackle: false,
        },
    }
}

fn background(out: &mut [f64], rng: &mut SeededRng) {
    let level = uniform(rng, 0.002, 0.008);
    for v in out.iter_mut() {
        *v += level * rng::normal(rng);
    }
}

fn cough_burst(out: &mut [f64], start: usize, p: &CoughProfile, rng: &mut SeededRng) {
    let dur = uniform(rng, p.duration.0, p.duration.1);
    let tau = uniform(rng, p.tau.0, p.tau.1);
    let f0 = uniform(rng, p.f0.0, p.f0.1);
    let mut bp = Biquad::bandpass(uniform(rng, p.center.0, p.center.1), p.q);
    let phases: Vec<f64> = (0..p.harmonics).map(|_| uniform(rng, 0.0, 2.0 * PI)).collect();
    let len = (dur * SR) as usize;
    let mut phase = 0.0;
    for n in 0..len {
        let idx = start + n;
        if idx >= out.len() {
            break;
        }
        let t = n as f64 / SR;
        let attack = (t / 0.01).min(1.0);
        let release = ((dur - t) / 0.015).clamp(0.0, 1.0);
        let env = attack * release * math::exp(-t / tau);
        let noise = bp.process(rng::normal(rng));
        // falling pitch across the burst
        phase += 2.0 * PI * f0 * (1.0 - 0.2 * t / dur) / SR;
        let mut voiced = 0.0;
        let mut g = 1.0;
        for (h, ph) in phases.iter().enumerate() {
            voiced += g * math::sin((h + 1) as f64 * phase + ph);
            g *= p.harmonic_decay;
        }
        let mut s = 2.5 * noise + p.harmonic_gain * voiced;
        if p.crackle && rng.random::<f64>() < 0.0015 {
            s += uniform(rng, -1.5, 1.5);
        }
        out[idx] += env * s;
    }
}

fn whoop(out: &mut [f64], start: usize, rng: &mut SeededRng) {
    let dur = uniform(rng, 0.3, 0.45);
    let (f_lo, f_hi) = (uniform(rng, 500.0, 700.0), uniform(rng, 1200.0, 1500.0));
    let len = (dur * SR) as usize;
    let mut phase = 0.0;
    for n in 0..len {
        let idx = start + n;
        if idx >= out.len() {
            break;
        }
        let x = n as f64 / len as f64;
        let env = math::sin(PI * x) * 0.6;
        phase += 2.0 * PI * (f_lo + (f_hi - f_lo) * x) / SR;
        out[idx] += env * (math::sin(phase) + 0.3 * math::sin(2.0 * phase));
    }
}

fn cough(class: SynthClass, out: &mut [f64], rng: &mut SeededRng) {
    let p = profile(class);
    let bursts = rng.random_range(p.bursts.0..=p.bursts.1);
    let mut gaps: Vec<f64> = (1..bursts).map(|_| uniform(rng, p.gap.0, p.gap.1)).collect();
    let mut span: f64 = gaps.iter().sum::<f64>() + p.duration.1;
    if p.whoop {
        gaps.push(uniform(rng, 0.12, 0.2));
        span += 0.45;
    }
    let center = 1.5 + uniform(rng, -0.35, 0.35);
    let mut t = (center - span / 2.0).max(0.05);
    for b in 0..bursts {
        cough_burst(out, (t * SR) as usize, &p, rng);
        if b + 1 < bursts {
            t += gaps[b];
        }
    }
    if p.whoop {
        t += p.duration.1 + gaps[bursts - 1];
        whoop(out, (t * SR) as usize, rng);
    }
}

fn environmental(out: &mut [f64], rng: &mut SeededRng) {
    let len = out.len();
    match rng.random_range(0..5u32) {
        // wind or rain: low-passed noise with slow swell
        0 => {
            let mut lp = Biquad::lowpass(uniform(rng, 300.0, 4000.0));
            let rate = uniform(rng, 0.2, 1.0);
            let ph = uniform(rng, 0.0, 2.0 * PI);
            for (n, v) in out.iter_mut().enumerate() {
                let t = n as f64 / SR;
                let swell = 0.6 + 0.4 * math::sin(2.0 * PI * rate * t + ph);
                *v += swell * lp.process(rng::normal(rng));
            }
        }
        // engine hum with vibrato
        1 => {
            let f = uniform(rng, 60.0, 200.0);
            let depth = uniform(rng, 0.005, 0.02);
            let mut phase = 0.0;
            for v in out.iter_mut() {
                phase += 2.0 * PI * f * (1.0 + depth * math::sin(phase / 40.0)) / SR;
                let mut s = 0.0;
                let mut g = 1.0;
                for h in 1..=8 {
                    s += g * math::sin(h as f64 * phase);
                    g *= 0.7;
                }
                *v += 0.3 * s;
            }
        }
        // knocks or footsteps: short resonant pings at a steady pace
        2 => {
            let period = uniform(rng, 0.25, 0.6);
            let f = uniform(rng, 150.0, 900.0);
            let mut t = uniform(rng, 0.0, period);
            while t < 3.0 {
                let start = (t * SR) as usize;
                let amp = uniform(rng, 0.6, 1.0);
                for n in 0..(0.04 * SR) as usize {
                    if start + n >= len {
                        break;
                    }
                    let tt = n as f64 / SR;
                    out[start + n] += amp * math::exp(-tt / 0.008) * math::sin(2.0 * PI * f * tt);
                }
                t += period * uniform(rng, 0.9, 1.1);
            }
        }
        // bird chirps: fast high sweeps in groups
        3 => {
            let mut t = uniform(rng, 0.0, 0.3);
            while t < 2.9 {
                let (f_a, f_b) = (uniform(rng, 3000.0, 5000.0), uniform(rng, 4500.0, 7500.0));
                let dur = uniform(rng, 0.05, 0.1);
                let start = (t * SR) as usize;
                let n_len = (dur * SR) as usize;
                let mut phase = 0.0;
                for n in 0..n_len {
                    if start + n >= len {
                        break;
                    }
                    let x = n as f64 / n_len as f64;
                    phase += 2.0 * PI * (f_a + (f_b - f_a) * x) / SR;
                    out[start + n] += math::sin(PI * x) * math::sin(phase);
                }
                t += uniform(rng, 0.12, 0.45);
            }
        }
        // sustained vowel: long voiced tone through two formant filters
        _ => {
            let f0 = uniform(rng, 100.0, 220.0);
            let dur = uniform(rng, 1.2, 2.4);
            let start = uniform(rng, 0.1, 2.9 - dur);
            let mut f1 = Biquad::bandpass(uniform(rng, 500.0, 800.0), 5.0);
            let mut f2 = Biquad::bandpass(uniform(rng, 1000.0, 2000.0), 5.0);
            let mut phase: f64 = 0.0;
            for (n, v) in out.iter_mut().enumerate() {
                let t = n as f64 / SR - start;
                if !(0.0..dur).contains(&t) {
                    continue;
                }
                let env = (t / 0.08).min(1.0) * ((dur - t) / 0.08).min(1.0);
                phase += 2.0 * PI * f0 / SR;
                // band-limited pulse train
                let mut src = 0.0;
                for h in 1..=20 {
                    src += math::sin(h as f64 * phase) / h as f64;
                }
                *v += env * (f1.process(src) + 0.6 * f2.process(src));
            }
        }
    }
}

/// Raw samples for one clip: canonical length, peak in `[0.3, 0.9]`.
pub fn synthesize(class: SynthClass, rng: &mut SeededRng) -> Vec<f64> {
    let mut out = vec![0.0; CANONICAL_LEN];
    match class {
        SynthClass::NotCough => environmental(&mut out, rng),
        SynthClass::Cough => {
            let kinds = [SynthClass::Covid19, SynthClass::Pertussis, SynthClass::Bronchitis, SynthClass::Normal];
            let k = kinds[rng.random_range(0..kinds.len())];
            cough(k, &mut out, rng);
        }
        c => cough(c, &mut out, rng),
    }
    background(&mut out, rng);
    let peak = out.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let target = uniform(rng, 0.3, 0.9);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= target / peak);
    }
    out
}
