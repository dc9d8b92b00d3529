//! Small untrained models and clips shared by the integration tests.

#![allow(dead_code)]

use coughscreen::engine::{ModelVersions, Models};
use coughscreen::model_io::{encode_network, encode_svm, version_tag};
use coughscreen::pipeline::Preprocessor;
use coughscreen::wav::encode_wav;
use coughscreen::Engine;
use coughscreen_core::classifiers::{build_detector, build_dtl_bc, build_dtl_mc, NetKind};
use coughscreen_core::corpus::{synth_clip, SynthClass};
use coughscreen_core::nn::Network;
use coughscreen_core::svm::{fit, Kernel};
use coughscreen_core::AudioClip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How the toy detector treats every input.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    /// Random head: decisions vary from clip to clip.
    Random,
    /// Head biased so every clip is rejected.
    RejectAll,
    /// Head biased so every clip is accepted.
    AcceptAll,
}

fn randomize_head(net: &mut Network<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    let head = net.architecture().head_index().unwrap();
    let p = net.layer_params_mut(head).unwrap();
    p.weights.iter_mut().for_each(|w| *w = rng.random_range(-scale..scale));
}

pub fn toy_models(detector: Detector, seed: u64) -> Models {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut det = build_detector::<f64>(seed);
    randomize_head(&mut det, &mut rng, 0.05);
    let head = det.architecture().head_index().unwrap();
    match detector {
        Detector::Random => {}
        Detector::RejectAll => det.layer_params_mut(head).unwrap().bias = vec![-50.0, 50.0],
        Detector::AcceptAll => det.layer_params_mut(head).unwrap().bias = vec![50.0, -50.0],
    }
    let mut mc = build_dtl_mc(&det, seed + 1).unwrap();
    randomize_head(&mut mc, &mut rng, 0.05);
    let mut bc = build_dtl_bc(&det, seed + 2).unwrap();
    randomize_head(&mut bc, &mut rng, 0.05);

    let pre = Preprocessor::default();
    let classes = [SynthClass::Covid19, SynthClass::Pertussis, SynthClass::Bronchitis, SynthClass::Normal];
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        for i in 0..3 {
            let clip = synth_clip(*class, seed, i);
            features.push(pre.features(&clip).unwrap().values().to_vec());
            labels.push(label);
        }
    }
    let svm = fit(&features, &labels, Kernel::Rbf { gamma: 1.0 / 26.0 }, 1.0, 1e-3, 100_000).unwrap();

    let versions = ModelVersions {
        detector: version_tag(&encode_network(&det, Some(NetKind::Detector))),
        dtl_mc: version_tag(&encode_network(&mc, Some(NetKind::DtlMc))),
        dtl_bc: version_tag(&encode_network(&bc, Some(NetKind::DtlBc))),
        cml_mc: version_tag(&encode_svm(&svm)),
    };
    Models { detector: det.cast(), dtl_mc: mc.cast(), dtl_bc: bc.cast(), cml_mc: svm, versions }
}

pub fn toy_engine(detector: Detector, seed: u64) -> Engine {
    Engine::new(toy_models(detector, seed), Preprocessor::default())
}

/// Canonical synthetic clips cycling through every generator class.
pub fn mixed_clips(n: usize, seed: u64) -> Vec<AudioClip> {
    (0..n).map(|i| synth_clip(SynthClass::ALL[i % SynthClass::ALL.len()], seed, i as u64)).collect()
}

pub fn wav_bytes(clip: &AudioClip) -> Vec<u8> {
    encode_wav(clip)
}
