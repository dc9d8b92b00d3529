//! The three screening networks (cough detector, four-class and binary
//! diagnosis nets) and their label types.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{SpectroImage, IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::nn::{Architecture, LayerSpec, Loss, Network, NnError, Real, Shape};
use crate::rng;

pub const INPUT_SHAPE: Shape = Shape::new(1, IMAGE_HEIGHT, IMAGE_WIDTH);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    Cough,
    NotCough,
}

impl Detection {
    pub const ALL: [Detection; 2] = [Detection::Cough, Detection::NotCough];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Detection::Cough => "cough",
            Detection::NotCough => "not_cough",
        }
    }
}

/// Diagnosis classes in their fixed order; the order is also the SVM
/// tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisClass {
    Covid19,
    Pertussis,
    Bronchitis,
    Normal,
}

impl DiagnosisClass {
    pub const ALL: [DiagnosisClass; 4] =
        [DiagnosisClass::Covid19, DiagnosisClass::Pertussis, DiagnosisClass::Bronchitis, DiagnosisClass::Normal];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiagnosisClass::Covid19 => "covid19",
            DiagnosisClass::Pertussis => "pertussis",
            DiagnosisClass::Bronchitis => "bronchitis",
            DiagnosisClass::Normal => "normal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// COVID-19 against every other class.
    pub fn binary(self) -> BinaryDiagnosis {
        if self == DiagnosisClass::Covid19 {
            BinaryDiagnosis::Covid
        } else {
            BinaryDiagnosis::NotCovid
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryDiagnosis {
    Covid,
    NotCovid,
}

impl BinaryDiagnosis {
    pub const ALL: [BinaryDiagnosis; 2] = [BinaryDiagnosis::Covid, BinaryDiagnosis::NotCovid];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryDiagnosis::Covid => "covid",
            BinaryDiagnosis::NotCovid => "not_covid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionLabel {
    pub value: Detection,
    /// Softmax mass of `value`.
    pub probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisLabel {
    pub value: DiagnosisClass,
    /// Indexed by [`DiagnosisClass::index`]; sums to one.
    pub probabilities: [f64; 4],
}

impl DiagnosisLabel {
    /// A hard label with all mass on `value`.
    pub fn certain(value: DiagnosisClass) -> Self {
        let mut probabilities = [0.0; 4];
        probabilities[value.index()] = 1.0;
        Self { value, probabilities }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryLabel {
    pub value: BinaryDiagnosis,
    pub probability: f64,
}

/// Which screening network a model file or training run refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Detector,
    DtlMc,
    DtlBc,
}

impl NetKind {
    pub fn classes(self) -> usize {
        match self {
            NetKind::Detector | NetKind::DtlBc => 2,
            NetKind::DtlMc => 4,
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            NetKind::Detector | NetKind::DtlBc => Loss::BinaryCrossEntropy,
            NetKind::DtlMc => Loss::CategoricalCrossEntropy,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            NetKind::Detector => "detector.aicn",
            NetKind::DtlMc => "dtl_mc.aicn",
            NetKind::DtlBc => "dtl_bc.aicn",
        }
    }
}

/// The detector layer stack with an `outputs`-wide head:
///
/// ```text
/// 1x240x320 -> maxpool
///   -> [conv16 5x5, relu, conv16 5x5, relu, maxpool, dropout 0.15]
///   -> [conv32 5x5, relu, conv32 5x5, relu, maxpool, dropout 0.15]
///   -> flatten -> dense 256, relu -> dropout 0.30 -> dense outputs -> softmax
/// ```
pub fn screening_architecture(outputs: usize) -> Architecture {
    use LayerSpec::*;
    let layers = vec![
        MaxPool2x2,
        Conv2d { filters: 16, kernel: 5 },
        Relu,
        Conv2d { filters: 16, kernel: 5 },
        Relu,
        MaxPool2x2,
        Dropout { rate: 0.15 },
        Conv2d { filters: 32, kernel: 5 },
        Relu,
        Conv2d { filters: 32, kernel: 5 },
        Relu,
        MaxPool2x2,
        Dropout { rate: 0.15 },
        Flatten,
        Dense { units: 256 },
        Relu,
        Dropout { rate: 0.30 },
        Dense { units: outputs },
        Softmax,
    ];
    Architecture::new(INPUT_SHAPE, layers).expect("screening architecture is valid")
}

/// Freshly initialized cough detector.
pub fn build_detector<S: Real>(seed: u64) -> Network<S> {
    let mut rng = rng::seeded(seed);
    Network::new(screening_architecture(2), &mut rng).expect("valid architecture")
}

fn build_transfer<S: Real>(detector: &Network<S>, outputs: usize, seed: u64) -> Result<Network<S>, NnError> {
    let mut rng = rng::seeded(seed);
    let mut arch = detector.architecture().clone();
    let head = arch.head_index().ok_or(NnError::ArchitectureMismatch)?;
    match arch.layers.get_mut(head) {
        Some(LayerSpec::Dense { units }) => *units = outputs,
        _ => return Err(NnError::ArchitectureMismatch),
    }
    Network::new(arch, &mut rng)?.transfer_from(detector, true)
}

/// Four-class diagnosis net transferred from a trained detector with its
/// first convolution frozen.
pub fn build_dtl_mc<S: Real>(detector: &Network<S>, seed: u64) -> Result<Network<S>, NnError> {
    build_transfer(detector, 4, seed)
}

/// Binary COVID-19 net transferred from a trained detector with its first
/// convolution frozen.
pub fn build_dtl_bc<S: Real>(detector: &Network<S>, seed: u64) -> Result<Network<S>, NnError> {
    build_transfer(detector, 2, seed)
}

fn probabilities<S: Real>(net: &Network<S>, image: &SpectroImage, classes: usize) -> Result<Vec<f64>, NnError> {
    if net.output_len() != classes {
        return Err(NnError::ShapeMismatch { expected: classes, actual: net.output_len() });
    }
    Ok(net.predict_proba(&[image.pixels()], 1)?.remove(0))
}

fn argmax(p: &[f64]) -> usize {
    // first index wins ties
    p.iter().enumerate().fold(0, |best, (i, v)| if *v > p[best] { i } else { best })
}

pub fn detect<S: Real>(net: &Network<S>, image: &SpectroImage) -> Result<DetectionLabel, NnError> {
    let p = probabilities(net, image, 2)?;
    let i = argmax(&p);
    Ok(DetectionLabel { value: Detection::ALL[i], probability: p[i] })
}

pub fn classify_mc<S: Real>(net: &Network<S>, image: &SpectroImage) -> Result<DiagnosisLabel, NnError> {
    let p = probabilities(net, image, 4)?;
    let probabilities = [p[0], p[1], p[2], p[3]];
    Ok(DiagnosisLabel { value: DiagnosisClass::ALL[argmax(&p)], probabilities })
}

pub fn classify_bc<S: Real>(net: &Network<S>, image: &SpectroImage) -> Result<BinaryLabel, NnError> {
    let p = probabilities(net, image, 2)?;
    let i = argmax(&p);
    Ok(BinaryLabel { value: BinaryDiagnosis::ALL[i], probability: p[i] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_shapes() {
        let arch = screening_architecture(2);
        let shapes = arch.shapes().unwrap();
        let flatten = arch.layers.iter().position(|l| *l == LayerSpec::Flatten).unwrap();
        assert_eq!(shapes[flatten + 1].len(), 38_400);
        assert_eq!(shapes[1], Shape::new(1, 120, 160));
        assert_eq!(*shapes.last().unwrap(), Shape::flat(2));
    }

    #[test]
    fn class_round_trips() {
        for c in DiagnosisClass::ALL {
            assert_eq!(DiagnosisClass::from_index(c.index()), Some(c));
            assert_eq!(DiagnosisClass::from_name(c.name()), Some(c));
        }
        assert_eq!(DiagnosisClass::Covid19.binary(), BinaryDiagnosis::Covid);
        assert_eq!(DiagnosisClass::Normal.binary(), BinaryDiagnosis::NotCovid);
    }
}
