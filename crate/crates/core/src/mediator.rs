//! Decision fusion: the unanimity (veto) rule over the three diagnosis
//! classifiers, weighted majority, multi-sample voting, and the closed-form
//! outcome probabilities under classifier independence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{BinaryDiagnosis, BinaryLabel, DiagnosisClass, DiagnosisLabel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MediatorError {
    #[error("all voting weights are zero")]
    AllZeroWeights,
    #[error("weights must be finite and non-negative")]
    InvalidWeight,
    #[error("{labels} labels but {weights} weights")]
    LengthMismatch { labels: usize, weights: usize },
    #[error("at least {needed} samples required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("not-a-cough results must be removed before voting")]
    NotACoughInVote,
    #[error("probability input {0} is outside [0, 1]")]
    OutOfRangeInput(f64),
}

/// What the screening app reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppResult {
    CovidLikely,
    CovidNotLikely,
    Inconclusive,
    /// Only ever produced by the detector stage.
    NotACough,
}

impl AppResult {
    pub fn name(self) -> &'static str {
        match self {
            AppResult::CovidLikely => "covid_likely",
            AppResult::CovidNotLikely => "covid_not_likely",
            AppResult::Inconclusive => "inconclusive",
            AppResult::NotACough => "not_a_cough",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [AppResult::CovidLikely, AppResult::CovidNotLikely, AppResult::Inconclusive, AppResult::NotACough]
            .into_iter()
            .find(|r| r.name() == name)
    }
}

impl From<BinaryDiagnosis> for AppResult {
    fn from(b: BinaryDiagnosis) -> Self {
        match b {
            BinaryDiagnosis::Covid => AppResult::CovidLikely,
            BinaryDiagnosis::NotCovid => AppResult::CovidNotLikely,
        }
    }
}

/// `k1` from the multi-class CNN, `k2` from the SVM, `k3` from the binary CNN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutputs {
    pub k1: DiagnosisLabel,
    pub k2: DiagnosisLabel,
    pub k3: BinaryLabel,
}

/// Veto rule: a definitive answer only when all three classifiers agree
/// after collapsing the multi-class labels to COVID-19 vs. rest.
pub fn mediate(outputs: &ClassifierOutputs) -> AppResult {
    mediate_labels(outputs.k1.value, outputs.k2.value, outputs.k3.value)
}

pub fn mediate_labels(k1: DiagnosisClass, k2: DiagnosisClass, k3: BinaryDiagnosis) -> AppResult {
    let (a, b) = (k1.binary(), k2.binary());
    if a == b && b == k3 {
        k3.into()
    } else {
        AppResult::Inconclusive
    }
}

/// Weighted vote between COVID-19 and not; an exact tie is inconclusive.
pub fn mediate_majority(labels: &[BinaryDiagnosis], weights: &[f64]) -> Result<AppResult, MediatorError> {
    if labels.len() != weights.len() {
        return Err(MediatorError::LengthMismatch { labels: labels.len(), weights: weights.len() });
    }
    if labels.is_empty() {
        return Err(MediatorError::TooFewSamples { needed: 1, got: 0 });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(MediatorError::InvalidWeight);
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(MediatorError::AllZeroWeights);
    }
    let (mut covid, mut not_covid) = (0.0, 0.0);
    for (l, w) in labels.iter().zip(weights) {
        match l {
            BinaryDiagnosis::Covid => covid += w,
            BinaryDiagnosis::NotCovid => not_covid += w,
        }
    }
    Ok(if covid > not_covid {
        AppResult::CovidLikely
    } else if not_covid > covid {
        AppResult::CovidNotLikely
    } else {
        AppResult::Inconclusive
    })
}

pub const MIN_SESSION_SAMPLES: usize = 3;

/// Strict majority over per-sample results from one subject; anything
/// short of a strict majority is inconclusive.
pub fn multi_sample_vote(results: &[AppResult]) -> Result<AppResult, MediatorError> {
    if results.len() < MIN_SESSION_SAMPLES {
        return Err(MediatorError::TooFewSamples { needed: MIN_SESSION_SAMPLES, got: results.len() });
    }
    if results.contains(&AppResult::NotACough) {
        return Err(MediatorError::NotACoughInVote);
    }
    for candidate in [AppResult::CovidLikely, AppResult::CovidNotLikely, AppResult::Inconclusive] {
        let count = results.iter().filter(|r| **r == candidate).count();
        if 2 * count > results.len() {
            return Ok(candidate);
        }
    }
    Ok(AppResult::Inconclusive)
}

/// Sensitivity and specificity of one classifier for the COVID-19 class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRates {
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Outcome probabilities of the veto rule under independence, each scaled
/// by its dependence coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediatorReport {
    /// P(kf = C | C), scaled by d1.
    pub p_c_given_c: f64,
    /// P(kf = C | C'), scaled by d2.
    pub p_c_given_cp: f64,
    /// P(kf = C' | C'), scaled by d3.
    pub p_cp_given_cp: f64,
    /// P(kf = C' | C), scaled by d4.
    pub p_cp_given_c: f64,
    /// P(kf = I | C), scaled by d5.
    pub p_i_given_c: f64,
    /// P(kf = I | C'), scaled by d6.
    pub p_i_given_cp: f64,
    /// P(I | C) + P(I | C'): a sum of two conditionals, not a marginal.
    pub conditional_sum: f64,
    pub d: [f64; 6],
}

impl MediatorReport {
    /// `(event description, value, coefficient index)` rows in table order.
    pub fn rows(&self) -> [(&'static str, f64, usize); 6] {
        [
            ("App reports `COVID-19 likely' when the subject has COVID-19", self.p_c_given_c, 1),
            ("App reports `COVID-19 likely' when the subject does not have COVID-19", self.p_c_given_cp, 2),
            ("App reports `COVID-19 not likely' when the subject does not have COVID-19", self.p_cp_given_cp, 3),
            ("App reports `COVID-19 not likely' when the subject has COVID-19", self.p_cp_given_c, 4),
            ("App reports `test inconclusive' when the subject has COVID-19", self.p_i_given_c, 5),
            ("App reports `test inconclusive' when the subject does not have COVID-19", self.p_i_given_cp, 6),
        ]
    }
}

pub fn independence_analysis(rates: &[ClassifierRates; 3], d: [f64; 6]) -> Result<MediatorReport, MediatorError> {
    for r in rates {
        for v in [r.sensitivity, r.specificity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MediatorError::OutOfRangeInput(v));
            }
        }
    }
    let prod = |f: &dyn Fn(&ClassifierRates) -> f64| rates.iter().map(f).product::<f64>();
    let cc = prod(&|r| r.sensitivity);
    let c_cp = prod(&|r| 1.0 - r.specificity);
    let cp_cp = prod(&|r| r.specificity);
    let cp_c = prod(&|r| 1.0 - r.sensitivity);
    let i_c = 1.0 - cc - cp_c;
    let i_cp = 1.0 - c_cp - cp_cp;
    let report = MediatorReport {
        p_c_given_c: cc * d[0],
        p_c_given_cp: c_cp * d[1],
        p_cp_given_cp: cp_cp * d[2],
        p_cp_given_c: cp_c * d[3],
        p_i_given_c: i_c * d[4],
        p_i_given_cp: i_cp * d[5],
        conditional_sum: i_c * d[4] + i_cp * d[5],
        d,
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryDiagnosis::*;

    #[test]
    fn veto_examples() {
        use DiagnosisClass::*;
        assert_eq!(mediate_labels(Covid19, Covid19, Covid), AppResult::CovidLikely);
        assert_eq!(mediate_labels(Pertussis, Bronchitis, NotCovid), AppResult::CovidNotLikely);
        assert_eq!(mediate_labels(Covid19, Normal, Covid), AppResult::Inconclusive);
    }

    #[test]
    fn majority_examples() {
        assert_eq!(mediate_majority(&[Covid, Covid, NotCovid], &[1.0; 3]).unwrap(), AppResult::CovidLikely);
        assert_eq!(mediate_majority(&[Covid, NotCovid], &[1.0; 2]).unwrap(), AppResult::Inconclusive);
        assert_eq!(mediate_majority(&[Covid, NotCovid, NotCovid], &[5.0, 1.0, 1.0]).unwrap(), AppResult::CovidLikely);
        assert_eq!(mediate_majority(&[Covid], &[0.0]), Err(MediatorError::AllZeroWeights));
    }

    #[test]
    fn session_vote_examples() {
        use AppResult::*;
        assert_eq!(multi_sample_vote(&[CovidLikely, CovidLikely, Inconclusive]).unwrap(), CovidLikely);
        assert_eq!(multi_sample_vote(&[CovidLikely, CovidNotLikely, Inconclusive]).unwrap(), Inconclusive);
        assert_eq!(multi_sample_vote(&[CovidNotLikely; 3]).unwrap(), CovidNotLikely);
        assert!(matches!(multi_sample_vote(&[CovidLikely; 2]), Err(MediatorError::TooFewSamples { .. })));
        assert_eq!(multi_sample_vote(&[CovidLikely, NotACough, CovidLikely]), Err(MediatorError::NotACoughInVote));
    }

    #[test]
    fn degenerate_rates() {
        let perfect = [ClassifierRates { sensitivity: 1.0, specificity: 1.0 }; 3];
        let r = independence_analysis(&perfect, [1.0; 6]).unwrap();
        assert_eq!(
            (r.p_c_given_c, r.p_c_given_cp, r.p_cp_given_cp, r.p_cp_given_c, r.p_i_given_c, r.p_i_given_cp),
            (1.0, 0.0, 1.0, 0.0, 0.0, 0.0)
        );
        let coin = [ClassifierRates { sensitivity: 0.5, specificity: 0.5 }; 3];
        let r = independence_analysis(&coin, [1.0; 6]).unwrap();
        for v in [r.p_c_given_c, r.p_c_given_cp, r.p_cp_given_cp, r.p_cp_given_c] {
            assert_eq!(v, 0.125);
        }
        assert_eq!((r.p_i_given_c, r.p_i_given_cp), (0.75, 0.75));
        let bad = [ClassifierRates { sensitivity: 1.2, specificity: 0.5 }; 3];
        assert!(independence_analysis(&bad, [1.0; 6]).is_err());
    }
}
