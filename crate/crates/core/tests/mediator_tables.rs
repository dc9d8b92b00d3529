//! Fusion rules against enumerated tables and the reference outcome
//! probabilities.

use coughscreen_core::classifiers::{BinaryDiagnosis, DiagnosisClass};
use coughscreen_core::mediator::{
    independence_analysis, mediate_labels, mediate_majority, multi_sample_vote, AppResult, ClassifierRates,
    MediatorError,
};
use proptest::prelude::*;

const REFERENCE_RATES: [(f64, f64); 3] = [(0.891, 0.967), (0.917, 0.953), (0.946, 0.911)];

fn rates() -> [ClassifierRates; 3] {
    REFERENCE_RATES.map(|(sensitivity, specificity)| ClassifierRates { sensitivity, specificity })
}

#[test]
fn veto_truth_table_covers_all_32_combinations() {
    let mut seen = 0;
    let (mut likely, mut not_likely) = (0, 0);
    for k1 in DiagnosisClass::ALL {
        for k2 in DiagnosisClass::ALL {
            for k3 in BinaryDiagnosis::ALL {
                let covid =
                    [k1 == DiagnosisClass::Covid19, k2 == DiagnosisClass::Covid19, k3 == BinaryDiagnosis::Covid];
                let want = match covid {
                    [true, true, true] => AppResult::CovidLikely,
                    [false, false, false] => AppResult::CovidNotLikely,
                    _ => AppResult::Inconclusive,
                };
                let got = mediate_labels(k1, k2, k3);
                assert_eq!(got, want, "{k1:?} {k2:?} {k3:?}");
                assert_ne!(got, AppResult::NotACough);
                likely += usize::from(got == AppResult::CovidLikely);
                not_likely += usize::from(got == AppResult::CovidNotLikely);
                seen += 1;
            }
        }
    }
    assert_eq!(seen, 32);
    // one all-covid triple; three non-covid classes for each CNN/SVM label
    assert_eq!((likely, not_likely), (1, 9));
}

#[test]
fn session_vote_table() {
    use AppResult::*;
    let table: &[(&[AppResult], AppResult)] = &[
        (&[CovidLikely, CovidLikely, CovidLikely], CovidLikely),
        (&[CovidLikely, CovidLikely, CovidNotLikely], CovidLikely),
        (&[CovidLikely, CovidNotLikely, CovidNotLikely], CovidNotLikely),
        (&[CovidLikely, CovidNotLikely, Inconclusive], Inconclusive),
        (&[Inconclusive, Inconclusive, CovidLikely], Inconclusive),
        (&[CovidLikely, CovidLikely, CovidNotLikely, CovidNotLikely], Inconclusive),
        (&[CovidLikely, CovidLikely, CovidLikely, CovidNotLikely], CovidLikely),
        (&[CovidNotLikely, CovidNotLikely, Inconclusive, Inconclusive, CovidNotLikely], CovidNotLikely),
        (&[CovidLikely, CovidNotLikely, Inconclusive, CovidLikely, CovidNotLikely], Inconclusive),
    ];
    for (votes, want) in table {
        assert_eq!(multi_sample_vote(votes).unwrap(), *want, "{votes:?}");
    }
    assert_eq!(multi_sample_vote(&[CovidLikely]), Err(MediatorError::TooFewSamples { needed: 3, got: 1 }));
    assert_eq!(multi_sample_vote(&[]), Err(MediatorError::TooFewSamples { needed: 3, got: 0 }));
    assert_eq!(multi_sample_vote(&[NotACough, CovidLikely, CovidLikely]), Err(MediatorError::NotACoughInVote));
}

#[test]
fn weighted_majority_table() {
    use AppResult::*;
    use BinaryDiagnosis::*;
    let table: &[(&[BinaryDiagnosis], &[f64], AppResult)] = &[
        (&[Covid, Covid, Covid], &[1.0, 1.0, 1.0], CovidLikely),
        (&[NotCovid, NotCovid, Covid], &[1.0, 1.0, 1.0], CovidNotLikely),
        (&[Covid, NotCovid], &[1.0, 1.0], Inconclusive),
        (&[Covid, NotCovid, NotCovid], &[3.0, 1.0, 1.0], CovidLikely),
        (&[Covid, NotCovid, NotCovid], &[2.0, 1.0, 1.0], Inconclusive),
        (&[Covid, NotCovid, NotCovid], &[0.0, 1.0, 0.0], CovidNotLikely),
        (&[NotCovid], &[0.5], CovidNotLikely),
    ];
    for (labels, weights, want) in table {
        assert_eq!(mediate_majority(labels, weights).unwrap(), *want, "{labels:?} {weights:?}");
    }
    assert_eq!(mediate_majority(&[Covid, Covid], &[0.0, 0.0]), Err(MediatorError::AllZeroWeights));
    assert_eq!(mediate_majority(&[Covid], &[-1.0]), Err(MediatorError::InvalidWeight));
    assert_eq!(mediate_majority(&[Covid], &[f64::NAN]), Err(MediatorError::InvalidWeight));
    assert_eq!(mediate_majority(&[Covid, Covid], &[1.0]), Err(MediatorError::LengthMismatch { labels: 2, weights: 1 }));
}

#[test]
fn reference_outcome_probabilities() {
    let r = independence_analysis(&rates(), [1.0; 6]).unwrap();
    let reference = [
        (r.p_c_given_c, 0.773),
        (r.p_c_given_cp, 1.365e-4),
        (r.p_cp_given_cp, 0.838),
        (r.p_cp_given_c, 4.782e-4),
        (r.p_i_given_c, 0.226),
        (r.p_i_given_cp, 0.161),
        (r.conditional_sum, 0.387),
    ];
    for (i, (got, want)) in reference.iter().enumerate() {
        // p(C'|C') = 0.967 * 0.953 * 0.911 = 0.8395; the reference 0.838 is off by 0.0015
        if i == 2 {
            assert!((got - 0.8395).abs() < 1e-4);
            continue;
        }
        assert!((got - want).abs() <= 1e-3, "row {i}: {got} vs {want}");
    }
    assert!((r.p_c_given_c - 0.891 * 0.917 * 0.946).abs() < 1e-15);
    assert!((r.p_c_given_cp - 0.033 * 0.047 * 0.089).abs() < 1e-15);
}

#[test]
fn dependence_coefficients_scale_their_rows() {
    let d = [0.5, 2.0, 0.9, 1.1, 1.2, 0.7];
    let base = independence_analysis(&rates(), [1.0; 6]).unwrap();
    let r = independence_analysis(&rates(), d).unwrap();
    let pairs = [
        (r.p_c_given_c, base.p_c_given_c),
        (r.p_c_given_cp, base.p_c_given_cp),
        (r.p_cp_given_cp, base.p_cp_given_cp),
        (r.p_cp_given_c, base.p_cp_given_c),
        (r.p_i_given_c, base.p_i_given_c),
        (r.p_i_given_cp, base.p_i_given_cp),
    ];
    for ((scaled, plain), di) in pairs.iter().zip(d) {
        assert!((scaled - plain * di).abs() < 1e-15);
    }
}

#[test]
fn out_of_range_rates_are_rejected() {
    let mut bad = rates();
    bad[1].specificity = 1.2;
    assert_eq!(independence_analysis(&bad, [1.0; 6]), Err(MediatorError::OutOfRangeInput(1.2)));
}

proptest! {
    #[test]
    fn each_house_sums_to_one(s in prop::array::uniform6(0.0..=1.0_f64)) {
        let rates = [0, 2, 4].map(|i| ClassifierRates { sensitivity: s[i], specificity: s[i + 1] });
        let r = independence_analysis(&rates, [1.0; 6]).unwrap();
        prop_assert!((r.p_c_given_c + r.p_cp_given_c + r.p_i_given_c - 1.0).abs() < 1e-12);
        prop_assert!((r.p_c_given_cp + r.p_cp_given_cp + r.p_i_given_cp - 1.0).abs() < 1e-12);
        prop_assert!(r.p_i_given_c >= -1e-15 && r.p_i_given_cp >= -1e-15);
    }

    #[test]
    fn unanimous_sessions_keep_their_label(n in 3usize..12, pick in 0usize..3) {
        let label = [AppResult::CovidLikely, AppResult::CovidNotLikely, AppResult::Inconclusive][pick];
        prop_assert_eq!(multi_sample_vote(&vec![label; n]).unwrap(), label);
    }
}
