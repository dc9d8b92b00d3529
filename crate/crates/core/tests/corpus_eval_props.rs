//! Fold assignment, balancing and metric invariants.

use std::collections::BTreeSet;
use std::convert::Infallible;

use coughscreen_core::corpus::{balance_indices, kfold_indices, train_indices};
use coughscreen_core::evaluation::{accuracy_cdf, cross_validate, metrics, ConfusionMatrix, FoldOutcome, Pipeline};
use proptest::prelude::*;

fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, usize)> {
    (2usize..5).prop_flat_map(|classes| {
        (prop::collection::vec(0..classes, 0..40), Just(classes)).prop_map(|(extra, classes)| {
            // every class gets at least five members so k <= 5 is always valid
            let mut labels: Vec<usize> = (0..classes).flat_map(|c| [c; 5]).collect();
            labels.extend(extra);
            (labels, classes)
        })
    })
}

struct Echo<'a> {
    labels: &'a [usize],
    seen: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Pipeline for Echo<'_> {
    type Error = Infallible;

    fn fit_predict(&mut self, _fold: usize, train: &[usize], test: &[usize]) -> Result<FoldOutcome, Infallible> {
        self.seen.push((train.to_vec(), test.to_vec()));
        Ok(FoldOutcome { predictions: test.iter().map(|&i| self.labels[i]).collect(), loss: None })
    }
}

proptest! {
    #[test]
    fn folds_partition_and_stratify((labels, classes) in labels_strategy(), k in 2usize..6, seed in any::<u64>()) {
        let folds = kfold_indices(&labels, classes, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for c in 0..classes {
            let per: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == c).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1, "class {} spread {:?}", c, per);
        }
        for f in 0..k {
            let train: BTreeSet<usize> = train_indices(&folds, f).into_iter().collect();
            prop_assert!(folds[f].iter().all(|i| !train.contains(i)));
            prop_assert_eq!(train.len() + folds[f].len(), labels.len());
        }
        prop_assert_eq!(kfold_indices(&labels, classes, k, seed).unwrap(), folds);
    }

    #[test]
    fn balancing_truncates_to_the_minority((labels, classes) in labels_strategy(), seed in any::<u64>()) {
        let chosen = balance_indices(&labels, classes, seed).unwrap();
        let min = (0..classes).map(|c| labels.iter().filter(|&&l| l == c).count()).min().unwrap();
        prop_assert_eq!(chosen.len(), min * classes);
        for c in 0..classes {
            prop_assert_eq!(chosen.iter().filter(|&&i| labels[i] == c).count(), min);
        }
        prop_assert!(chosen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn metrics_match_their_definitions(truths in prop::collection::vec(0usize..3, 1..60), preds_seed in prop::collection::vec(0usize..3, 60)) {
        let preds = &preds_seed[..truths.len()];
        let cm = ConfusionMatrix::new(&truths, preds, &["a", "b", "c"]).unwrap();
        prop_assert_eq!(cm.total() as usize, truths.len());
        let correct = truths.iter().zip(preds).filter(|(t, p)| t == p).count();
        prop_assert!((cm.accuracy() - correct as f64 / truths.len() as f64).abs() < 1e-12);
        for pos in 0..3 {
            let m = metrics(&cm, pos).unwrap();
            let tp = truths.iter().zip(preds).filter(|(t, p)| **t == pos && **p == pos).count() as f64;
            let fp = truths.iter().zip(preds).filter(|(t, p)| **t != pos && **p == pos).count() as f64;
            let fn_ = truths.iter().zip(preds).filter(|(t, p)| **t == pos && **p != pos).count() as f64;
            let tn = truths.len() as f64 - tp - fp - fn_;
            for v in [m.precision, m.sensitivity, m.specificity, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if tp + fn_ > 0.0 { prop_assert!((m.sensitivity - tp / (tp + fn_)).abs() < 1e-12); }
            if tn + fp > 0.0 { prop_assert!((m.specificity - tn / (tn + fp)).abs() < 1e-12); }
            if tp + fp > 0.0 { prop_assert!((m.precision - tp / (tp + fp)).abs() < 1e-12); }
        }
        for row in cm.normalized() {
            let s: f64 = row.iter().sum();
            prop_assert!(s == 0.0 || (s - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one(acc in prop::collection::vec(0.0..=1.0_f64, 1..20)) {
        let cdf = accuracy_cdf(&acc);
        prop_assert_eq!(cdf.len(), acc.len());
        prop_assert!(cdf.windows(2).all(|w| w[0].accuracy <= w[1].accuracy && w[0].cumulative < w[1].cumulative));
        prop_assert!((cdf.last().unwrap().cumulative - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_validation_visits_every_sample_once((labels, classes) in labels_strategy(), seed in any::<u64>()) {
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut echo = Echo { labels: &labels, seen: Vec::new() };
        let report = cross_validate(&mut echo, &labels, &refs, 5, seed).unwrap();
        prop_assert_eq!(report.folds.len(), 5);
        prop_assert!((report.mean_accuracy() - 1.0).abs() < 1e-12);
        let pooled = report.pooled().unwrap();
        prop_assert_eq!(pooled.total() as usize, labels.len());
        prop_assert_eq!(pooled.trace() as usize, labels.len());
        for (train, test) in &echo.seen {
            prop_assert_eq!(train.len() + test.len(), labels.len());
        }
        for (i, row) in report.mean_normalized.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 100.0 } else { 0.0 };
                prop_assert!((v - want).abs() < 1e-9);
            }
        }
    }
}
