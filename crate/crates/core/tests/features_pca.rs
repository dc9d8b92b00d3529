//! PCA and feature vectors against an nalgebra eigendecomposition.

use coughscreen_core::dsp::{mfcc, MfccConfig, MfccMatrix};
use coughscreen_core::features::{feature_vector, pca_fit, ComponentWeighting, FeatureConfig};
use coughscreen_core::linalg::Matrix;
use coughscreen_core::AudioClip;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frames(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    // correlated columns so the spectrum is well separated
    let mix: Vec<f64> = (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Matrix::zeros(m, n);
    for c in 0..n {
        let z: Vec<f64> = (0..m).map(|i| rng.random_range(-1.0..1.0) * (m - i) as f64).collect();
        for r in 0..m {
            out.set(r, c, (0..m).map(|k| mix[r * m + k] * z[k]).sum::<f64>() + 3.0);
        }
    }
    out
}

fn oracle(frames: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (m, n) = (frames.rows(), frames.cols());
    let x = DMatrix::from_fn(m, n, |r, c| frames.get(r, c));
    let mean = x.column_mean();
    let centered = DMatrix::from_fn(m, n, |r, c| x[(r, c)] - mean[r]);
    let cov = &centered * centered.transpose() / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, vectors)
}

#[test]
fn components_match_nalgebra_up_to_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let frames = random_frames(&mut rng, 13, 255);
        let model = pca_fit(&frames, 5).unwrap();
        let (values, vectors) = oracle(&frames);
        for k in 0..5 {
            assert!((model.explained_variance[k] - values[k]).abs() <= 1e-8 * values[0]);
            let dot: f64 = model.components[k].iter().zip(&vectors[k]).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-8, "component {k}: |dot| = {}", dot.abs());
            let pivot = model.components[k].iter().fold(0.0_f64, |b, x| if x.abs() > b.abs() { *x } else { b });
            assert!(pivot > 0.0);
        }
    }
}

#[test]
fn feature_vector_has_length_26_for_13_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s: Vec<f64> = (0..132_300).map(|_| rng.random_range(-0.5..0.5)).collect();
    let clip = AudioClip::new(s, 44_100).unwrap();
    let m = mfcc(&clip, &MfccConfig::default()).unwrap();
    let fv = feature_vector(&m, &FeatureConfig::default()).unwrap();
    assert_eq!(fv.len(), 26);
    assert!(fv.values().iter().all(|v| v.is_finite()));
    assert!(fv.pca_half().iter().all(|v| *v >= 0.0));
}

#[test]
fn single_component_magnitude_is_scaled_absolute_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let frames = random_frames(&mut rng, 6, 40);
    let model = pca_fit(&frames, 1).unwrap();
    let fv = feature_vector(
        &MfccMatrix::new(frames),
        &FeatureConfig { pca_components: 1, weighting: ComponentWeighting::Variance },
    )
    .unwrap();
    let s = model.explained_variance[0].sqrt();
    for (got, u) in fv.pca_half().iter().zip(&model.components[0]) {
        assert!((got - s * u.abs()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn components_are_orthonormal(seed in any::<u64>(), n in 14usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = random_frames(&mut rng, 13, n);
        let model = pca_fit(&frames, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = model.components[i].iter().zip(&model.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - want).abs() < 1e-9);
            }
        }
        prop_assert!(model.explained_variance.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    }

    #[test]
    fn pca_ignores_a_constant_shift(seed in any::<u64>(), shift in -50.0..50.0_f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = random_frames(&mut rng, 8, 30);
        let shifted = frames.map(|v| v + shift);
        let a = pca_fit(&frames, 3).unwrap();
        let b = pca_fit(&shifted, 3).unwrap();
        for (x, y) in a.explained_variance.iter().zip(&b.explained_variance) {
            prop_assert!((x - y).abs() <= 1e-7 * a.explained_variance[0]);
        }
    }
}
