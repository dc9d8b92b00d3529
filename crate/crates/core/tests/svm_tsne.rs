//! SVM and t-SNE checks against independently computed conditions.

use coughscreen_core::analysis::{joint_probabilities, kl_divergence, tsne, TsneConfig, PERPLEXITY_TOLERANCE};
use coughscreen_core::linalg::Matrix;
use coughscreen_core::svm::{fit, solve_binary, train_svm, Kernel, KernelKind, SvmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(centres: &[Vec<f64>], per: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per {
            x.push(centre.iter().map(|m| m + noise.sample(&mut rng)).collect());
            y.push(c);
        }
    }
    (x, y)
}

/// Maximal violating pair gap: max over I_up of -y g minus min over I_low.
fn kkt_gap(k: &Matrix, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let grad: Vec<f64> =
        (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k.get(i, j) * alpha[j]).sum::<f64>() - 1.0).collect();
    let eps = 1e-12;
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for i in 0..n {
        let v = -y[i] * grad[i];
        let in_up = (y[i] > 0.0 && alpha[i] < c - eps) || (y[i] < 0.0 && alpha[i] > eps);
        let in_low = (y[i] > 0.0 && alpha[i] > eps) || (y[i] < 0.0 && alpha[i] < c - eps);
        if in_up {
            up = up.max(v);
        }
        if in_low {
            low = low.min(v);
        }
    }
    up - low
}

#[test]
fn linearly_separable_data_is_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = [1.5, -2.0, 0.5];
    let mut x = Vec::new();
    let mut y = Vec::new();
    while x.len() < 120 {
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s: f64 = p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.3;
        if s.abs() > 0.5 {
            y.push(usize::from(s > 0.0));
            x.push(p);
        }
    }
    let model = fit(&x, &y, Kernel::Linear, 100.0, 1e-3, 100_000).unwrap();
    let correct = x.iter().zip(&y).filter(|(p, t)| model.predict_index(p).unwrap() == **t).count();
    assert_eq!(correct, x.len());
}

#[test]
fn four_gaussian_blobs_generalize() {
    let centres = vec![vec![0.0, 0.0, 0.0], vec![4.0, 0.0, 1.0], vec![0.0, 4.0, -1.0], vec![4.0, 4.0, 2.0]];
    let (x, y) = blobs(&centres, 60, 0.9, 2);
    let (xt, yt) = blobs(&centres, 50, 0.9, 3);
    let (model, report) = train_svm(&x, &y, &SvmConfig { seed: 4, ..SvmConfig::default() }).unwrap();
    assert!(report.max_kkt_residual < 1e-3);
    assert!(!report.any_hit_max_iter);
    let correct = xt.iter().zip(&yt).filter(|(p, t)| model.predict_index(p).unwrap() == **t).count();
    let acc = correct as f64 / xt.len() as f64;
    assert!(acc > 0.95, "held-out accuracy {acc}");
}

#[test]
fn smo_solution_satisfies_kkt_conditions() {
    let (x, labels) = blobs(&[vec![0.0, 0.0], vec![1.5, 1.0]], 40, 1.0, 5);
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    for (kernel, c) in [(Kernel::Linear, 1.0), (Kernel::Rbf { gamma: 0.5 }, 10.0), (Kernel::Rbf { gamma: 2.0 }, 0.1)] {
        let k = Matrix::from_fn(x.len(), x.len(), |i, j| kernel.eval(&x[i], &x[j]));
        let sol = solve_binary(&k, &y, c, 1e-3, 100_000);
        assert!(!sol.hit_max_iter);
        assert!(sol.alpha.iter().all(|a| (-1e-12..=c + 1e-12).contains(a)));
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, t)| a * t).sum();
        assert!(balance.abs() < 1e-9);
        let gap = kkt_gap(&k, &y, &sol.alpha, c);
        assert!(gap < 1e-3, "{kernel:?}: gap {gap}");
    }
}

#[test]
fn rbf_solves_xor() {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let p = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if p[0] * p[1] != 0.0 {
            y.push(usize::from(p[0] * p[1] > 0.0));
            x.push(p);
        }
    }
    let model = fit(&x, &y, Kernel::Rbf { gamma: 2.0 }, 100.0, 1e-3, 100_000).unwrap();
    let probes = [([0.6, 0.6], 1), ([-0.6, -0.6], 1), ([0.6, -0.6], 0), ([-0.6, 0.6], 0)];
    for (p, want) in probes {
        assert_eq!(model.predict_index(&p).unwrap(), want, "{p:?}");
    }
    let linear = fit(&x, &y, Kernel::Linear, 1.0, 1e-3, 100_000).unwrap();
    let lin_correct = x.iter().zip(&y).filter(|(p, t)| linear.predict_index(p).unwrap() == **t).count();
    assert!((lin_correct as f64 / x.len() as f64) < 0.8);
}

#[test]
fn training_is_deterministic_per_seed() {
    let centres = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]];
    let (x, y) = blobs(&centres, 30, 1.0, 7);
    let cfg = SvmConfig { kernel: KernelKind::Rbf, seed: 11, ..SvmConfig::default() };
    let a = train_svm(&x, &y, &cfg).unwrap();
    let b = train_svm(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn c_grid_ties_go_to_the_smaller_c() {
    let (x, y) = blobs(&[vec![0.0, 0.0], vec![20.0, 20.0]], 20, 0.5, 8);
    let (_, report) = train_svm(&x, &y, &SvmConfig::default()).unwrap();
    assert!(report.grid.iter().all(|g| g.cv_accuracy == 1.0));
    assert_eq!(report.selected_c, 0.1);
}

fn two_blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let a = vec![0.0; 10];
    let mut b = vec![0.0; 10];
    b[0] = 12.0;
    b[3] = -6.0;
    blobs(&[a, b], 40, 1.0, seed)
}

#[test]
fn joint_probabilities_are_symmetric_and_normalized() {
    let (x, _) = two_blobs(9);
    let aff = joint_probabilities(&x, 20.0).unwrap();
    let n = aff.n;
    let total: f64 = aff.p.iter().sum();
    assert!((total - 1.0).abs() < 1e-8);
    for i in 0..n {
        assert_eq!(aff.p[i * n + i], 0.0);
        for j in 0..n {
            assert!((aff.p[i * n + j] - aff.p[j * n + i]).abs() < 1e-8);
        }
    }
    assert!(aff.achieved_perplexity.iter().all(|p| (p - 20.0).abs() < PERPLEXITY_TOLERANCE));
}

#[test]
fn bandwidth_search_hits_the_target_perplexity() {
    let (x, _) = two_blobs(10);
    for target in [5.0, 15.0, 25.0] {
        let aff = joint_probabilities(&x, target).unwrap();
        for (i, got) in aff.achieved_perplexity.iter().enumerate() {
            assert!((got - target).abs() < PERPLEXITY_TOLERANCE, "point {i}: {got}");
        }
    }
}

#[test]
fn embedding_separates_two_blobs_and_kl_settles() {
    let (x, labels) = two_blobs(12);
    let cfg = TsneConfig { perplexity: 15.0, iterations: 600, seed: 1, ..TsneConfig::default() };
    let e = tsne(&x, &cfg).unwrap();
    let tail = &e.kl_history[e.kl_history.len() - 100..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0] + 1e-6), "KL rose in the final iterations");
    let aff = joint_probabilities(&x, 15.0).unwrap();
    // the optimizer floors P at 1e-12, which moves KL by well under 1e-6
    let kl = kl_divergence(&aff.p, &e.points);
    assert!((kl - e.kl_history.last().unwrap()).abs() < 1e-6, "{kl} vs {:?}", e.kl_history.last());

    let centroid = |c: usize| {
        let pts: Vec<&[f64; 2]> = e.points.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
        let n = pts.len() as f64;
        [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
    };
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let (c0, c1) = (centroid(0), centroid(1));
    let intra: f64 = e.points.iter().zip(&labels).map(|(p, l)| dist(p, if *l == 0 { &c0 } else { &c1 })).sum::<f64>()
        / e.points.len() as f64;
    assert!(dist(&c0, &c1) > 3.0 * intra, "centroids {} apart, mean spread {intra}", dist(&c0, &c1));
}

#[test]
fn affinities_ignore_a_translation_of_the_input() {
    let (x, _) = two_blobs(13);
    let shifted: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v + 100.0).collect()).collect();
    let a = joint_probabilities(&x, 10.0).unwrap();
    let b = joint_probabilities(&shifted, 10.0).unwrap();
    let worst = a.p.iter().zip(&b.p).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "largest change {worst}");
}
