use popinf_core::autodiff::Mat;
use popinf_core::error::Error;
use popinf_core::features::{components_for_variance, pca_fit, pca_inverse, pca_transform, AffineScaler};
use popinf_core::rng::stream;
use proptest::prelude::*;
use rand::Rng;

/// `n` samples near a rank-`k` subspace of R^d plus small noise.
fn cloud(seed: u64, n: usize, d: usize, k: usize, noise: f64) -> Mat {
    let mut rng = stream(seed, &[7]);
    let dirs: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let w: Vec<f64> = (0..k).map(|j| rng.random_range(-1.0..1.0) * (k - j) as f64).collect();
        for i in 0..d {
            let s: f64 = (0..k).map(|j| w[j] * dirs[j][i]).sum();
            data.push(3.0 + s + noise * rng.random_range(-1.0..1.0));
        }
    }
    Mat::from_vec(n, d, data)
}

fn orthonormality_error(p: &Mat) -> f64 {
    let g = p.matmul_tn(p);
    let mut worst = 0.0f64;
    for i in 0..g.rows {
        for j in 0..g.cols {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.at(i, j) - want).abs());
        }
    }
    worst
}

fn reconstruction_sse(samples: &Mat, r: usize) -> f64 {
    let b = pca_fit(samples, r).unwrap();
    let back = pca_inverse(&b, &pca_transform(&b, samples).unwrap()).unwrap();
    back.data.iter().zip(&samples.data).map(|(a, b)| (a - b).powi(2)).sum()
}

#[test]
fn components_are_orthonormal() {
    for seed in 0..5 {
        let x = cloud(seed, 40, 12, 4, 0.05);
        let b = pca_fit(&x, 6).unwrap();
        let e = orthonormality_error(&b.components);
        assert!(e < 1e-10, "seed {seed}: {e}");
    }
}

#[test]
fn reconstruction_error_does_not_increase_with_r() {
    let x = cloud(3, 30, 8, 3, 0.2);
    let errs: Vec<f64> = (1..=8).map(|r| reconstruction_sse(&x, r)).collect();
    for w in errs.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{errs:?}");
    }
    assert!(errs[7] < 1e-18 * x.data.len() as f64 + 1e-20, "{errs:?}");
}

#[test]
fn projection_is_idempotent() {
    let x = cloud(11, 25, 7, 2, 0.1);
    let b = pca_fit(&x, 3).unwrap();
    let once = pca_inverse(&b, &pca_transform(&b, &x).unwrap()).unwrap();
    let twice = pca_inverse(&b, &pca_transform(&b, &once).unwrap()).unwrap();
    for (a, c) in once.data.iter().zip(&twice.data) {
        assert!((a - c).abs() < 1e-12);
    }
}

#[test]
fn sign_convention_is_deterministic() {
    let x = cloud(5, 20, 6, 3, 0.1);
    let a = pca_fit(&x, 3).unwrap();
    let b = pca_fit(&x, 3).unwrap();
    assert_eq!(a, b);
    for c in 0..3 {
        let col: Vec<f64> = (0..6).map(|i| a.components.at(i, c)).collect();
        let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(lead > 0.0, "component {c}: {col:?}");
    }
    let mut neg = x.clone();
    neg.data.iter_mut().for_each(|v| *v = 6.0 - *v);
    // Same covariance, so the sign rule must pick the same orientation.
    let flipped = pca_fit(&neg, 3).unwrap();
    for (u, v) in flipped.components.data.iter().zip(&a.components.data) {
        assert!((u - v).abs() < 1e-10, "{u} vs {v}");
    }
}

#[test]
fn threshold_picks_the_signal_rank() {
    let x = cloud(8, 50, 10, 3, 1e-6);
    assert_eq!(components_for_variance(&x, 0.999, None).unwrap(), 3);
    assert_eq!(components_for_variance(&x, 0.999, Some(2)).unwrap(), 2);
    let b = pca_fit(&x, 3).unwrap();
    let sum: f64 = b.explained.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9, "{sum}");
    assert!(b.explained.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn isotropic_cloud_needs_every_component() {
    // Cube corners: equal variance along each axis.
    let mut data = Vec::new();
    for i in 0..8 {
        for bit in 0..3 {
            data.push(if i >> bit & 1 == 1 { 1.0 } else { -1.0 });
        }
    }
    let x = Mat::from_vec(8, 3, data);
    assert_eq!(components_for_variance(&x, 0.999, None).unwrap(), 3);
    let b = pca_fit(&x, 3).unwrap();
    assert!(orthonormality_error(&b.components) < 1e-10);
    for e in &b.explained {
        assert!((e - 1.0 / 3.0).abs() < 1e-12);
    }
    assert_eq!(b, pca_fit(&x, 3).unwrap());
}

#[test]
fn rank_deficient_request_is_rejected() {
    let x = cloud(1, 10, 5, 2, 0.0);
    assert!(matches!(pca_fit(&x, 4), Err(Error::RankDeficient { rank: 2, .. })));
    assert!(matches!(pca_fit(&x, 0), Err(Error::RankDeficient { .. })));
    let one = Mat::from_vec(1, 3, vec![1.0, 2.0, 3.0]);
    assert!(matches!(pca_fit(&one, 1), Err(Error::Data(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minmax_scaler_round_trips(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20),
    ) {
        let n = rows.len();
        let x = Mat::from_vec(n, 3, rows.concat());
        let s = AffineScaler::fit_minmax(&x, -0.9, 0.9).unwrap();
        let z = s.transform(&x).unwrap();
        prop_assert!(z.data.iter().all(|v| (-0.9 - 1e-12..=0.9 + 1e-12).contains(v)));
        let back = s.inverse(&z).unwrap();
        for (a, b) in back.data.iter().zip(&x.data) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn standard_scaler_centres_and_scales(
        col in prop::collection::vec(-50.0f64..50.0, 3..30),
    ) {
        let x = Mat::column(&col);
        let s = AffineScaler::fit_standard(&x).unwrap();
        let z = s.transform(&x).unwrap();
        let n = z.data.len() as f64;
        let mean = z.data.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let var = z.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let spread = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - col.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 1e-6 {
            prop_assert!((var - 1.0).abs() < 1e-9, "{}", var);
        }
    }
}
