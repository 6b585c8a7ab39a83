mod common;

use popinf_core::models::{gp_fit, gp_fit_multi, gp_predict_multi, gp_with_hyper, GpFitOptions, GpHyper};
use popinf_core::autodiff::Mat;
use popinf_core::models::gp::JITTER_START;
use popinf_oracles as oracle;
use proptest::prelude::*;

#[test]
fn posterior_matches_dense_inverse() {
    assert!(common::gp_posterior_error(20) < oracle::tol::LINALG);
}

#[test]
fn interpolates_at_noise_floor() {
    assert!(common::gp_interpolation_error() < 1e-6);
}

#[test]
fn lml_gradient_matches_finite_differences() {
    assert!(common::lml_gradient_error(20) < 1e-6);
}

#[test]
fn lml_matches_dense_oracle() {
    for s in 0..10 {
        let (x, y, _, h) = common::random_gp_problem(40 + s);
        let kxx: Vec<Vec<f64>> = x
            .iter()
            .map(|&a| x.iter().map(|&b| oracle::se_kernel(a, b, h.signal_var, h.length_scale)).collect())
            .collect();
        // The factorization always carries the smallest jitter.
        let want = oracle::gp_log_marginal_likelihood(&kxx, h.noise_var + JITTER_START, &y);
        let (got, _) = popinf_core::models::log_marginal_likelihood(&x, &y, &h).unwrap();
        assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "{s}: {got} vs {want}");
    }
}

#[test]
fn reverts_to_prior_far_away() {
    let h = GpHyper { signal_var: 1.7, length_scale: 1.0, noise_var: 1e-3 };
    let m = gp_with_hyper(&[20.0, 21.0], &[1.0, -0.5], h).unwrap();
    let (mu, var) = m.predict(&[40.0]);
    assert!(mu[0].abs() < 1e-12);
    assert!((var[0] - 1.7).abs() < 1e-12);
}

#[test]
fn constant_data_is_recovered() {
    let x: Vec<f64> = (0..6).map(|i| 20.0 + 4.0 * i as f64).collect();
    let y = vec![2.5; 6];
    let m = gp_fit(&x, &y, &GpFitOptions::default()).unwrap();
    let q: Vec<f64> = (0..50).map(|i| 22.0 + 0.3 * i as f64).collect();
    let (mu, _) = m.predict(&q);
    let err = mu.iter().map(|v| (v - 2.5).powi(2)).sum::<f64>() / q.len() as f64;
    assert!(err / 2.5f64.powi(2) < 0.01);
}

#[test]
fn multi_output_is_columnwise() {
    let x = [21.0, 26.0, 33.0];
    let y = Mat::from_vec(3, 2, vec![0.1, 3.0, 0.4, 2.0, -0.2, 2.5]);
    let opts = GpFitOptions { restarts: 3, iterations: 50, ..Default::default() };
    let models = gp_fit_multi(&x, &y, &opts).unwrap();
    let q = [25.0, 38.0];
    let p = gp_predict_multi(&models, &q);
    for c in 0..2 {
        let col: Vec<f64> = (0..3).map(|i| y.at(i, c)).collect();
        let single = gp_fit(&x, &col, &opts).unwrap();
        let (mu, _) = single.predict(&q);
        assert_eq!(mu, vec![p.at(0, c), p.at(1, c)]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn variance_is_non_negative_and_shrinks_with_data(
        xs in proptest::collection::vec(20.0f64..40.0, 1..6),
        q in 20.0f64..40.0,
    ) {
        let h = GpHyper { signal_var: 1.0, length_scale: 3.0, noise_var: 1e-2 };
        let y: Vec<f64> = xs.iter().map(|v| (v / 5.0).sin()).collect();
        let (_, v0) = gp_with_hyper(&xs, &y, h).unwrap().predict(&[q]);
        let mut x2 = xs.clone();
        x2.push(q);
        let mut y2 = y.clone();
        y2.push(0.0);
        let (_, v1) = gp_with_hyper(&x2, &y2, h).unwrap().predict(&[q]);
        prop_assert!(v0[0] >= 0.0 && v1[0] >= 0.0);
        prop_assert!(v1[0] <= v0[0] + 1e-12);
    }
}
