mod common;

use popinf_core::dynamics::{
    assemble_matrices, frf_direct, natural_frequencies, spectral_line, StiffnessMode, StructureSpec, TemperatureLaw,
};
use popinf_oracles as oracle;

#[test]
fn five_dof_frequencies_match_oracle() {
    assert!(common::natural_frequency_error() < oracle::tol::LINALG);
}

#[test]
fn one_and_two_dof_closed_forms() {
    let two_pi = 2.0 * std::f64::consts::PI;
    let one = StructureSpec::uniform(1, 2.0, 0.0, 5000.0, TemperatureLaw::default());
    let f = natural_frequencies(&assemble_matrices(&one, 20.0).unwrap()).unwrap();
    assert!((f[0] - (5000.0f64 / 2.0).sqrt() / two_pi).abs() < 1e-10);

    let mut two = StructureSpec::uniform(2, 1.0, 0.0, 3000.0, TemperatureLaw::default());
    two.temp_affected.clear();
    let f = natural_frequencies(&assemble_matrices(&two, 30.0).unwrap()).unwrap();
    let want = oracle::two_dof_chain_frequencies(3000.0, 1.0);
    for (a, b) in f.iter().zip(&want) {
        assert!((a - b).abs() / b < 1e-10);
    }
}

#[test]
fn receptance_matches_oracle_and_is_reciprocal() {
    let spec = StructureSpec::default_with_stiffness(11_000.0);
    let mats = assemble_matrices(&spec, 33.0).unwrap();
    let [m, c, k] = common::nested(&mats);
    let freqs = [0.5, 1.0, 7.3, 19.0, 50.0];
    for (a, b) in [(0, 0), (1, 3), (4, 2)] {
        let got = frf_direct(&mats, a, b, &freqs).unwrap();
        let back = frf_direct(&mats, b, a, &freqs).unwrap();
        for (i, &f) in freqs.iter().enumerate() {
            let want = oracle::receptance(&m, &c, &k, a, b, f).unwrap();
            assert!((got.magnitude[i] - want).abs() / want < 1e-10);
            assert!((got.magnitude[i] - back.magnitude[i]).abs() / want < 1e-10);
        }
    }
}

#[test]
fn spectral_line_picks_lower_line_on_ties() {
    let mats = assemble_matrices(&StructureSpec::default_with_stiffness(10_000.0), 25.0).unwrap();
    let curve = frf_direct(&mats, 0, 0, &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(spectral_line(&curve, 1.5).unwrap(), curve.magnitude[0]);
    assert_eq!(spectral_line(&curve, 2.6).unwrap(), curve.magnitude[2]);
    assert!(spectral_line(&curve, 9.0).is_err());
}

#[test]
fn affected_springs_soften_with_temperature() {
    let spec = StructureSpec::default_with_stiffness(10_000.0);
    let ks: Vec<Vec<f64>> = (0..=20).map(|i| spec.spring_stiffnesses(20.0 + i as f64).unwrap()).collect();
    for w in ks.windows(2) {
        assert!(w[1][0] < w[0][0] && w[1][2] < w[0][2]);
        assert_eq!(w[1][4], w[0][4]);
    }
}

#[test]
fn absolute_mode_ignores_sampled_stiffness() {
    let law = TemperatureLaw {
        mode: StiffnessMode::Absolute,
        ..TemperatureLaw::default()
    };
    let a = StructureSpec::uniform(5, 1.0, 2.0, 8000.0, law.clone());
    let b = StructureSpec::uniform(5, 1.0, 2.0, 12000.0, law);
    assert_eq!(a.spring_stiffnesses(30.0).unwrap()[..3], b.spring_stiffnesses(30.0).unwrap()[..3]);
}

#[test]
fn rk4_is_fourth_order() {
    assert!(common::rk4_halving_ratio() >= 12.0);
}

#[test]
fn h1_improves_with_more_averages() {
    let few = common::h1_check(4096 * 9 / 2, 8);
    let many = common::h1_check(4096 * 65 / 2, 64);
    assert!(few.n_segments >= 8 && many.n_segments >= 64);
    assert!(many.mean_rel < few.mean_rel, "{} vs {}", many.mean_rel, few.mean_rel);
}
