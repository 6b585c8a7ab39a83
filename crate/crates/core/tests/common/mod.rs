//! Measurements shared by the acceptance suite and the topical tests. Each
//! returns the worst error it saw so callers can both assert and report.
#![allow(dead_code)]

use popinf_core::autodiff::{grad, grad_through_update, value, Mat, Objective};
use popinf_core::dynamics::{
    assemble_matrices, estimate_frf_h1, frf_direct, natural_frequencies, simulate_from, simulate_time_domain,
    white_noise, StructureSpec, SystemMatrices, WelchConfig,
};
use popinf_core::experiments::metrics::nmse;
use popinf_core::models::{gp_with_hyper, log_marginal_likelihood, mlp_init, GpHyper, MlpConfig, MseLoss};
use popinf_core::rng::stream;
use popinf_oracles as oracle;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn nested(m: &SystemMatrices) -> [Vec<Vec<f64>>; 3] {
    let n = m.n_dof();
    let g = |a: &dyn Fn(usize, usize) -> f64| (0..n).map(|i| (0..n).map(|j| a(i, j)).collect()).collect();
    [
        g(&|i, j| m.mass[(i, j)]),
        g(&|i, j| m.damping[(i, j)]),
        g(&|i, j| m.stiffness[(i, j)]),
    ]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖b‖`.
pub fn rel_norm(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}

fn randn<R: Rng>(rng: &mut R, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| s * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// Worst `|NMSE(mean predictor) − 100|` over random sets.
pub fn mean_predictor_deviation(trials: usize) -> f64 {
    let mut rng = stream(101, &[]);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.random_range(2..300);
        let scale = rng.random_range(1e-3..1e3);
        let y = randn(&mut rng, n, scale);
        let m = y.iter().sum::<f64>() / n as f64;
        let v = nmse(&vec![m; n], &y).unwrap();
        worst = worst.max((v - 100.0).abs());
    }
    worst
}

/// A random small regression problem for a random MLP.
pub struct RandomNet {
    pub config: MlpConfig,
    pub theta: Vec<f64>,
    pub x: Mat,
    pub y: Mat,
    pub x2: Mat,
    pub y2: Mat,
}

pub fn random_net(seed: u64) -> RandomNet {
    let mut rng = stream(seed, &[]);
    let config = MlpConfig::new(rng.random_range(1..4), rng.random_range(2..7), rng.random_range(1..4));
    let theta = mlp_init(&config, &mut rng).values;
    let n = rng.random_range(3..9);
    let mk = |rng: &mut _, c| Mat::from_vec(n, c, randn(rng, n * c, 1.0));
    RandomNet {
        x: mk(&mut rng, config.input_dim),
        y: mk(&mut rng, config.output_dim),
        x2: mk(&mut rng, config.input_dim),
        y2: mk(&mut rng, config.output_dim),
        config,
        theta,
    }
}

/// Worst relative error of reverse-mode MLP-loss gradients against central
/// differences.
pub fn mlp_gradient_error(trials: usize) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let r = random_net(1000 + t as u64);
        let loss = MseLoss {
            config: r.config,
            x: &r.x,
            y: &r.y,
        };
        let g = grad(&loss, &r.theta).unwrap();
        let fd = oracle::fd_gradient(|p| value(&loss, p).unwrap(), &r.theta, 1e-5);
        worst = worst.max(rel_norm(&g, &fd));
    }
    worst
}

/// `outer(θ')` where `θ'` is `k` plain gradient steps on `inner` from `θ`.
pub fn composed<O: Objective, I: Objective>(outer: &O, inner: &I, theta: &[f64], alpha: f64, k: usize) -> f64 {
    let mut p = theta.to_vec();
    for _ in 0..k {
        let g = grad(inner, &p).unwrap();
        for (a, d) in p.iter_mut().zip(&g) {
            *a -= alpha * d;
        }
    }
    value(outer, &p).unwrap()
}

/// Worst relative error of second-order through-update gradients against
/// central differences of the composed objective.
pub fn through_update_error(trials: usize) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let r = random_net(5000 + t as u64);
        let mut rng = stream(7000 + t as u64, &[]);
        let alpha = rng.random_range(0.01..0.3);
        let k = rng.random_range(1..4);
        let inner = MseLoss {
            config: r.config,
            x: &r.x,
            y: &r.y,
        };
        let outer = MseLoss {
            config: r.config,
            x: &r.x2,
            y: &r.y2,
        };
        let mg = grad_through_update(&outer, &inner, &r.theta, alpha, k, false).unwrap();
        let fd = oracle::fd_gradient(|p| composed(&outer, &inner, p, alpha, k), &r.theta, 1e-5);
        worst = worst.max(rel_norm(&mg.gradient, &fd));
    }
    worst
}

pub fn random_gp_problem(seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, GpHyper) {
    let mut rng = stream(seed, &[]);
    let n = rng.random_range(2..9);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..40.0)).collect();
    let y = randn(&mut rng, n, 1.0);
    let q: Vec<f64> = (0..7).map(|_| rng.random_range(18.0..42.0)).collect();
    let h = GpHyper {
        signal_var: rng.random_range(0.5..2.0),
        length_scale: rng.random_range(2.0..10.0),
        noise_var: rng.random_range(1e-4..1e-1),
    };
    (x, y, q, h)
}

/// Worst scaled deviation of GP posterior means and variances from the
/// dense-inverse oracle.
pub fn gp_posterior_error(problems: usize) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..problems {
        let (x, y, q, h) = random_gp_problem(300 + s as u64);
        let model = gp_with_hyper(&x, &y, h).unwrap();
        let noise = h.noise_var + model.jitter;
        let kern = |a: f64, b: f64| oracle::se_kernel(a, b, h.signal_var, h.length_scale);
        let kxx: Vec<Vec<f64>> = x.iter().map(|&a| x.iter().map(|&b| kern(a, b)).collect()).collect();
        let cross: Vec<Vec<f64>> = q.iter().map(|&a| x.iter().map(|&b| kern(a, b)).collect()).collect();
        let mean = oracle::dense_gp_solve(&kxx, noise, &y, &cross).unwrap();
        let var = oracle::dense_gp_variance(&kxx, noise, &cross, &vec![h.signal_var; q.len()]).unwrap();
        let (m, v) = model.predict(&q);
        for i in 0..q.len() {
            worst = worst.max((m[i] - mean[i]).abs() / mean[i].abs().max(1.0));
            worst = worst.max((v[i] - var[i]).abs() / var[i].abs().max(1.0));
        }
    }
    worst
}

/// Worst `|mean − y|` at training inputs with the noise variance at its floor.
pub fn gp_interpolation_error() -> f64 {
    let mut worst = 0.0f64;
    for s in 0..10 {
        let mut rng = stream(900 + s, &[]);
        let n = rng.random_range(1..6);
        let x: Vec<f64> = (0..n).map(|i| 20.0 + 4.0 * i as f64 + rng.random_range(0.0..1.0)).collect();
        let y = randn(&mut rng, n, 1.0);
        let h = GpHyper {
            signal_var: 1.0,
            length_scale: 1.5,
            noise_var: 1e-8,
        };
        let (m, _) = gp_with_hyper(&x, &y, h).unwrap().predict(&x);
        for (a, b) in m.iter().zip(&y) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Worst relative error of the analytic log-marginal-likelihood gradient
/// (in log-hyperparameters) against central differences.
pub fn lml_gradient_error(problems: usize) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..problems {
        let (x, y, _, h) = random_gp_problem(600 + s as u64);
        let p = [h.signal_var.ln(), h.length_scale.ln(), h.noise_var.ln()];
        let (_, g) = log_marginal_likelihood(&x, &y, &h).unwrap();
        let fd = oracle::fd_gradient(|p| log_marginal_likelihood(&x, &y, &GpHyper::from_log([p[0], p[1], p[2]])).unwrap().0, &p, 1e-5);
        worst = worst.max(rel_norm(&g, &fd));
    }
    worst
}

/// Worst relative deviation of 5-DOF natural frequencies from the oracle.
pub fn natural_frequency_error() -> f64 {
    let mut worst = 0.0f64;
    for &k in &[8000.0, 9500.0, 12000.0] {
        for &t in &[20.0, 27.5, 40.0] {
            let mats = assemble_matrices(&StructureSpec::default_with_stiffness(k), t).unwrap();
            let [m, _, kk] = nested(&mats);
            let want = oracle::modal_frequencies(&m, &kk);
            let got = natural_frequencies(&mats).unwrap();
            for (a, b) in got.iter().zip(&want) {
                worst = worst.max((a - b).abs() / b);
            }
        }
    }
    worst
}

/// Error ratio of RK4 on an undamped oscillator when `dt` is halved.
pub fn rk4_halving_ratio() -> f64 {
    let k = 4.0 * std::f64::consts::PI.powi(2);
    let spec = StructureSpec {
        masses: vec![1.0],
        dampers: vec![0.0],
        base_stiffness: k,
        temp_affected: vec![],
        law: Default::default(),
    };
    let mats = assemble_matrices(&spec, 20.0).unwrap();
    let err = |dt: f64| {
        let steps = (2.0 / dt).round() as usize;
        let h = simulate_from(&mats, &[1.0], &[0.0], &vec![0.0; steps], 0, dt, steps).unwrap();
        (0..=steps)
            .map(|i| (h.displacement_of(0)[i] - oracle::harmonic_displacement(k, 1.0, 1.0, i as f64 * dt)).abs())
            .fold(0.0, f64::max)
    };
    err(0.01) / err(0.005)
}

/// H1 estimate from white-noise RK4 simulation against `frf_direct`.
pub struct H1Check {
    pub n_segments: usize,
    pub lines_compared: usize,
    pub worst_rel: f64,
    pub mean_rel: f64,
}

/// Lines within 10% (at least 1 Hz) of a resonance or anti-resonance of the
/// driving-point FRF are excluded.
pub fn h1_check(n_steps: usize, n_segments: usize) -> H1Check {
    let spec = StructureSpec::default_with_stiffness(10_000.0);
    let mats = assemble_matrices(&spec, 30.0).unwrap();
    let dt = 1e-3;
    let force = white_noise(n_steps, 1.0, &mut stream(5, &[]));
    let hist = simulate_time_domain(&mats, &force, 0, dt, n_steps).unwrap();
    let out = hist.displacement_of(0);
    let cfg = WelchConfig::for_segments(n_steps, n_segments, 0.5);
    let est = estimate_frf_h1(&force, &out[..n_steps], dt, &cfg).unwrap();

    let [m, _, k] = nested(&mats);
    let mut special = oracle::modal_frequencies(&m, &k);
    let drop0 = |a: &Vec<Vec<f64>>| a[1..].iter().map(|r| r[1..].to_vec()).collect::<Vec<_>>();
    special.extend(oracle::modal_frequencies(&drop0(&m), &drop0(&k)));

    let keep: Vec<usize> = (0..est.curve.freqs.len())
        .filter(|&i| {
            let f = est.curve.freqs[i];
            (1.0..=64.0).contains(&f) && special.iter().all(|&s| (f - s).abs() > (0.1 * s).max(1.0))
        })
        .collect();
    let freqs: Vec<f64> = keep.iter().map(|&i| est.curve.freqs[i]).collect();
    let direct = frf_direct(&mats, 0, 0, &freqs).unwrap();
    let errs: Vec<f64> = keep
        .iter()
        .zip(&direct.magnitude)
        .map(|(&i, d)| (est.curve.magnitude[i] - d).abs() / d)
        .collect();
    H1Check {
        n_segments: est.n_segments,
        lines_compared: keep.len(),
        worst_rel: errs.iter().copied().fold(0.0, f64::max),
        mean_rel: errs.iter().sum::<f64>() / errs.len() as f64,
    }
}
