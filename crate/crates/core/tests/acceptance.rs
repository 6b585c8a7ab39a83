//! Acceptance gate. Runs every criterion, prints one line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 4 10`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use popinf_core::autodiff::Mat;
use popinf_core::error::Error;
use popinf_core::experiments::metrics::{mean, spearman};
use popinf_core::experiments::{generate_population, nmse, problem_data, run_experiment, ExperimentConfig, ExperimentReport, Method, Preset, Problem, RunOptions};
use popinf_core::features::{components_for_variance, pca_fit, pca_inverse, pca_transform};
use popinf_core::models::{cnp_init, cnp_predict, CnpConfig, Pairs, Split};
use popinf_core::rng::stream;
use popinf_oracles as oracle;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let dev = common::mean_predictor_deviation(200);
    check(dev < 1e-9, format!("constant-mean predictor deviates from 100% by at most {dev:.2e}"))
}

fn criterion_2() -> Outcome {
    let g = common::mlp_gradient_error(100);
    let m = common::through_update_error(100);
    check(
        g < oracle::tol::FD_GRADIENT && m < oracle::tol::FD_THROUGH_UPDATE,
        format!("worst MLP gradient rel err {g:.2e} (< 1e-6), worst through-update rel err {m:.2e} (< 1e-4)"),
    )
}

fn criterion_3() -> Outcome {
    let post = common::gp_posterior_error(20);
    let interp = common::gp_interpolation_error();
    let lml = common::lml_gradient_error(20);
    check(
        post < oracle::tol::LINALG && interp < 1e-6 && lml < 1e-6,
        format!("posterior vs dense oracle {post:.2e} (< 1e-8), interpolation {interp:.2e} (< 1e-6), LML gradient {lml:.2e} (< 1e-6)"),
    )
}

fn criterion_4() -> Outcome {
    let freq = common::natural_frequency_error();
    let ratio = common::rk4_halving_ratio();
    let h1 = common::h1_check(1 << 20, 128);
    check(
        freq < 1e-8 && ratio >= 12.0 && h1.n_segments >= 128 && h1.worst_rel < 0.05,
        format!(
            "natural frequencies {freq:.2e} (< 1e-8), RK4 halving ratio {ratio:.2} (>= 12), H1 over {} averages: worst {:.2}% mean {:.2}% on {} lines (< 5%)",
            h1.n_segments,
            100.0 * h1.worst_rel,
            100.0 * h1.mean_rel,
            h1.lines_compared
        ),
    )
}

/// Mean over repetitions of a per-repetition statistic.
fn cell_mean(r: &ExperimentReport, p: Problem, m: Method, n_train: usize, ctx: usize, median: bool) -> Option<f64> {
    let vals: Vec<f64> = r
        .cell(p, m, n_train, ctx)
        .iter()
        .filter(|c| c.ok())
        .map(|c| if median { c.nmse_median } else { c.nmse })
        .collect::<Option<Vec<f64>>>()?;
    (!vals.is_empty()).then(|| mean(&vals))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.2}"))
}

fn criterion_5(r: &ExperimentReport) -> Outcome {
    let cnp = cell_mean(r, Problem::Line1Hz, Method::Cnp, 9, 1, true);
    let maml = cell_mean(r, Problem::Line1Hz, Method::Maml, 9, 3, true);
    check(
        cnp.is_some_and(|v| v < 5.0) && maml.is_some_and(|v| v < 5.0),
        format!("problem 1, 9 training structures: CNP ctx 1 median NMSE {}%, MAML ctx 3 median NMSE {}% (< 5%)", fmt(cnp), fmt(maml)),
    )
}

fn criterion_6(r: &ExperimentReport) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in Problem::ALL {
        for ctx in [1, 3] {
            let gp = cell_mean(r, p, Method::Gp, 0, ctx, false);
            let maml = cell_mean(r, p, Method::Maml, 9, ctx, false);
            let cnp = cell_mean(r, p, Method::Cnp, 9, ctx, false);
            let beats = |v: Option<f64>| matches!((v, gp), (Some(a), Some(g)) if a < g);
            let pass = if p == Problem::Line50Hz {
                beats(maml) || beats(cnp)
            } else {
                beats(maml) && beats(cnp)
            };
            ok &= pass;
            parts.push(format!("{p} ctx {ctx}: MAML {} CNP {} GP {}{}", fmt(maml), fmt(cnp), fmt(gp), if pass { "" } else { " (fails)" }));
        }
    }
    check(ok, parts.join("; "))
}

fn criterion_7(r: &ExperimentReport) -> Outcome {
    let ns: Vec<usize> = (2..=9).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [Method::Maml, Method::Cnp] {
        for ctx in [1, 3] {
            let means: Option<Vec<f64>> = ns.iter().map(|&n| cell_mean(r, Problem::Line1Hz, m, n, ctx, false)).collect();
            let rho = means.map(|v| spearman(&ns.iter().map(|&n| n as f64).collect::<Vec<_>>(), &v));
            ok &= rho.is_some_and(|v| v < 0.0);
            parts.push(format!("{m} ctx {ctx}: rho {}", fmt(rho)));
        }
    }
    check(ok, format!("problem 1, n_train 2..9 vs mean NMSE: {}", parts.join(", ")))
}

fn criterion_8() -> Outcome {
    let bits = |m: &Mat| m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let mut perm_ok = true;
    let mut dup_ok = true;
    let trials = 200;
    for seed in 0..trials {
        let cfg = CnpConfig::new(if seed % 4 == 0 { 3 } else { 1 });
        let params = cnp_init(&cfg, &mut stream(seed, &[11]));
        let mut rng = stream(seed, &[12]);
        let n = rng.random_range(1..=10);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.7..1.7)).collect();
        let y: Vec<f64> = (0..n * cfg.y_dim).map(|_| rng.random_range(-0.9..0.9)).collect();
        let q = Mat::column(&(0..15).map(|_| rng.random_range(-1.7..1.7)).collect::<Vec<_>>());
        let ctx = Pairs {
            x: Mat::column(&x),
            y: Mat::from_vec(n, cfg.y_dim, y),
        };
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let a = cnp_predict(&params, &cfg, &ctx, &q).unwrap();
        let b = cnp_predict(&params, &cfg, &ctx.select(&order), &q).unwrap();
        perm_ok &= bits(&a) == bits(&b);

        let one = ctx.select(&[0]);
        let five = ctx.select(&[0; 5]);
        dup_ok &= bits(&cnp_predict(&params, &cfg, &one, &q).unwrap()) == bits(&cnp_predict(&params, &cfg, &five, &q).unwrap());
    }
    let cfg = CnpConfig::new(1);
    let params = cnp_init(&cfg, &mut stream(0, &[11]));
    let empty = Pairs {
        x: Mat::zeros(0, 1),
        y: Mat::zeros(0, 1),
    };
    let rejected = matches!(cnp_predict(&params, &cfg, &empty, &Mat::column(&[0.0])), Err(Error::EmptyContext));
    check(
        perm_ok && dup_ok && rejected,
        format!("{trials} random networks: permutation bitwise {perm_ok}, 5x duplication bitwise {dup_ok}, empty context rejected {rejected}"),
    )
}

const TINY: &str = r#"
seed = 12

[population]
n_test = 4
n_repetitions = 2
n_query = 30
n_train_samples = 30

[[problems]]
problem = "line-1hz"
n_train = [2, 3]
contexts = [1, 3]
methods = ["maml", "cnp", "gp"]

[[problems]]
problem = "full-frf"
n_train = [3]
contexts = [1]
methods = ["maml", "cnp", "gp"]

[maml]
epochs = 8
adapt_steps = 5
val_every = 4

[selection]
hidden_sizes = [6, 10]

[cnp]
r = 8
hidden = 8

[cnp.train]
iterations = 20
val_every = 10
"#;

fn popinf(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_popinf"))
        .args(args)
        .env_remove("POPINF_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

/// Every CSV and checkpoint in `a` also exists in `b` with identical bytes.
fn same_outputs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for e in std::fs::read_dir(a).map_err(|e| e.to_string())?.flatten() {
        let name = e.file_name();
        let s = name.to_string_lossy();
        if s.ends_with(".csv") || s == "checkpoint.json" {
            let x = std::fs::read(e.path()).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(&name)).map_err(|e| format!("{s}: {e}"))?;
            if x != y {
                return Err(format!("{} differs from {}", e.path().display(), b.join(&name).display()));
            }
            n += 1;
        }
    }
    Ok(n)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    std::fs::write(d.join("tiny.toml"), TINY).map_err(|e| e.to_string())?;
    let mut compared = 0;

    for problem in ["line-50hz", "full-frf"] {
        let (a, b) = (p(&format!("sim-{problem}")), p(&format!("sim-{problem}-again")));
        popinf(&["simulate", "--config", &p("tiny.toml"), "--problem", problem, "--repetition", "1", "--out", &a])?;
        popinf(&["simulate", "--config", &format!("{a}/manifest.json"), "--out", &b])?;
        compared += same_outputs(Path::new(&a), Path::new(&b))?;
    }
    for method in ["maml", "cnp"] {
        let data = p("sim-full-frf");
        let (a, b) = (p(&format!("train-{method}")), p(&format!("train-{method}-again")));
        popinf(&["train", "--config", &p("tiny.toml"), "--method", method, "--data", &data, "--out", &a])?;
        popinf(&["train", "--config", &format!("{a}/manifest.json"), "--method", method, "--data", &data, "--out", &b])?;
        compared += same_outputs(Path::new(&a), Path::new(&b))?;
    }
    let (one, two, again) = (p("exp-1"), p("exp-2"), p("exp-again"));
    popinf(&["experiment", "--config", &p("tiny.toml"), "--workers", "1", "--out", &one])?;
    popinf(&["experiment", "--config", &p("tiny.toml"), "--workers", "2", "--out", &two])?;
    popinf(&["experiment", "--config", &format!("{one}/manifest.json"), "--out", &again])?;
    compared += same_outputs(Path::new(&one), Path::new(&two))?;
    compared += same_outputs(Path::new(&one), Path::new(&again))?;
    let rep = p("report");
    popinf(&["report", "--results", &one, "--out", &rep])?;
    compared += same_outputs(Path::new(&rep), Path::new(&one))?;
    Ok(format!(
        "{compared} output files bit-identical across manifest reruns (simulate, train, experiment, report) and 1 vs 2 workers"
    ))
}

fn criterion_10() -> Outcome {
    let cfg = ExperimentConfig::preset(Preset::Desk);
    let pop = generate_population(&cfg, 0, &[1]).map_err(|e| e.to_string())?;
    let data = problem_data(&cfg, &pop, Problem::FullFrf).map_err(|e| e.to_string())?;
    let d = data.train[0].target_dim();
    let mut pooled = Vec::new();
    for t in &data.train {
        pooled.extend_from_slice(&t.targets.data);
    }
    let samples = Mat::from_vec(pooled.len() / d, d, pooled);
    let r = components_for_variance(&samples, cfg.pca.variance, None).map_err(|e| e.to_string())?;
    let basis = pca_fit(&samples, r).map_err(|e| e.to_string())?;
    let again = pca_fit(&samples, r).map_err(|e| e.to_string())?;

    let g = basis.components.matmul_tn(&basis.components);
    let mut ortho = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            ortho = ortho.max((g.at(i, j) - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }

    let mut errs = Vec::new();
    for s in &data.test {
        let t = &s[0];
        let (_, y) = t.split(Split::Test);
        let back = pca_inverse(&basis, &pca_transform(&basis, &y).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        for i in 0..y.rows {
            errs.push(nmse(back.row(i), y.row(i)).map_err(|e| e.to_string())?);
        }
    }
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let deterministic = basis == again;
    check(
        ortho < 1e-10 && worst < 1.0 && deterministic,
        format!(
            "full FRF (log10, {d} lines), r = {r} at {}% variance: orthonormality {ortho:.2e} (< 1e-10), worst per-curve reconstruction NMSE {worst:.3}% over {} held-out curves (< 1%), mean {:.4}%, repeated fits bitwise equal {deterministic}",
            100.0 * cfg.pca.variance,
            errs.len(),
            mean(&errs)
        ),
    )
}

fn run(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &res {
        Ok(d) => println!("criterion {n} PASS ({secs:.1}s): {d}"),
        Err(d) => println!("criterion {n} FAIL ({secs:.1}s): {d}"),
    }
    res.is_ok()
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut results = Vec::new();

    let quick: [(usize, fn() -> Outcome); 7] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (8, criterion_8),
        (10, criterion_10),
        (9, criterion_9),
    ];
    for (n, f) in quick {
        if want(n) {
            results.push((n, run(n, f)));
        }
    }

    if [5, 6, 7].into_iter().any(want) {
        let start = Instant::now();
        let cfg = ExperimentConfig::preset(Preset::Desk);
        let run_out = catch_unwind(AssertUnwindSafe(|| run_experiment(&cfg, &RunOptions::default())));
        println!("desk experiment finished in {:.1}s", start.elapsed().as_secs_f64());
        let report = match run_out {
            Ok(Ok(o)) if o.complete => Ok(o.report),
            Ok(Ok(_)) => Err("desk run incomplete".to_string()),
            Ok(Err(e)) => Err(format!("desk run failed: {e}")),
            Err(_) => Err("desk run panicked".to_string()),
        };
        let desk: [(usize, fn(&ExperimentReport) -> Outcome); 3] = [(5, criterion_5), (6, criterion_6), (7, criterion_7)];
        for (n, f) in desk {
            if want(n) {
                let ok = match &report {
                    Ok(r) => run(n, || f(r)),
                    Err(e) => run(n, || Err(e.clone())),
                };
                results.push((n, ok));
            }
        }
    }

    let failed: Vec<usize> = results.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
