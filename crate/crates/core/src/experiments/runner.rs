use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, Problem, ProblemPlan};
use super::metrics::{mean, median, nmse_multi};
use super::population::{generate_population, problem_data, project_task, ProblemData};
use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::features::{components_for_variance, pca_fit, PcaBasis};
use crate::maml::{adapt, select_hyperparameters};
use crate::models::{
    cnp_init, cnp_predict, gp_fit_multi, gp_predict_multi, mlp_forward_batch, train_cnp, CnpConfig, Episode,
    Normalizer, Pairs, Split, TaskDataset,
};
use crate::rng::{derive_seed, stream, tag};

/// One `(problem, method, n_train, n_context, repetition)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub problem: Problem,
    pub method: Method,
    pub n_train: usize,
    pub n_context: usize,
    pub repetition: usize,
    /// Mean NMSE over the test population.
    pub nmse: Option<f64>,
    /// Median NMSE over the test population.
    pub nmse_median: Option<f64>,
    pub status: String,
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub problem: Problem,
    pub method: Method,
    pub n_train: usize,
    pub repetition: usize,
    /// `meta` (MAML epochs), `adapt-<n>` (test-time steps on the first test
    /// structure with `n` context points) or `train` (CNP iterations).
    pub phase: String,
    pub step: usize,
    pub loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitExample {
    pub problem: Problem,
    pub method: Method,
    pub n_train: usize,
    pub n_context: usize,
    pub repetition: usize,
    pub structure: usize,
    pub temperature: f64,
    pub dim: usize,
    pub truth: f64,
    pub prediction: f64,
}

/// Everything one unit of work produces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitOutput {
    pub cells: Vec<CellResult>,
    pub convergence: Vec<ConvergenceRow>,
    pub fit_examples: Vec<FitExample>,
    /// Per-cell NMSE of every test structure, aligned with `cells`.
    pub per_structure: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub convergence: Vec<ConvergenceRow>,
    pub fit_examples: Vec<FitExample>,
}

impl ExperimentReport {
    pub fn cell(&self, problem: Problem, method: Method, n_train: usize, n_context: usize) -> Vec<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.problem == problem && c.method == method && c.n_train == n_train && c.n_context == n_context)
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    /// Directory for per-unit results; existing files are reused.
    pub unit_dir: Option<PathBuf>,
    /// Stop after computing this many new units (simulates an interruption).
    pub stop_after: Option<usize>,
    pub progress: bool,
}

/// A schedulable piece of the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unit {
    pub problem: Problem,
    pub method: Method,
    /// Zero for the GP, which never sees the training population.
    pub n_train: usize,
    pub repetition: usize,
}

impl Unit {
    pub fn file_name(&self) -> String {
        format!("{}_{}_n{}_r{}.json", self.problem, self.method, self.n_train, self.repetition)
    }
}

/// Units of one problem plan and repetition, in report order.
pub fn plan_units(plan: &ProblemPlan, rep: usize) -> Vec<Unit> {
    let mut out = Vec::new();
    let mut methods = plan.methods.clone();
    methods.sort();
    methods.dedup();
    for m in methods {
        if m == Method::Gp {
            out.push(Unit {
                problem: plan.problem,
                method: m,
                n_train: 0,
                repetition: rep,
            });
        } else {
            let mut ns = plan.n_train.clone();
            ns.sort_unstable();
            ns.dedup();
            for n in ns {
                out.push(Unit {
                    problem: plan.problem,
                    method: m,
                    n_train: n,
                    repetition: rep,
                });
            }
        }
    }
    out
}

/// Training data in model units plus the transforms that got it there.
struct Prepared {
    train: Vec<TaskDataset>,
    validation: TaskDataset,
    test: Vec<Vec<TaskDataset>>,
    normalizer: Normalizer,
}

/// PCA basis of the pooled training targets under the configured threshold.
pub fn fit_basis(cfg: &ExperimentConfig, train: &[TaskDataset]) -> Result<PcaBasis> {
    let d = train[0].target_dim();
    let mut data = Vec::new();
    for t in train {
        data.extend_from_slice(&t.targets.data);
    }
    let samples = Mat::from_vec(data.len() / d, d, data);
    let r = components_for_variance(&samples, cfg.pca.variance, cfg.pca.cap)?;
    pca_fit(&samples, r)
}

fn prepare(cfg: &ExperimentConfig, data: &ProblemData, problem: Problem, n_train: usize) -> Result<Prepared> {
    let train: Vec<TaskDataset> = data.train[..n_train].to_vec();
    let (train, validation, test) = if problem == Problem::FullFrf {
        let basis = fit_basis(cfg, &train)?;
        let p = |t: &TaskDataset| project_task(&basis, t);
        (
            train.iter().map(p).collect::<Result<Vec<_>>>()?,
            p(&data.validation)?,
            data.test
                .iter()
                .map(|s| s.iter().map(p).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        (train, data.validation.clone(), data.test.clone())
    };
    let normalizer = Normalizer::fit(&train)?;
    Ok(Prepared {
        train,
        validation,
        test,
        normalizer,
    })
}

fn episode(norm: &Normalizer, task: &TaskDataset) -> Result<Episode> {
    Ok(Episode {
        context: norm.scaled_rows(task, &task.indices(Split::Train))?,
        target: norm.scaled_rows(task, &task.indices(Split::Test))?,
    })
}

fn all_pairs(norm: &Normalizer, task: &TaskDataset) -> Result<Pairs> {
    norm.scaled_rows(task, &(0..task.len()).collect::<Vec<_>>())
}

/// Scores one prediction matrix (model units) against a test task's queries.
fn score(norm: &Normalizer, task: &TaskDataset, pred_scaled: &Mat) -> Result<(f64, Mat)> {
    let pred = norm.predictions(pred_scaled)?;
    let (_, truth) = task.split(Split::Test);
    Ok((nmse_multi(&pred, &truth)?, pred))
}

/// Predicts in model units for a test task with the given context set index.
type Predictor<'a> = dyn Fn(usize, usize, &Episode) -> Result<Mat> + Sync + 'a;

fn evaluate(
    cfg: &ExperimentConfig,
    unit: Unit,
    contexts: &[usize],
    prep: &Prepared,
    predict: &Predictor<'_>,
    out: &mut UnitOutput,
) {
    for (c, &n_context) in contexts.iter().enumerate() {
        let mut scores = Vec::with_capacity(prep.test.len());
        let mut failure = None;
        for (j, sets) in prep.test.iter().enumerate() {
            let task = &sets[c];
            let r = episode(&prep.normalizer, task)
                .and_then(|ep| predict(j, c, &ep))
                .and_then(|p| score(&prep.normalizer, task, &p));
            match r {
                Ok((s, pred)) => {
                    scores.push(s);
                    if unit.repetition == 0 && j < cfg.fit_examples {
                        push_examples(unit, n_context, j, task, &pred, &mut out.fit_examples);
                    }
                }
                Err(e) => {
                    failure = Some(format!("failed: structure {j}: {e}"));
                    break;
                }
            }
        }
        let cell = CellResult {
            problem: unit.problem,
            method: unit.method,
            n_train: unit.n_train,
            n_context,
            repetition: unit.repetition,
            nmse: failure.is_none().then(|| mean(&scores)),
            nmse_median: failure.is_none().then(|| median(&scores)),
            status: failure.unwrap_or_else(|| "ok".into()),
        };
        out.cells.push(cell);
        out.per_structure.push(scores);
    }
}

fn push_examples(unit: Unit, n_context: usize, structure: usize, task: &TaskDataset, pred: &Mat, sink: &mut Vec<FitExample>) {
    let q = task.indices(Split::Test);
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| task.inputs[q[a]].total_cmp(&task.inputs[q[b]]));
    for i in order {
        for d in 0..pred.cols {
            sink.push(FitExample {
                problem: unit.problem,
                method: unit.method,
                n_train: unit.n_train,
                n_context,
                repetition: unit.repetition,
                structure,
                temperature: task.inputs[q[i]],
                dim: d,
                truth: task.targets.at(q[i], d),
                prediction: pred.at(i, d),
            });
        }
    }
}

fn failed_unit(unit: Unit, contexts: &[usize], err: &Error) -> UnitOutput {
    let mut out = UnitOutput::default();
    for &n_context in contexts {
        out.cells.push(CellResult {
            problem: unit.problem,
            method: unit.method,
            n_train: unit.n_train,
            n_context,
            repetition: unit.repetition,
            nmse: None,
            nmse_median: None,
            status: format!("failed: {err}"),
        });
        out.per_structure.push(Vec::new());
    }
    out
}

fn unit_seed(cfg: &ExperimentConfig, unit: Unit, label: &str) -> u64 {
    derive_seed(
        cfg.seed,
        &[
            tag(label),
            tag(unit.problem.name()),
            unit.n_train as u64,
            unit.repetition as u64,
        ],
    )
}

fn run_maml(cfg: &ExperimentConfig, unit: Unit, contexts: &[usize], prep: &Prepared) -> Result<UnitOutput> {
    let norm = &prep.normalizer;
    let tasks = prep.train.iter().map(|t| all_pairs(norm, t)).collect::<Result<Vec<_>>>()?;
    let val = episode(norm, &prep.validation)?;
    let maml = crate::maml::MamlConfig {
        seed: derive_seed(cfg.maml.seed, &[unit_seed(cfg, unit, "maml")]),
        ..cfg.maml.clone()
    };
    let d = prep.train[0].target_dim();
    let sel = select_hyperparameters(&tasks, &val, &cfg.selection.hidden_sizes, cfg.selection.n_inits, 1, d, &maml)?;
    let mut out = UnitOutput::default();
    for h in &sel.history {
        out.convergence.push(ConvergenceRow {
            problem: unit.problem,
            method: unit.method,
            n_train: unit.n_train,
            repetition: unit.repetition,
            phase: "meta".into(),
            step: h.epoch,
            loss: h.meta_loss,
            val_loss: h.val_loss,
        });
    }
    let histories = std::sync::Mutex::new(Vec::new());
    let predict = |j: usize, c: usize, ep: &Episode| -> Result<Mat> {
        let a = adapt(&sel.params, &sel.config, &ep.context, maml.alpha, maml.adapt_steps, None)?;
        if j == 0 {
            histories.lock().unwrap().push((c, a.loss_history.clone()));
        }
        mlp_forward_batch(&a.params, &sel.config, &ep.target.x)
    };
    evaluate(cfg, unit, contexts, prep, &predict, &mut out);
    for (c, hist) in histories.into_inner().unwrap() {
        for (step, loss) in hist.into_iter().enumerate() {
            out.convergence.push(ConvergenceRow {
                problem: unit.problem,
                method: unit.method,
                n_train: unit.n_train,
                repetition: unit.repetition,
                phase: format!("adapt-{}", contexts[c]),
                step,
                loss,
                val_loss: None,
            });
        }
    }
    Ok(out)
}

fn run_cnp(cfg: &ExperimentConfig, unit: Unit, contexts: &[usize], prep: &Prepared) -> Result<UnitOutput> {
    let norm = &prep.normalizer;
    let tasks = prep.train.iter().map(|t| all_pairs(norm, t)).collect::<Result<Vec<_>>>()?;
    let val = episode(norm, &prep.validation)?;
    let arch = CnpConfig {
        r: cfg.cnp.r,
        hidden: cfg.cnp.hidden,
        ..CnpConfig::new(prep.train[0].target_dim())
    };
    let seed = derive_seed(cfg.cnp.seed, &[unit_seed(cfg, unit, "cnp")]);
    let init = cnp_init(&arch, &mut stream(seed, &[tag("init")]));
    let trained = train_cnp(&tasks, Some(&val), &arch, &cfg.cnp.train, init, &mut stream(seed, &[tag("episodes")]))?;
    let mut out = UnitOutput::default();
    for h in &trained.history {
        out.convergence.push(ConvergenceRow {
            problem: unit.problem,
            method: unit.method,
            n_train: unit.n_train,
            repetition: unit.repetition,
            phase: "train".into(),
            step: h.iteration,
            loss: h.train_loss,
            val_loss: h.val_loss,
        });
    }
    let predict = |_: usize, _: usize, ep: &Episode| cnp_predict(&trained.params, &arch, &ep.context, &ep.target.x);
    evaluate(cfg, unit, contexts, prep, &predict, &mut out);
    Ok(out)
}

/// Per-structure GP on raw temperatures. Targets are taken in the same scaled
/// units as the other methods and centred on the context mean.
fn run_gp(cfg: &ExperimentConfig, unit: Unit, contexts: &[usize], prep: &Prepared) -> Result<UnitOutput> {
    let mut out = UnitOutput::default();
    let predict = |j: usize, c: usize, _: &Episode| -> Result<Mat> {
        let task = &prep.test[j][c];
        let (xc, yc) = task.split(Split::Train);
        let yc = prep.normalizer.targets(&yc)?;
        let (xq, _) = task.split(Split::Test);
        let d = yc.cols;
        let offset: Vec<f64> = (0..d).map(|k| (0..yc.rows).map(|i| yc.at(i, k)).sum::<f64>() / yc.rows as f64).collect();
        let mut centred = yc.clone();
        for (i, v) in centred.data.iter_mut().enumerate() {
            *v -= offset[i % d];
        }
        let opts = crate::models::GpFitOptions {
            seed: derive_seed(cfg.gp.seed, &[unit_seed(cfg, unit, "gp"), j as u64, c as u64]),
            ..cfg.gp
        };
        let models = gp_fit_multi(&xc.data, &centred, &opts)?;
        let mut pred = gp_predict_multi(&models, &xq.data);
        for (i, v) in pred.data.iter_mut().enumerate() {
            *v += offset[i % d];
        }
        Ok(pred)
    };
    evaluate(cfg, unit, contexts, prep, &predict, &mut out);
    Ok(out)
}

fn run_unit(cfg: &ExperimentConfig, plan: &ProblemPlan, unit: Unit, data: &ProblemData) -> UnitOutput {
    // The GP uses the largest training population only for its scaling.
    let n = if unit.method == Method::Gp {
        plan.n_train.iter().copied().max().unwrap_or(1).max(1)
    } else {
        unit.n_train
    };
    let result = prepare(cfg, data, unit.problem, n).and_then(|prep| match unit.method {
        Method::Maml => run_maml(cfg, unit, &plan.contexts, &prep),
        Method::Cnp => run_cnp(cfg, unit, &plan.contexts, &prep),
        Method::Gp => run_gp(cfg, unit, &plan.contexts, &prep),
    });
    result.unwrap_or_else(|e| failed_unit(unit, &plan.contexts, &e))
}

fn load_unit(dir: &Path, unit: Unit) -> Option<UnitOutput> {
    let text = std::fs::read_to_string(dir.join(unit.file_name())).ok()?;
    serde_json::from_str(&text).ok()
}

fn store_unit(dir: &Path, unit: Unit, out: &UnitOutput) -> Result<()> {
    let path = dir.join(unit.file_name());
    let tmp = dir.join(format!("{}.tmp", unit.file_name()));
    std::fs::write(&tmp, serde_json::to_string(out)?).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

/// Outcome of a possibly interrupted sweep.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    /// False when `stop_after` cut the sweep short.
    pub complete: bool,
}

/// Runs every configured cell. Method failures are recorded per cell.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    if let Some(dir) = &opts.unit_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(|| run_inner(cfg, opts))
}

fn run_inner(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let mut report = ExperimentReport::default();
    let mut computed = 0usize;
    for plan in &cfg.problems {
        for rep in 0..cfg.population.n_repetitions {
            let units = plan_units(plan, rep);
            let mut outputs: Vec<Option<UnitOutput>> = units
                .iter()
                .map(|u| opts.unit_dir.as_deref().and_then(|d| load_unit(d, *u)))
                .collect();
            let missing: Vec<usize> = (0..units.len()).filter(|&i| outputs[i].is_none()).collect();
            if !missing.is_empty() {
                if opts.stop_after.is_some_and(|s| computed >= s) {
                    return Ok(RunOutcome { report, complete: false });
                }
                let budget = opts.stop_after.map_or(missing.len(), |s| (s - computed).min(missing.len()));
                let todo = &missing[..budget];
                let pop = generate_population(cfg, rep, &plan.contexts)?;
                let data = problem_data(cfg, &pop, plan.problem)?;
                let fresh: Vec<UnitOutput> = todo
                    .par_iter()
                    .map(|&i| run_unit(cfg, plan, units[i], &data))
                    .collect();
                for (&i, out) in todo.iter().zip(fresh) {
                    if let Some(dir) = &opts.unit_dir {
                        store_unit(dir, units[i], &out)?;
                    }
                    if opts.progress {
                        let u = units[i];
                        eprintln!("done {} {} n_train={} rep={}", u.problem, u.method, u.n_train, u.repetition);
                    }
                    outputs[i] = Some(out);
                }
                computed += todo.len();
                if todo.len() < missing.len() {
                    return Ok(RunOutcome { report, complete: false });
                }
            }
            for out in outputs.into_iter().flatten() {
                report.cells.extend(out.cells);
                report.convergence.extend(out.convergence);
                report.fit_examples.extend(out.fit_examples);
            }
        }
    }
    sort_report(&mut report);
    Ok(RunOutcome { report, complete: true })
}

/// Canonical row order: problem, method, n_train, n_context, repetition.
pub fn sort_report(report: &mut ExperimentReport) {
    report.cells.sort_by(|a, b| {
        (a.problem, a.method, a.n_train, a.n_context, a.repetition).cmp(&(b.problem, b.method, b.n_train, b.n_context, b.repetition))
    });
    report
        .convergence
        .sort_by(|a, b| (a.problem, a.method, a.n_train, a.repetition).cmp(&(b.problem, b.method, b.n_train, b.repetition)));
    report.fit_examples.sort_by(|a, b| {
        (a.problem, a.method, a.n_train, a.n_context, a.repetition, a.structure).cmp(&(
            b.problem,
            b.method,
            b.n_train,
            b.n_context,
            b.repetition,
            b.structure,
        ))
    });
}
