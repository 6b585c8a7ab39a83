use rand::seq::index::sample;
use rand::Rng;

use super::config::{ExperimentConfig, FrfScale, Problem, StructureTemplate};
use crate::autodiff::Mat;
use crate::dynamics::{assemble_matrices, default_frf_grid, frf_direct, StructureSpec};
use crate::error::Result;
use crate::features::{pca_transform, PcaBasis};
use crate::models::{Split, TaskDataset};
use crate::rng::{stream, tag};

/// A held-out structure: random queries plus one context set per size.
#[derive(Clone, Debug)]
pub struct HeldOut {
    pub spec: StructureSpec,
    pub queries: Vec<f64>,
    /// `(n_context, temperatures)`, in the configured order.
    pub contexts: Vec<(usize, Vec<f64>)>,
}

/// Structures of one repetition. Targets are computed separately per problem.
#[derive(Clone, Debug)]
pub struct Population {
    /// Nested: the first `n` form the `n`-structure training population.
    pub train: Vec<StructureSpec>,
    pub validation: HeldOut,
    pub test: Vec<HeldOut>,
    /// Dense temperature grid of the training structures.
    pub train_temperatures: Vec<f64>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn held_out<R: Rng>(
    cfg: &ExperimentConfig,
    k: f64,
    sizes: &[usize],
    rng_q: &mut R,
    ctx_seed: u64,
    labels: &[u64],
) -> HeldOut {
    let p = &cfg.population;
    let queries = (0..p.n_query).map(|_| rng_q.random_range(p.t_min..=p.t_max)).collect();
    let grid = linspace(p.t_min, p.t_max, p.context_grid);
    let contexts = sizes
        .iter()
        .map(|&n| {
            let mut l = labels.to_vec();
            l.push(n as u64);
            let mut rng = stream(ctx_seed, &l);
            let idx = sample(&mut rng, grid.len(), n).into_vec();
            (n, idx.into_iter().map(|i| grid[i]).collect())
        })
        .collect();
    HeldOut {
        spec: cfg.structure.build(k),
        queries,
        contexts,
    }
}

/// Draws repetition `rep`. Training and validation structures come from the
/// training seed, test structures and all their temperatures from the test
/// seed, so either can change without disturbing the other.
pub fn generate_population(cfg: &ExperimentConfig, rep: usize, context_sizes: &[usize]) -> Result<Population> {
    let p = &cfg.population;
    let r = rep as u64;
    let mut rng_train = stream(p.train_seed, &[tag("train-k"), r]);
    let train: Vec<StructureSpec> = (0..cfg.max_train())
        .map(|_| cfg.structure.build(rng_train.random_range(p.k_min..=p.k_max)))
        .collect();

    let mut rng_val = stream(p.train_seed, &[tag("validation"), r]);
    let k_val = rng_val.random_range(p.k_min..=p.k_max);
    let validation = held_out(cfg, k_val, &[p.validation_context], &mut rng_val, p.train_seed, &[tag("validation-context"), r]);

    let mut rng_k = stream(p.test_seed, &[tag("test-k"), r]);
    let ks: Vec<f64> = (0..p.n_test).map(|_| rng_k.random_range(p.k_min..=p.k_max)).collect();
    let test = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut rng_q = stream(p.test_seed, &[tag("test-query"), r, j as u64]);
            held_out(cfg, k, context_sizes, &mut rng_q, p.test_seed, &[tag("test-context"), r, j as u64])
        })
        .collect();

    for s in &train {
        s.validate()?;
    }
    Ok(Population {
        train,
        validation,
        test,
        train_temperatures: linspace(p.t_min, p.t_max, p.n_train_samples),
    })
}

/// Grid line nearest `f`, ties to the lower one.
fn nearest_line(grid: &[f64], f: f64) -> f64 {
    let mut best = grid[0];
    for &g in grid {
        if (g - f).abs() < (best - f).abs() {
            best = g;
        }
    }
    best
}

/// Raw targets over `temps`: one column for a spectral line, every grid
/// line for the full FRF (on the requested magnitude scale).
pub fn raw_targets(
    template: &StructureTemplate,
    spec: &StructureSpec,
    problem: Problem,
    scale: FrfScale,
    temps: &[f64],
) -> Result<Mat> {
    let grid = default_frf_grid();
    let freqs = match problem.line() {
        Some(f) => vec![nearest_line(&grid, f)],
        None => grid,
    };
    let d = freqs.len();
    let mut data = Vec::with_capacity(temps.len() * d);
    for &t in temps {
        let mats = assemble_matrices(spec, t)?;
        let c = frf_direct(&mats, template.excited_dof, template.observed_dof, &freqs)?;
        match (problem, scale) {
            (Problem::FullFrf, FrfScale::Log10) => data.extend(c.magnitude.iter().map(|m| m.log10())),
            _ => data.extend_from_slice(&c.magnitude),
        }
    }
    Ok(Mat::from_vec(temps.len(), d, data))
}

/// Raw-target datasets for one repetition and problem.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub train: Vec<TaskDataset>,
    pub validation: TaskDataset,
    /// `[structure][context set]`, context pairs tagged `Train`, queries `Test`.
    pub test: Vec<Vec<TaskDataset>>,
}

fn held_out_tasks(cfg: &ExperimentConfig, h: &HeldOut, problem: Problem, id: usize) -> Result<Vec<TaskDataset>> {
    let yq = raw_targets(&cfg.structure, &h.spec, problem, cfg.pca.magnitude, &h.queries)?;
    h.contexts
        .iter()
        .map(|(_, temps)| {
            let yc = raw_targets(&cfg.structure, &h.spec, problem, cfg.pca.magnitude, temps)?;
            let mut inputs = temps.clone();
            inputs.extend_from_slice(&h.queries);
            let mut data = yc.data;
            data.extend_from_slice(&yq.data);
            let mut tags = vec![Split::Train; temps.len()];
            tags.extend(std::iter::repeat_n(Split::Test, h.queries.len()));
            TaskDataset::new(id, inputs, Mat::from_vec(temps.len() + h.queries.len(), yq.cols, data), tags)
        })
        .collect()
}

pub fn problem_data(cfg: &ExperimentConfig, pop: &Population, problem: Problem) -> Result<ProblemData> {
    let train = pop
        .train
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let y = raw_targets(&cfg.structure, s, problem, cfg.pca.magnitude, &pop.train_temperatures)?;
            TaskDataset::new(i, pop.train_temperatures.clone(), y, vec![Split::Train; pop.train_temperatures.len()])
        })
        .collect::<Result<Vec<_>>>()?;
    let validation = held_out_tasks(cfg, &pop.validation, problem, usize::MAX)?.remove(0);
    let test = pop
        .test
        .iter()
        .enumerate()
        .map(|(j, h)| held_out_tasks(cfg, h, problem, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProblemData { train, validation, test })
}

/// Replaces raw targets by their coordinates in `basis`.
pub fn project_task(basis: &PcaBasis, task: &TaskDataset) -> Result<TaskDataset> {
    TaskDataset::new(task.task_id, task.inputs.clone(), pca_transform(basis, &task.targets)?, task.tags.clone())
}
