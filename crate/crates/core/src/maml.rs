//! Population meta-training of the MLP, validation-based model selection and
//! test-time adaptation.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_through_update, value, value_and_grad, ParamVector};
use crate::error::{Error, Result};
use crate::experiments::metrics::nmse_multi;
use crate::models::{mlp_forward_batch, mlp_init, Episode, MlpConfig, MseLoss, Optimizer, OptimizerKind, Pairs};
use crate::rng::{stream, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MamlConfig {
    /// Inner (and test-time) learning rate.
    pub alpha: f64,
    /// Meta learning rate.
    pub beta: f64,
    pub meta_optimizer: OptimizerKind,
    pub k_inner: usize,
    pub epochs: usize,
    /// Tasks per meta-update; 0 uses every task.
    pub batch: usize,
    pub n_inner_samples: usize,
    pub n_meta_samples: usize,
    pub second_order: bool,
    /// Gradient steps at test time.
    pub adapt_steps: usize,
    /// Validation interval in epochs during model selection.
    pub val_every: usize,
    pub seed: u64,
}

impl Default for MamlConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.01,
            meta_optimizer: OptimizerKind::Adam,
            k_inner: 1,
            epochs: 500,
            batch: 0,
            n_inner_samples: 10,
            n_meta_samples: 10,
            second_order: true,
            adapt_steps: 50,
            val_every: 10,
            seed: 0,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("maml.alpha", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("maml.beta", "must be positive"));
        }
        if self.k_inner == 0 {
            return Err(Error::config("maml.k_inner", "must be at least 1"));
        }
        if self.n_inner_samples == 0 || self.n_meta_samples == 0 {
            return Err(Error::config("maml.n_inner_samples", "sample counts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub meta_loss: f64,
    pub val_loss: Option<f64>,
    pub val_nmse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MetaTrained {
    pub params: ParamVector,
    pub history: Vec<EpochRecord>,
}

/// Inner and meta splits drawn for one task in one epoch.
fn task_split(task: &Pairs, cfg: &MamlConfig, epoch: usize, index: usize) -> (Pairs, Pairs) {
    let mut rng = stream(cfg.seed, &[tag("maml-split"), epoch as u64, index as u64]);
    let idx = sample(&mut rng, task.len(), cfg.n_inner_samples + cfg.n_meta_samples).into_vec();
    (task.select(&idx[..cfg.n_inner_samples]), task.select(&idx[cfg.n_inner_samples..]))
}

fn batch_indices(n_tasks: usize, cfg: &MamlConfig, epoch: usize) -> Vec<usize> {
    if cfg.batch == 0 || cfg.batch >= n_tasks {
        return (0..n_tasks).collect();
    }
    let mut rng = stream(cfg.seed, &[tag("maml-batch"), epoch as u64]);
    let mut idx = sample(&mut rng, n_tasks, cfg.batch).into_vec();
    idx.sort_unstable();
    idx
}

/// Summed meta-loss and its gradient with respect to the pre-update parameters
/// for one epoch. Per-task work runs in parallel and is reduced in task order.
pub fn meta_gradient(
    tasks: &[Pairs],
    model: &MlpConfig,
    cfg: &MamlConfig,
    theta: &[f64],
    epoch: usize,
) -> Result<(f64, Vec<f64>)> {
    let order = batch_indices(tasks.len(), cfg, epoch);
    let parts: Vec<Result<(f64, Vec<f64>)>> = order
        .par_iter()
        .map(|&i| {
            let (inner, meta) = task_split(&tasks[i], cfg, epoch, i);
            let inner_loss = MseLoss {
                config: *model,
                x: &inner.x,
                y: &inner.y,
            };
            let outer_loss = MseLoss {
                config: *model,
                x: &meta.x,
                y: &meta.y,
            };
            let m = grad_through_update(&outer_loss, &inner_loss, theta, cfg.alpha, cfg.k_inner, !cfg.second_order)
                .map_err(|_| Error::NonFiniteLoss { epoch, task: i })?;
            if !m.outer_loss.is_finite() || m.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, task: i });
            }
            Ok((m.outer_loss, m.gradient))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for p in parts {
        let (l, g) = p?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

/// Meta-trains from `init`. `on_epoch` sees the parameters before each update
/// (epoch `0..epochs`) and after the final one (epoch `epochs`).
pub fn meta_train_with<F>(
    tasks: &[Pairs],
    model: &MlpConfig,
    cfg: &MamlConfig,
    init: ParamVector,
    mut on_epoch: F,
) -> Result<MetaTrained>
where
    F: FnMut(usize, &ParamVector, &mut EpochRecord) -> Result<()>,
{
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::Data("meta-training needs at least one task".into()));
    }
    let need = cfg.n_inner_samples + cfg.n_meta_samples;
    if let Some((i, t)) = tasks.iter().enumerate().find(|(_, t)| t.len() < need) {
        return Err(Error::Data(format!("task {i} has {} pairs, needs {need}", t.len())));
    }
    let mut params = init;
    let mut opt = Optimizer::new(cfg.meta_optimizer, params.len(), cfg.beta);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let (loss, grad) = meta_gradient(tasks, model, cfg, &params.values, epoch)?;
        let mut rec = EpochRecord {
            epoch,
            meta_loss: loss,
            val_loss: None,
            val_nmse: None,
        };
        on_epoch(epoch, &params, &mut rec)?;
        history.push(rec);
        if epoch < cfg.epochs {
            opt.step(&mut params.values, &grad);
        }
    }
    Ok(MetaTrained { params, history })
}

pub fn meta_train(tasks: &[Pairs], model: &MlpConfig, cfg: &MamlConfig, init: ParamVector) -> Result<MetaTrained> {
    meta_train_with(tasks, model, cfg, init, |_, _, _| Ok(()))
}

#[derive(Clone, Debug)]
pub struct AdaptationResult {
    pub params: ParamVector,
    /// Context loss before each step and after the last (`n_steps + 1` entries).
    pub loss_history: Vec<f64>,
    /// Step whose parameters were kept (lowest context loss).
    pub best_step: usize,
    /// NMSE on the query pairs, when given.
    pub nmse: Option<f64>,
}

/// Plain gradient steps on the context MSE, keeping the step with the lowest
/// context loss.
pub fn adapt(
    theta: &ParamVector,
    model: &MlpConfig,
    context: &Pairs,
    alpha: f64,
    n_steps: usize,
    queries: Option<&Pairs>,
) -> Result<AdaptationResult> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let loss = MseLoss {
        config: *model,
        x: &context.x,
        y: &context.y,
    };
    let mut current = theta.values.clone();
    let mut history = Vec::with_capacity(n_steps + 1);
    let mut best = (f64::INFINITY, 0, current.clone());
    for step in 0..=n_steps {
        let l = if step < n_steps {
            let (l, g) = value_and_grad(&loss, &current).map_err(|_| Error::NonFiniteLoss { epoch: step, task: 0 })?;
            if l < best.0 {
                best = (l, step, current.clone());
            }
            for (p, d) in current.iter_mut().zip(&g) {
                *p -= alpha * d;
            }
            l
        } else {
            let l = value(&loss, &current).map_err(|_| Error::NonFiniteLoss { epoch: step, task: 0 })?;
            if l < best.0 {
                best = (l, step, current.clone());
            }
            l
        };
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: step, task: 0 });
        }
        history.push(l);
    }
    let params = theta.with_values(best.2);
    let nmse = match queries {
        Some(q) => Some(nmse_multi(&mlp_forward_batch(&params, model, &q.x)?, &q.y)?),
        None => None,
    };
    Ok(AdaptationResult {
        params,
        loss_history: history,
        best_step: best.1,
        nmse,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub hidden: usize,
    pub init: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub config: MlpConfig,
    pub params: ParamVector,
    pub hidden: usize,
    pub init: usize,
    pub epoch: usize,
    pub val_loss: f64,
    /// History of the selected candidate's run.
    pub history: Vec<EpochRecord>,
    pub candidates: Vec<CandidateSummary>,
}

struct CandidateRun {
    summary: CandidateSummary,
    best: Option<(f64, usize, ParamVector)>,
    history: Vec<EpochRecord>,
}

fn run_candidate(
    tasks: &[Pairs],
    validation: &Episode,
    model: MlpConfig,
    init_index: usize,
    cfg: &MamlConfig,
) -> CandidateRun {
    let mut rng = stream(cfg.seed, &[tag("maml-init"), model.hidden_dim as u64, init_index as u64]);
    let init = mlp_init(&model, &mut rng);
    let mut best: Option<(f64, usize, ParamVector)> = None;
    let val_every = cfg.val_every.max(1);
    let out = meta_train_with(tasks, &model, cfg, init, |epoch, p, rec| {
        if epoch % val_every != 0 && epoch != cfg.epochs {
            return Ok(());
        }
        let a = match adapt(p, &model, &validation.context, cfg.alpha, cfg.adapt_steps, None) {
            Ok(a) => a,
            Err(e) if e.is_numerical() => return Ok(()),
            Err(e) => return Err(e),
        };
        let pred = mlp_forward_batch(&a.params, &model, &validation.target.x)?;
        let n = pred.len() as f64;
        let v = pred
            .data
            .iter()
            .zip(&validation.target.y.data)
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / n;
        rec.val_loss = Some(v);
        rec.val_nmse = nmse_multi(&pred, &validation.target.y).ok();
        if v.is_finite() && best.as_ref().is_none_or(|(b, _, _)| v < *b) {
            best = Some((v, epoch, p.clone()));
        }
        Ok(())
    });
    let (history, failure) = match out {
        Ok(t) => (t.history, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    CandidateRun {
        summary: CandidateSummary {
            hidden: model.hidden_dim,
            init: init_index,
            best_epoch: best.as_ref().map(|b| b.1),
            best_val_loss: best.as_ref().map(|b| b.0),
            failure,
        },
        best,
        history,
    }
}

/// Grid search over hidden sizes and random initializations. Every
/// `val_every` epochs a copy of the meta-model is adapted on the validation
/// context and scored on the validation queries; the lowest score over all
/// (size, init, epoch) wins. Candidates without a finite score are skipped.
pub fn select_hyperparameters(
    tasks: &[Pairs],
    validation: &Episode,
    hidden_sizes: &[usize],
    n_inits: usize,
    input_dim: usize,
    output_dim: usize,
    cfg: &MamlConfig,
) -> Result<Selection> {
    if validation.context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let grid: Vec<(usize, usize)> = hidden_sizes
        .iter()
        .flat_map(|&h| (0..n_inits).map(move |i| (h, i)))
        .collect();
    let runs: Vec<CandidateRun> = grid
        .par_iter()
        .map(|&(h, i)| run_candidate(tasks, validation, MlpConfig::new(input_dim, h, output_dim), i, cfg))
        .collect();
    let candidates: Vec<CandidateSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let mut winner: Option<CandidateRun> = None;
    for r in runs {
        let Some(score) = r.best.as_ref().map(|b| b.0) else { continue };
        if winner.as_ref().is_none_or(|w| score < w.best.as_ref().unwrap().0) {
            winner = Some(r);
        }
    }
    let Some(w) = winner else {
        return Err(Error::NoCandidate(format!(
            "all {} MAML candidates failed or produced non-finite validation loss",
            grid.len()
        )));
    };
    let (val_loss, epoch, params) = w.best.unwrap();
    Ok(Selection {
        config: MlpConfig::new(input_dim, w.summary.hidden, output_dim),
        params,
        hidden: w.summary.hidden,
        init: w.summary.init,
        epoch,
        val_loss,
        history: w.history,
        candidates,
    })
}
