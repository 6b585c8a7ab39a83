use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Pairs;
use super::mlp::init_params;
use super::optim::Adam;
use crate::autodiff::{value_and_grad, Graph, Layout, Mat, Objective, ParamVector, Scalar, Var};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Encoder `(x, y) → r`, mean aggregation, decoder `(x_query, r̄) → y`.
/// Each side has one tanh hidden layer and a linear output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnpConfig {
    pub x_dim: usize,
    pub y_dim: usize,
    pub r: usize,
    pub hidden: usize,
}

impl CnpConfig {
    pub fn new(y_dim: usize) -> Self {
        Self {
            x_dim: 1,
            y_dim,
            r: 32,
            hidden: 64,
        }
    }

    pub fn layout(&self) -> Layout {
        let (x, y, r, h) = (self.x_dim, self.y_dim, self.r, self.hidden);
        let mut l = Layout::new();
        l.push("enc_w1", x + y, h)
            .push("enc_b1", 1, h)
            .push("enc_w2", h, r)
            .push("enc_b2", 1, r)
            .push("dec_w1", x + r, h)
            .push("dec_b1", 1, h)
            .push("dec_w2", h, y)
            .push("dec_b2", 1, y);
        l
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnpTrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Context size per episode is drawn from `1..=max_context`.
    pub max_context: usize,
    pub n_targets: usize,
    /// Validation interval in iterations.
    pub val_every: usize,
}

impl Default for CnpTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            iterations: 2000,
            max_context: 10,
            n_targets: 20,
            val_every: 50,
        }
    }
}

pub fn cnp_init<R: Rng + ?Sized>(config: &CnpConfig, rng: &mut R) -> ParamVector {
    init_params(&config.layout(), rng)
}

/// Records one conditioned prediction: `ctx_xy` is `c × (x+y)`, `query_x` is `q × x`.
pub fn cnp_graph<S: Scalar>(g: &mut Graph<S>, blocks: &[Var], ctx_xy: Var, query_x: Var) -> Var {
    let h = g.affine(ctx_xy, blocks[0], blocks[1]);
    let h = g.tanh(h);
    let e = g.affine(h, blocks[2], blocks[3]);
    let agg = g.mean_rows(e);
    let q = g.value(query_x).rows;
    let rep = g.broadcast_rows(agg, q);
    let z = g.concat_cols(query_x, rep);
    let d = g.affine(z, blocks[4], blocks[5]);
    let d = g.tanh(d);
    g.affine(d, blocks[6], blocks[7])
}

fn joined(context: &Pairs) -> Mat {
    let cols = context.x.cols + context.y.cols;
    let mut data = Vec::with_capacity(context.len() * cols);
    for i in 0..context.len() {
        data.extend_from_slice(context.x.row(i));
        data.extend_from_slice(context.y.row(i));
    }
    Mat::from_vec(context.len(), cols, data)
}

fn check(params: &ParamVector, config: &CnpConfig, context: &Pairs, queries: &Mat) -> Result<()> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    if params.layout != config.layout() {
        return Err(Error::Dimension("parameter layout does not match CNP config".into()));
    }
    if context.x.cols != config.x_dim || queries.cols != config.x_dim || context.y.cols != config.y_dim {
        return Err(Error::Dimension(format!(
            "CNP expects x of width {} and y of width {}",
            config.x_dim, config.y_dim
        )));
    }
    Ok(())
}

/// Predictions at `queries` conditioned on `context`, in model units.
pub fn cnp_predict(params: &ParamVector, config: &CnpConfig, context: &Pairs, queries: &Mat) -> Result<Mat> {
    check(params, config, context, queries)?;
    let mut g = Graph::<f64>::new();
    let theta = g.leaf(Mat::column(&params.values));
    let blocks = params.layout.bind(&mut g, theta);
    let c = g.constant(&joined(context));
    let q = g.constant(queries);
    let out = cnp_graph(&mut g, &blocks, c, q);
    g.check_finite()?;
    Ok(g.value(out).clone())
}

/// One conditioning episode: predict `target` given `context`.
#[derive(Clone, Debug)]
pub struct Episode {
    pub context: Pairs,
    pub target: Pairs,
}

/// Mean over episodes of the per-episode mean squared error.
pub struct CnpLoss<'a> {
    pub config: CnpConfig,
    pub episodes: &'a [Episode],
}

impl Objective for CnpLoss<'_> {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, theta: Var) -> Var {
        let blocks = self.config.layout().bind(g, theta);
        let mut total: Option<Var> = None;
        for ep in self.episodes {
            let c = g.constant(&joined(&ep.context));
            let q = g.constant(&ep.target.x);
            let y = g.constant(&ep.target.y);
            let pred = cnp_graph(g, &blocks, c, q);
            let r = g.sub(pred, y);
            let sq = g.square(r);
            let m = g.mean(sq);
            total = Some(match total {
                Some(t) => g.add(t, m),
                None => m,
            });
        }
        let total = total.expect("at least one episode");
        g.scale(total, 1.0 / self.episodes.len() as f64)
    }
}

/// Draws a random context/target split of one task.
pub fn sample_episode<R: Rng + ?Sized>(task: &Pairs, max_context: usize, n_targets: usize, rng: &mut R) -> Episode {
    let n = task.len();
    let c = rng.random_range(1..=max_context.min(n - 1).max(1));
    let t = n_targets.min(n - c).max(1);
    let idx = sample(rng, n, c + t).into_vec();
    Episode {
        context: task.select(&idx[..c]),
        target: task.select(&idx[c..]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnpHistoryRow {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CnpTrained {
    pub params: ParamVector,
    pub best_iteration: usize,
    pub history: Vec<CnpHistoryRow>,
}

fn val_loss(params: &ParamVector, config: &CnpConfig, val: &Episode) -> Result<f64> {
    let pred = cnp_predict(params, config, &val.context, &val.target.x)?;
    let n = pred.len() as f64;
    Ok(pred.data.iter().zip(&val.target.y.data).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n)
}

/// Adam on freshly sampled episodes from every task at each iteration. With a
/// validation episode the parameters with the lowest validation loss are kept.
pub fn train_cnp(
    tasks: &[Pairs],
    validation: Option<&Episode>,
    config: &CnpConfig,
    train: &CnpTrainConfig,
    init: ParamVector,
    rng: &mut StreamRng,
) -> Result<CnpTrained> {
    if tasks.is_empty() {
        return Err(Error::Data("CNP training needs at least one task".into()));
    }
    if let Some(t) = tasks.iter().find(|t| t.len() < 2) {
        return Err(Error::Data(format!("CNP task with {} pairs; need at least 2", t.len())));
    }
    let mut params = init;
    let mut opt = Adam::new(params.len(), train.learning_rate);
    let mut history = Vec::new();
    let mut best = params.clone();
    let mut best_iteration = 0;
    let mut best_val = f64::INFINITY;
    let val_every = train.val_every.max(1);

    let mut record = |it: usize, loss: f64, p: &ParamVector, history: &mut Vec<CnpHistoryRow>| -> Result<()> {
        let v = match validation {
            Some(ep) => {
                let v = val_loss(p, config, ep)?;
                if v < best_val {
                    best_val = v;
                    best = p.clone();
                    best_iteration = it;
                }
                Some(v)
            }
            None => {
                best = p.clone();
                best_iteration = it;
                None
            }
        };
        history.push(CnpHistoryRow {
            iteration: it,
            train_loss: loss,
            val_loss: v,
        });
        Ok(())
    };

    for it in 0..train.iterations {
        let episodes: Vec<Episode> = tasks
            .iter()
            .map(|t| sample_episode(t, train.max_context, train.n_targets, rng))
            .collect();
        let loss = CnpLoss {
            config: *config,
            episodes: &episodes,
        };
        let (l, grad) = value_and_grad(&loss, &params.values).map_err(|_| Error::NonFiniteLoss { epoch: it, task: 0 })?;
        if it % val_every == 0 {
            record(it, l, &params, &mut history)?;
        }
        opt.step(&mut params.values, &grad);
    }
    let final_loss = {
        let episodes: Vec<Episode> = tasks
            .iter()
            .map(|t| sample_episode(t, train.max_context, train.n_targets, rng))
            .collect();
        crate::autodiff::value(&CnpLoss { config: *config, episodes: &episodes }, &params.values)?
    };
    record(train.iterations, final_loss, &params, &mut history)?;
    Ok(CnpTrained {
        params: best,
        best_iteration,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(xs: &[f64], ys: &[f64]) -> Pairs {
        Pairs {
            x: Mat::column(xs),
            y: Mat::column(ys),
        }
    }

    #[test]
    fn context_order_and_duplicates_do_not_matter() {
        let cfg = CnpConfig::new(1);
        let p = cnp_init(&cfg, &mut crate::rng::stream(5, &[]));
        let q = Mat::column(&[-1.0, 0.0, 0.4]);
        let a = cnp_predict(&p, &cfg, &pairs(&[0.1, 0.5, -0.3], &[1.0, 0.2, 0.3]), &q).unwrap();
        let b = cnp_predict(&p, &cfg, &pairs(&[-0.3, 0.1, 0.5], &[0.3, 1.0, 0.2]), &q).unwrap();
        assert_eq!(a, b);
        let one = cnp_predict(&p, &cfg, &pairs(&[0.2], &[0.7]), &q).unwrap();
        let five = cnp_predict(&p, &cfg, &pairs(&[0.2; 5], &[0.7; 5]), &q).unwrap();
        assert_eq!(one, five);
        assert!(matches!(
            cnp_predict(&p, &cfg, &pairs(&[], &[]), &q),
            Err(Error::EmptyContext)
        ));
    }

    #[test]
    fn zero_iterations_keep_init() {
        let cfg = CnpConfig { r: 4, hidden: 5, ..CnpConfig::new(1) };
        let init = cnp_init(&cfg, &mut crate::rng::stream(1, &[]));
        let task = pairs(&[0.0, 0.5, 1.0], &[0.1, 0.2, 0.3]);
        let tc = CnpTrainConfig { iterations: 0, ..Default::default() };
        let out = train_cnp(&[task], None, &cfg, &tc, init.clone(), &mut crate::rng::stream(2, &[])).unwrap();
        assert_eq!(out.params, init);
    }
}
