use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Layout, Mat, Objective, ParamVector, Scalar, Var};
use crate::error::{Error, Result};

/// Three weight layers, tanh after each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            output_dim,
        }
    }

    pub fn layout(&self) -> Layout {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let mut l = Layout::new();
        l.push("w1", i, h)
            .push("b1", 1, h)
            .push("w2", h, h)
            .push("b2", 1, h)
            .push("w3", h, o)
            .push("b3", 1, o);
        l
    }

    pub fn n_params(&self) -> usize {
        self.layout().len()
    }
}

/// Gaussian weights with std `1/√fan_in`, zero biases.
pub fn init_params<R: Rng + ?Sized>(layout: &Layout, rng: &mut R) -> ParamVector {
    let mut p = ParamVector::zeros(layout.clone());
    for b in layout.blocks() {
        if b.name.starts_with('b') || b.name.contains("_b") {
            continue;
        }
        let normal = Normal::new(0.0, 1.0 / (b.rows as f64).sqrt()).expect("positive std");
        for v in &mut p.values[b.range()] {
            *v = normal.sample(rng);
        }
    }
    p
}

pub fn mlp_init<R: Rng + ?Sized>(config: &MlpConfig, rng: &mut R) -> ParamVector {
    init_params(&config.layout(), rng)
}

/// Records the network on `g`; `x` is `n × input_dim`, `blocks` the bound layout.
pub fn mlp_graph<S: Scalar>(g: &mut Graph<S>, blocks: &[Var], x: Var) -> Var {
    let h1 = g.affine(x, blocks[0], blocks[1]);
    let h1 = g.tanh(h1);
    let h2 = g.affine(h1, blocks[2], blocks[3]);
    let h2 = g.tanh(h2);
    let o = g.affine(h2, blocks[4], blocks[5]);
    g.tanh(o)
}

fn check(params: &ParamVector, config: &MlpConfig, cols: usize) -> Result<()> {
    if params.layout != config.layout() {
        return Err(Error::Dimension(format!(
            "parameter layout does not match MLP {}-{}-{}",
            config.input_dim, config.hidden_dim, config.output_dim
        )));
    }
    if cols != config.input_dim {
        return Err(Error::Dimension(format!(
            "MLP expects {} inputs, got {}",
            config.input_dim, cols
        )));
    }
    Ok(())
}

/// Forward pass over the rows of `x`.
pub fn mlp_forward_batch(params: &ParamVector, config: &MlpConfig, x: &Mat) -> Result<Mat> {
    check(params, config, x.cols)?;
    let mut g = Graph::<f64>::new();
    let theta = g.leaf(Mat::column(&params.values));
    let blocks = params.layout.bind(&mut g, theta);
    let xv = g.constant(x);
    let out = mlp_graph(&mut g, &blocks, xv);
    g.check_finite()?;
    Ok(g.value(out).clone())
}

pub fn mlp_forward(params: &ParamVector, config: &MlpConfig, x: &[f64]) -> Result<Vec<f64>> {
    mlp_forward_batch(params, config, &Mat::from_vec(1, x.len(), x.to_vec())).map(|m| m.data)
}

/// Mean squared error of the MLP over a fixed set of pairs.
pub struct MseLoss<'a> {
    pub config: MlpConfig,
    pub x: &'a Mat,
    pub y: &'a Mat,
}

impl Objective for MseLoss<'_> {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, theta: Var) -> Var {
        let blocks = self.config.layout().bind(g, theta);
        let x = g.constant(self.x);
        let y = g.constant(self.y);
        let pred = mlp_graph(g, &blocks, x);
        let r = g.sub(pred, y);
        let sq = g.square(r);
        g.mean(sq)
    }
}
