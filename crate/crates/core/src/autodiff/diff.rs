use super::{Dual, Graph, Mat, Scalar, Var};
use crate::error::Result;

/// A differentiable scalar loss of a flat parameter vector.
///
/// `build` records the loss on `g` given the parameter node `theta`
/// (an `n × 1` column) and returns the `1 × 1` loss node. Implementations
/// must be generic so the same loss can be evaluated with duals.
pub trait Objective {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, theta: Var) -> Var;
}

impl<O: Objective + ?Sized> Objective for &O {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, theta: Var) -> Var {
        (**self).build(g, theta)
    }
}

pub fn value<O: Objective>(obj: &O, theta: &[f64]) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let t = g.leaf(Mat::column(theta));
    let loss = obj.build(&mut g, t);
    g.check_finite()?;
    Ok(g.scalar(loss))
}

pub fn value_and_grad<O: Objective>(obj: &O, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::<f64>::new();
    let t = g.leaf(Mat::column(theta));
    let loss = obj.build(&mut g, t);
    let adj = g.backward(loss)?;
    Ok((g.scalar(loss), adj.wrt(&g, t).data))
}

/// Gradient of `obj` at `theta`.
pub fn grad<O: Objective>(obj: &O, theta: &[f64]) -> Result<Vec<f64>> {
    value_and_grad(obj, theta).map(|(_, g)| g)
}

/// Loss, gradient and Hessian-vector product `H v` by forward-over-reverse.
pub fn hvp<O: Objective>(obj: &O, theta: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    assert_eq!(theta.len(), v.len(), "direction length");
    let mut g = Graph::<Dual>::new();
    let seeded: Vec<Dual> = theta.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
    let t = g.leaf(Mat::from_vec(theta.len(), 1, seeded));
    let loss = obj.build(&mut g, t);
    let adj = g.backward(loss)?;
    let d = adj.wrt(&g, t);
    Ok((
        g.scalar(loss).re,
        d.data.iter().map(|x| x.re).collect(),
        d.data.iter().map(|x| x.eps).collect(),
    ))
}

/// Outcome of differentiating through inner gradient steps.
#[derive(Clone, Debug)]
pub struct MetaGradient {
    /// Outer loss at the adapted parameters.
    pub outer_loss: f64,
    /// Parameters after the inner steps.
    pub adapted: Vec<f64>,
    /// `d outer(θ') / dθ`.
    pub gradient: Vec<f64>,
}

/// Gradient of `outer(θ')` with respect to the pre-update `θ`, where
/// `θ'` is reached by `k_inner` steps `θ ← θ - α ∇inner(θ)`.
///
/// The chain rule through each step multiplies by `I - α H_inner`; those
/// products are applied right-to-left as Hessian-vector products. With
/// `first_order` the Hessian terms are dropped and the result is simply
/// `∇outer(θ')`.
pub fn grad_through_update<O: Objective, I: Objective>(
    outer: &O,
    inner: &I,
    theta: &[f64],
    alpha: f64,
    k_inner: usize,
    first_order: bool,
) -> Result<MetaGradient> {
    assert!(k_inner >= 1, "at least one inner step");
    assert!(alpha > 0.0, "inner learning rate must be positive");
    let mut path = Vec::with_capacity(k_inner);
    let mut current = theta.to_vec();
    for _ in 0..k_inner {
        let g = grad(inner, &current)?;
        let next: Vec<f64> = current.iter().zip(&g).map(|(p, d)| p - alpha * d).collect();
        path.push(std::mem::replace(&mut current, next));
    }
    let (outer_loss, mut v) = value_and_grad(outer, &current)?;
    if !first_order {
        for point in path.iter().rev() {
            let (_, _, hv) = hvp(inner, point, &v)?;
            for (vi, h) in v.iter_mut().zip(&hv) {
                *vi -= alpha * h;
            }
        }
    }
    Ok(MetaGradient {
        outer_loss,
        adapted: current,
        gradient: v,
    })
}
