//! Reverse-mode differentiation over flat parameter vectors.
//!
//! Losses are recorded on a [`Graph`] of matrix-valued nodes. Evaluating the
//! same graph over [`Dual`] numbers yields Hessian-vector products, which is
//! how [`grad_through_update`] differentiates through inner gradient steps
//! without forming a Hessian.

mod diff;
mod param;
mod scalar;
mod tape;
mod tensor;

pub use diff::{grad, grad_through_update, hvp, value, value_and_grad, MetaGradient, Objective};
pub use param::{Block, Layout, ParamVector};
pub use scalar::{Dual, Scalar};
pub use tape::{Adjoints, Graph, Var};
pub use tensor::Mat;
