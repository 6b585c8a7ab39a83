//! Regressors: a tanh MLP (the MAML base learner), a conditional neural
//! process, and a per-structure Gaussian process.

pub mod checkpoint;
pub mod cnp;
pub mod dataset;
pub mod gp;
pub mod mlp;
pub mod optim;

pub use checkpoint::{Adaptation, Checkpoint, ModelSpec};
pub use cnp::{cnp_init, cnp_predict, train_cnp, CnpConfig, CnpLoss, CnpTrainConfig, CnpTrained, Episode};
pub use dataset::{Normalizer, Pairs, Split, TaskDataset};
pub use gp::{gp_fit, gp_fit_multi, gp_predict, gp_predict_multi, gp_with_hyper, log_marginal_likelihood, GpFitOptions, GpHyper, GpModel};
pub use mlp::{mlp_forward, mlp_forward_batch, mlp_init, MlpConfig, MseLoss};
pub use optim::{Adam, Optimizer, OptimizerKind};
