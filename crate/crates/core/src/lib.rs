//! Population-informed few-shot regression for simulated structural populations.
//!
//! A population of lumped-mass chains whose springs soften with temperature is
//! simulated ([`dynamics`]); models are then trained across the population so
//! that a new structure can be predicted from a handful of samples. Two
//! meta-learners are provided, MAML over a tanh MLP ([`maml`]) and a
//! conditional neural process ([`models::cnp`]), along with a per-structure
//! Gaussian-process baseline ([`models::gp`]). [`experiments`] runs the full
//! train/validate/test protocol and writes CSV/SVG reports.

pub mod autodiff;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod features;
pub mod maml;
pub mod models;
pub mod rng;

pub use error::{Error, Result};
