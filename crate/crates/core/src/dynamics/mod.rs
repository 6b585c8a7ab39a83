//! Lumped-mass chains with temperature-dependent springs.
//!
//! Frequency response functions come either from the closed-form receptance
//! ([`frf_direct`]) or from white-noise RK4 simulation followed by the averaged
//! H1 estimator ([`simulate_time_domain`], [`estimate_frf_h1`]).

mod frf;
mod modal;
mod structure;
mod timesim;
mod welch;

pub use frf::{default_frf_grid, frf_direct, spectral_line, FrfCurve};
pub use modal::{max_angular_frequency, natural_frequencies};
pub use structure::{assemble_matrices, StiffnessMode, StructureSpec, SystemMatrices, TemperatureLaw};
pub use timesim::{simulate_from, simulate_time_domain, white_noise, TimeHistory};
pub use welch::{estimate_frf_h1, H1Estimate, WelchConfig};

/// Driving-point receptance magnitude of DOF 0 at a single frequency.
pub fn driving_point_line(spec: &StructureSpec, temperature: f64, freq: f64) -> crate::Result<f64> {
    let mats = assemble_matrices(spec, temperature)?;
    Ok(frf_direct(&mats, 0, 0, &[freq])?.magnitude[0])
}
