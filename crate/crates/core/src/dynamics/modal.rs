use nalgebra::{DMatrix, SymmetricEigen};

use super::SystemMatrices;
use crate::error::{Error, Result};

/// Undamped natural frequencies in Hz, ascending.
///
/// Solves `K φ = ω² M φ` for diagonal `M` through the symmetric matrix
/// `M^{-1/2} K M^{-1/2}`.
pub fn natural_frequencies(mats: &SystemMatrices) -> Result<Vec<f64>> {
    let n = mats.n_dof();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let m = mats.mass[(i, i)];
        if !(m > 0.0) {
            return Err(Error::InvalidStructure(format!("mass {i} not positive")));
        }
        for j in 0..n {
            if i != j && mats.mass[(i, j)] != 0.0 {
                return Err(Error::InvalidStructure("mass matrix must be diagonal".into()));
            }
        }
        inv_sqrt.push(1.0 / m.sqrt());
    }
    let a = DMatrix::from_fn(n, n, |i, j| mats.stiffness[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let eig = SymmetricEigen::new(a);
    let mut lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambdas.sort_by(f64::total_cmp);
    if lambdas[0] <= 0.0 {
        return Err(Error::InvalidStructure("stiffness not positive definite".into()));
    }
    Ok(lambdas
        .into_iter()
        .map(|l| l.sqrt() / (2.0 * std::f64::consts::PI))
        .collect())
}

/// Largest undamped angular frequency in rad/s.
pub fn max_angular_frequency(mats: &SystemMatrices) -> Result<f64> {
    let f = natural_frequencies(mats)?;
    Ok(2.0 * std::f64::consts::PI * f[f.len() - 1])
}
