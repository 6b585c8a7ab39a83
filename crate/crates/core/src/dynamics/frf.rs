use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SystemMatrices;
use crate::error::{Error, Result};

/// FRF magnitude of one response DOF for one excitation DOF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrfCurve {
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub excited_dof: usize,
    pub observed_dof: usize,
}

impl FrfCurve {
    pub fn new(
        freqs: Vec<f64>,
        magnitude: Vec<f64>,
        excited_dof: usize,
        observed_dof: usize,
    ) -> Result<Self> {
        if freqs.len() != magnitude.len() {
            return Err(Error::Dimension(format!(
                "{} frequencies for {} magnitudes",
                freqs.len(),
                magnitude.len()
            )));
        }
        check_grid(&freqs)?;
        Ok(Self {
            freqs,
            magnitude,
            excited_dof,
            observed_dof,
        })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

fn check_grid(freqs: &[f64]) -> Result<()> {
    if freqs.is_empty() {
        return Err(Error::Data("empty frequency grid".into()));
    }
    if freqs.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
        return Err(Error::Data("frequencies must be finite and non-negative".into()));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Data("frequencies must be strictly increasing".into()));
    }
    Ok(())
}

/// The full-FRF grid: 0.25 Hz to 64 Hz in 0.25 Hz steps (256 lines).
pub fn default_frf_grid() -> Vec<f64> {
    (1..=256).map(|i| i as f64 * 0.25).collect()
}

/// Receptance magnitude by solving `(K - ω²M + iωC) h = e_excited` per line.
pub fn frf_direct(
    mats: &SystemMatrices,
    excited_dof: usize,
    observed_dof: usize,
    freqs: &[f64],
) -> Result<FrfCurve> {
    let n = mats.n_dof();
    if excited_dof >= n || observed_dof >= n {
        return Err(Error::Dimension(format!(
            "dof index out of range for {n}-DOF system"
        )));
    }
    check_grid(freqs)?;
    let mut rhs = DVector::<Complex<f64>>::zeros(n);
    rhs[excited_dof] = Complex::new(1.0, 0.0);
    let mut magnitude = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let w = 2.0 * std::f64::consts::PI * f;
        let a = DMatrix::from_fn(n, n, |i, j| {
            Complex::new(
                mats.stiffness[(i, j)] - w * w * mats.mass[(i, j)],
                w * mats.damping[(i, j)],
            )
        });
        let h = a
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularSystem { frequency: f })?;
        let mag = h[observed_dof].norm();
        if !mag.is_finite() {
            return Err(Error::SingularSystem { frequency: f });
        }
        magnitude.push(mag);
    }
    Ok(FrfCurve {
        freqs: freqs.to_vec(),
        magnitude,
        excited_dof,
        observed_dof,
    })
}

/// Magnitude at the grid line nearest `f_target`; ties go to the lower line.
pub fn spectral_line(curve: &FrfCurve, f_target: f64) -> Result<f64> {
    let (lo, hi) = (curve.freqs[0], curve.freqs[curve.len() - 1]);
    if !(f_target >= lo && f_target <= hi) {
        return Err(Error::FrequencyOutOfRange {
            target: f_target,
            min: lo,
            max: hi,
        });
    }
    let upper = curve.freqs.partition_point(|&f| f < f_target);
    let idx = if upper == 0 {
        0
    } else if upper == curve.len() {
        curve.len() - 1
    } else {
        let below = f_target - curve.freqs[upper - 1];
        let above = curve.freqs[upper] - f_target;
        if above < below {
            upper
        } else {
            upper - 1
        }
    };
    Ok(curve.magnitude[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{assemble_matrices, StructureSpec};

    fn one_dof(m: f64, c: f64, k: f64) -> SystemMatrices {
        SystemMatrices {
            mass: DMatrix::from_element(1, 1, m),
            damping: DMatrix::from_element(1, 1, c),
            stiffness: DMatrix::from_element(1, 1, k),
        }
    }

    #[test]
    fn one_dof_at_resonance() {
        let mats = one_dof(1.0, 2.0, 10_000.0);
        let w = 100.0;
        let f = w / (2.0 * std::f64::consts::PI);
        let c = frf_direct(&mats, 0, 0, &[f]).unwrap();
        let exact = 1.0 / (w * 2.0);
        assert!((c.magnitude[0] - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn static_compliance() {
        let spec = StructureSpec::default_with_stiffness(9_000.0);
        let mats = assemble_matrices(&spec, 25.0).unwrap();
        let inv = mats.stiffness.clone().try_inverse().unwrap();
        let c = frf_direct(&mats, 0, 2, &[0.0]).unwrap();
        assert!((c.magnitude[0] - inv[(2, 0)].abs()).abs() < 1e-18);
    }

    #[test]
    fn singular_at_zero_frequency() {
        let mats = one_dof(1.0, 1.0, 0.0);
        assert!(matches!(
            frf_direct(&mats, 0, 0, &[0.0, 1.0]),
            Err(Error::SingularSystem { frequency }) if frequency == 0.0
        ));
    }

    #[test]
    fn grid_properties() {
        let g = default_frf_grid();
        assert_eq!(g.len(), 256);
        assert_eq!(g[0], 0.25);
        assert_eq!(g[255], 64.0);
        assert!(g.contains(&1.0) && g.contains(&50.0));
    }

    #[test]
    fn spectral_line_rules() {
        let c = FrfCurve::new(vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0], 0, 0).unwrap();
        assert_eq!(spectral_line(&c, 2.0).unwrap(), 20.0);
        assert_eq!(spectral_line(&c, 2.4).unwrap(), 20.0);
        assert_eq!(spectral_line(&c, 2.5).unwrap(), 20.0);
        assert_eq!(spectral_line(&c, 2.6).unwrap(), 30.0);
        assert!(spectral_line(&c, 3.5).is_err());
        assert!(spectral_line(&c, 0.5).is_err());
    }

    #[test]
    fn rejects_unordered_grid() {
        let mats = one_dof(1.0, 1.0, 1.0);
        assert!(frf_direct(&mats, 0, 0, &[2.0, 1.0]).is_err());
        assert!(frf_direct(&mats, 0, 0, &[]).is_err());
    }
}
