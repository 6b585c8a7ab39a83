use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the temperature law sets the stiffness of the affected springs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StiffnessMode {
    /// Affected springs take `q(T)` directly, identical across structures.
    Absolute,
    /// Affected springs take `k * q(T) / q(t_ref)`.
    Scaled { t_ref: f64 },
}

impl Default for StiffnessMode {
    fn default() -> Self {
        StiffnessMode::Scaled { t_ref: 20.0 }
    }
}

/// Quadratic stiffness law `q(T) = a2 T² + a1 T + a0` in N/m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureLaw {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    #[serde(default)]
    pub mode: StiffnessMode,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for TemperatureLaw {
    fn default() -> Self {
        Self {
            a2: -13.0,
            a1: 500.0,
            a0: 7200.0,
            mode: StiffnessMode::default(),
            t_min: 20.0,
            t_max: 40.0,
        }
    }
}

impl TemperatureLaw {
    pub fn eval(&self, t: f64) -> f64 {
        (self.a2 * t + self.a1) * t + self.a0
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    pub fn check_range(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::TemperatureOutOfRange {
                temperature: t,
                min: self.t_min,
                max: self.t_max,
            })
        }
    }

    /// Stiffness of an affected spring whose structure has base stiffness `k`.
    pub fn stiffness(&self, k: f64, t: f64) -> f64 {
        match self.mode {
            StiffnessMode::Absolute => self.eval(t),
            StiffnessMode::Scaled { t_ref } => k * self.eval(t) / self.eval(t_ref),
        }
    }
}

/// One member of the population: a grounded chain of lumped masses.
///
/// Spring and damper `i` connect mass `i` to mass `i - 1`; spring/damper 0
/// connects the first mass to ground. Indices are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub masses: Vec<f64>,
    pub dampers: Vec<f64>,
    pub base_stiffness: f64,
    pub temp_affected: Vec<usize>,
    pub law: TemperatureLaw,
}

impl StructureSpec {
    /// Uniform chain with the default temperature binding on the first three springs.
    pub fn uniform(n_dof: usize, mass: f64, damper: f64, k: f64, law: TemperatureLaw) -> Self {
        Self {
            masses: vec![mass; n_dof],
            dampers: vec![damper; n_dof],
            base_stiffness: k,
            temp_affected: (0..n_dof.min(3)).collect(),
            law,
        }
    }

    /// Five 1 kg masses with 2 N·s/m dampers.
    pub fn default_with_stiffness(k: f64) -> Self {
        Self::uniform(5, 1.0, 2.0, k, TemperatureLaw::default())
    }

    pub fn n_dof(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_dof();
        if n == 0 {
            return Err(Error::InvalidStructure("n_dof must be at least 1".into()));
        }
        if self.dampers.len() != n {
            return Err(Error::InvalidStructure(format!(
                "{} dampers for {} masses",
                self.dampers.len(),
                n
            )));
        }
        if let Some(i) = self.masses.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::InvalidStructure(format!("mass {i} must be positive")));
        }
        if let Some(i) = self.dampers.iter().position(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidStructure(format!("damper {i} must be non-negative")));
        }
        if !(self.base_stiffness > 0.0) {
            return Err(Error::InvalidStructure("base stiffness must be positive".into()));
        }
        if let Some(&i) = self.temp_affected.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidStructure(format!(
                "temperature-affected spring {i} out of range for {n} springs"
            )));
        }
        Ok(())
    }

    /// Spring stiffnesses at temperature `t`.
    pub fn spring_stiffnesses(&self, t: f64) -> Result<Vec<f64>> {
        let mut ks = vec![self.base_stiffness; self.n_dof()];
        for &i in &self.temp_affected {
            ks[i] = self.law.stiffness(self.base_stiffness, t);
        }
        for (i, &k) in ks.iter().enumerate() {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::InvalidPhysics {
                    spring: i,
                    temperature: t,
                    stiffness: k,
                });
            }
        }
        Ok(ks)
    }
}

/// Mass, damping and stiffness matrices of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn n_dof(&self) -> usize {
        self.mass.nrows()
    }

    /// Checks symmetry, positive diagonal mass and positive-definite stiffness.
    pub fn check(&self) -> Result<()> {
        let n = self.n_dof();
        for i in 0..n {
            if !(self.mass[(i, i)] > 0.0) {
                return Err(Error::InvalidStructure(format!("mass {i} not positive")));
            }
        }
        if self.stiffness.clone().cholesky().is_none() {
            return Err(Error::InvalidStructure("stiffness not positive definite".into()));
        }
        Ok(())
    }
}

fn chain_matrix(values: &[f64]) -> DMatrix<f64> {
    let n = values.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] += values[i];
        if i + 1 < n {
            let next = values[i + 1];
            m[(i, i)] += next;
            m[(i, i + 1)] -= next;
            m[(i + 1, i)] -= next;
        }
    }
    m
}

/// Builds M, C and K for `spec` at temperature `t`.
pub fn assemble_matrices(spec: &StructureSpec, t: f64) -> Result<SystemMatrices> {
    spec.validate()?;
    spec.law.check_range(t)?;
    let ks = spec.spring_stiffnesses(t)?;
    Ok(SystemMatrices {
        mass: DMatrix::from_diagonal(&DVector::from_column_slice(&spec.masses)),
        damping: chain_matrix(&spec.dampers),
        stiffness: chain_matrix(&ks),
    })
}
