use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{StructureSpec, TemperatureLaw};
use crate::error::{Error, Result};
use crate::maml::MamlConfig;
use crate::models::{CnpTrainConfig, GpFitOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// Driving-point receptance at 1 Hz.
    #[serde(rename = "line-1hz")]
    Line1Hz,
    /// Driving-point receptance at 50 Hz.
    #[serde(rename = "line-50hz")]
    Line50Hz,
    /// PCA coordinates of the full driving-point FRF.
    FullFrf,
}

impl Problem {
    pub const ALL: [Problem; 3] = [Problem::Line1Hz, Problem::Line50Hz, Problem::FullFrf];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Line1Hz => "line-1hz",
            Problem::Line50Hz => "line-50hz",
            Problem::FullFrf => "full-frf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Target line for the spectral-line problems.
    pub fn line(self) -> Option<f64> {
        match self {
            Problem::Line1Hz => Some(1.0),
            Problem::Line50Hz => Some(50.0),
            Problem::FullFrf => None,
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Maml,
    Cnp,
    Gp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Maml, Method::Cnp, Method::Gp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Maml => "maml",
            Method::Cnp => "cnp",
            Method::Gp => "gp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Chain layout shared by every population member; only `k` varies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureTemplate {
    pub n_dof: usize,
    pub mass: f64,
    pub damper: f64,
    /// Zero-based indices of the temperature-dependent springs.
    pub temp_affected: Vec<usize>,
    pub law: TemperatureLaw,
    pub excited_dof: usize,
    pub observed_dof: usize,
}

impl Default for StructureTemplate {
    fn default() -> Self {
        Self {
            n_dof: 5,
            mass: 1.0,
            damper: 2.0,
            temp_affected: vec![0, 1, 2],
            law: TemperatureLaw::default(),
            excited_dof: 0,
            observed_dof: 0,
        }
    }
}

impl StructureTemplate {
    pub fn build(&self, k: f64) -> StructureSpec {
        StructureSpec {
            masses: vec![self.mass; self.n_dof],
            dampers: vec![self.damper; self.n_dof],
            base_stiffness: k,
            temp_affected: self.temp_affected.clone(),
            law: self.law.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_validation: usize,
    pub n_test: usize,
    /// Evenly spaced temperatures per training structure.
    pub n_train_samples: usize,
    /// Random query temperatures per test structure.
    pub n_query: usize,
    /// Size of the grid that context temperatures are drawn from.
    pub context_grid: usize,
    /// Context size used on the validation structure.
    pub validation_context: usize,
    pub n_repetitions: usize,
    pub train_seed: u64,
    pub test_seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            k_min: 8000.0,
            k_max: 12000.0,
            t_min: 20.0,
            t_max: 40.0,
            n_validation: 1,
            n_test: 50,
            n_train_samples: 100,
            n_query: 200,
            context_grid: 200,
            validation_context: 5,
            n_repetitions: 5,
            train_seed: 1,
            test_seed: 2,
        }
    }
}

/// One problem's slice of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemPlan {
    pub problem: Problem,
    pub n_train: Vec<usize>,
    pub contexts: Vec<usize>,
    pub methods: Vec<Method>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub hidden_sizes: Vec<usize>,
    pub n_inits: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![10, 40, 70, 100],
            n_inits: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnpSection {
    pub r: usize,
    pub hidden: usize,
    pub seed: u64,
    pub train: CnpTrainConfig,
}

impl Default for CnpSection {
    fn default() -> Self {
        Self {
            r: 32,
            hidden: 64,
            seed: 0,
            train: CnpTrainConfig::default(),
        }
    }
}

/// Magnitude scale of full-FRF samples before compression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrfScale {
    Linear,
    Log10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcaSection {
    pub magnitude: FrfScale,
    /// Fraction of training variance the kept components must explain.
    pub variance: f64,
    /// Upper bound on the number of components used as targets.
    pub cap: Option<usize>,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self {
            magnitude: FrfScale::Log10,
            variance: 0.999,
            cap: Some(10),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Preset::Desk),
            "paper" => Some(Preset::Paper),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub structure: StructureTemplate,
    pub population: PopulationConfig,
    pub problems: Vec<ProblemPlan>,
    pub maml: MamlConfig,
    pub selection: SelectionConfig,
    pub cnp: CnpSection,
    pub gp: GpFitOptions,
    pub pca: PcaSection,
    /// Test structures per repetition whose full prediction curves are exported.
    pub fit_examples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let sweep: Vec<usize> = (2..=9).collect();
        let all = Method::ALL.to_vec();
        match preset {
            Preset::Desk => Self {
                seed: 0,
                structure: StructureTemplate::default(),
                population: PopulationConfig::default(),
                problems: vec![
                    ProblemPlan {
                        problem: Problem::Line1Hz,
                        n_train: sweep,
                        contexts: vec![1, 3],
                        methods: all.clone(),
                    },
                    ProblemPlan {
                        problem: Problem::Line50Hz,
                        n_train: vec![9],
                        contexts: vec![1, 3],
                        methods: all.clone(),
                    },
                    ProblemPlan {
                        problem: Problem::FullFrf,
                        n_train: vec![9],
                        contexts: vec![1, 3],
                        methods: all,
                    },
                ],
                maml: MamlConfig::default(),
                selection: SelectionConfig::default(),
                cnp: CnpSection::default(),
                gp: GpFitOptions::default(),
                pca: PcaSection::default(),
                fit_examples: 1,
            },
            Preset::Paper => Self {
                seed: 0,
                structure: StructureTemplate::default(),
                population: PopulationConfig {
                    n_test: 200,
                    n_repetitions: 50,
                    ..PopulationConfig::default()
                },
                problems: Problem::ALL
                    .iter()
                    .map(|&problem| ProblemPlan {
                        problem,
                        n_train: sweep.clone(),
                        contexts: vec![1, 3, 5, 7],
                        methods: all.clone(),
                    })
                    .collect(),
                maml: MamlConfig {
                    epochs: 2000,
                    ..MamlConfig::default()
                },
                selection: SelectionConfig {
                    hidden_sizes: (1..=10).map(|i| 10 * i).collect(),
                    n_inits: 5,
                },
                cnp: CnpSection::default(),
                gp: GpFitOptions::default(),
                pca: PcaSection::default(),
                fit_examples: 1,
            },
        }
    }

    /// Parses TOML; absent fields take the desk preset's values.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn max_train(&self) -> usize {
        self.problems
            .iter()
            .flat_map(|p| p.n_train.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.population;
        let law = &self.structure.law;
        if !(p.k_min > 0.0 && p.k_max >= p.k_min) {
            return Err(Error::config("population.k_min", "need 0 < k_min <= k_max"));
        }
        if !law.contains(p.t_min) {
            return Err(Error::config(
                "population.t_min",
                format!("{} outside [{}, {}]", p.t_min, law.t_min, law.t_max),
            ));
        }
        if !law.contains(p.t_max) || p.t_max <= p.t_min {
            return Err(Error::config(
                "population.t_max",
                format!("{} outside ({}, {}]", p.t_max, p.t_min, law.t_max),
            ));
        }
        if p.n_test == 0 {
            return Err(Error::config("population.n_test", "must be at least 1"));
        }
        if p.n_validation != 1 {
            return Err(Error::config("population.n_validation", "exactly one validation structure is supported"));
        }
        if p.n_query < 2 {
            return Err(Error::config("population.n_query", "must be at least 2"));
        }
        if p.n_train_samples < 2 {
            return Err(Error::config("population.n_train_samples", "must be at least 2"));
        }
        if p.validation_context == 0 || p.validation_context > p.context_grid {
            return Err(Error::config("population.validation_context", "must be in 1..=context_grid"));
        }
        if p.n_repetitions == 0 {
            return Err(Error::config("population.n_repetitions", "must be at least 1"));
        }
        for (i, plan) in self.problems.iter().enumerate() {
            if let Some(&c) = plan.contexts.iter().find(|&&c| c == 0 || c > p.context_grid) {
                return Err(Error::config(
                    format!("problems[{i}].contexts"),
                    format!("context size {c} must be in 1..={}", p.context_grid),
                ));
            }
            if plan.methods.iter().any(|m| *m != Method::Gp) && plan.n_train.iter().any(|&n| n == 0) {
                return Err(Error::config(format!("problems[{i}].n_train"), "must be at least 1"));
            }
            if plan.contexts.is_empty() || plan.methods.is_empty() {
                return Err(Error::config(format!("problems[{i}]"), "contexts and methods must be non-empty"));
            }
        }
        let s = &self.structure;
        if s.excited_dof >= s.n_dof || s.observed_dof >= s.n_dof {
            return Err(Error::config("structure.excited_dof", "DOF index out of range"));
        }
        s.build(p.k_min).validate().map_err(|e| Error::config("structure", e.to_string()))?;
        for t in [p.t_min, p.t_max] {
            s.build(p.k_min)
                .spring_stiffnesses(t)
                .map_err(|e| Error::config("structure.law", e.to_string()))?;
        }
        self.maml.validate()?;
        if self.selection.hidden_sizes.is_empty() || self.selection.hidden_sizes.contains(&0) {
            return Err(Error::config("selection.hidden_sizes", "need at least one positive size"));
        }
        if self.selection.n_inits == 0 {
            return Err(Error::config("selection.n_inits", "must be at least 1"));
        }
        let needed = self.maml.n_inner_samples + self.maml.n_meta_samples;
        if needed > p.n_train_samples {
            return Err(Error::config(
                "maml.n_inner_samples",
                format!("inner + meta samples ({needed}) exceed n_train_samples ({})", p.n_train_samples),
            ));
        }
        if !(self.cnp.train.learning_rate > 0.0) {
            return Err(Error::config("cnp.train.learning_rate", "must be positive"));
        }
        if self.cnp.r == 0 || self.cnp.hidden == 0 || self.cnp.train.max_context == 0 {
            return Err(Error::config("cnp", "sizes must be positive"));
        }
        if !(self.pca.variance > 0.0 && self.pca.variance <= 1.0) {
            return Err(Error::config("pca.variance", "must be in (0, 1]"));
        }
        if self.gp.restarts == 0 || !(self.gp.noise_floor > 0.0) {
            return Err(Error::config("gp", "need restarts >= 1 and a positive noise floor"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::Desk, Preset::Paper] {
            let c = ExperimentConfig::preset(p);
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }

    #[test]
    fn bad_temperature_names_field() {
        let err = ExperimentConfig::from_toml("[population]\nt_max = 45.0\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "population.t_max"),
            e => panic!("unexpected {e}"),
        }
        let err = ExperimentConfig::from_toml("[population\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field.starts_with("line")));
    }
}
