use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnp::{cnp_predict, CnpConfig};
use super::dataset::{Normalizer, Pairs};
use super::mlp::{mlp_forward_batch, MlpConfig};
use crate::autodiff::{Layout, Mat, ParamVector};
use crate::error::{Error, Result};
use crate::features::{pca_inverse, pca_transform, PcaBasis};

pub const CHECKPOINT_FORMAT: &str = "popinf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Mlp(MlpConfig),
    Cnp(CnpConfig),
}

impl ModelSpec {
    pub fn layout(&self) -> Layout {
        match self {
            ModelSpec::Mlp(c) => c.layout(),
            ModelSpec::Cnp(c) => c.layout(),
        }
    }
}

/// Test-time gradient steps for an MLP checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub alpha: f64,
    pub steps: usize,
}

/// A trained model with everything needed to predict in original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub layout: Layout,
    pub values: Vec<f64>,
    pub seed: u64,
    pub normalizer: Normalizer,
    pub pca: Option<PcaBasis>,
    #[serde(default)]
    pub adaptation: Option<Adaptation>,
}

impl Checkpoint {
    pub fn new(model: ModelSpec, params: &ParamVector, seed: u64, normalizer: Normalizer, pca: Option<PcaBasis>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model,
            layout: params.layout.clone(),
            values: params.values.clone(),
            seed,
            normalizer,
            pca,
            adaptation: None,
        }
    }

    pub fn with_adaptation(mut self, alpha: f64, steps: usize) -> Self {
        self.adaptation = Some(Adaptation { alpha, steps });
        self
    }

    /// Width of the targets the checkpoint consumes and produces.
    pub fn target_dim(&self) -> usize {
        match &self.pca {
            Some(b) => b.dim(),
            None => self.normalizer.target.shift.len(),
        }
    }

    /// Predictions at `queries` given context pairs, all in original units.
    /// An MLP without adaptation settings ignores the context.
    pub fn predict(&self, context_x: &[f64], context_y: &Mat, queries: &[f64]) -> Result<Mat> {
        if context_y.rows != context_x.len() || context_y.cols != self.target_dim() {
            return Err(Error::Dimension(format!(
                "context is {}x{} for {} inputs, expected width {}",
                context_y.rows,
                context_y.cols,
                context_x.len(),
                self.target_dim()
            )));
        }
        let params = self.params()?;
        let y = match &self.pca {
            Some(b) if context_y.rows > 0 => pca_transform(b, context_y)?,
            Some(b) => Mat::zeros(0, b.n_components()),
            None => context_y.clone(),
        };
        let context = Pairs {
            x: self.normalizer.inputs(&Mat::column(context_x))?,
            y: if y.rows > 0 { self.normalizer.targets(&y)? } else { y },
        };
        let xq = self.normalizer.inputs(&Mat::column(queries))?;
        let out = match &self.model {
            ModelSpec::Cnp(c) => cnp_predict(&params, c, &context, &xq)?,
            ModelSpec::Mlp(c) => match self.adaptation {
                Some(a) if !context.is_empty() => {
                    let adapted = crate::maml::adapt(&params, c, &context, a.alpha, a.steps, None)?;
                    mlp_forward_batch(&adapted.params, c, &xq)?
                }
                _ => mlp_forward_batch(&params, c, &xq)?,
            },
        };
        let out = self.normalizer.predictions(&out)?;
        match &self.pca {
            Some(b) => pca_inverse(b, &out),
            None => Ok(out),
        }
    }

    pub fn params(&self) -> Result<ParamVector> {
        if self.layout != self.model.layout() {
            return Err(Error::Data("checkpoint layout does not match its model config".into()));
        }
        ParamVector::new(self.values.clone(), self.layout.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        c.params()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
