use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::features::AffineScaler;

/// Role of a pair within its task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    /// Inner-update or context data.
    Train,
    /// Meta-update or query data.
    Meta,
    /// Held-out evaluation data.
    Test,
}

/// Regression pairs (temperature, target vector) for one structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_id: usize,
    pub inputs: Vec<f64>,
    /// `n × d`.
    pub targets: Mat,
    pub tags: Vec<Split>,
}

impl TaskDataset {
    pub fn new(task_id: usize, inputs: Vec<f64>, targets: Mat, tags: Vec<Split>) -> Result<Self> {
        let t = Self {
            task_id,
            inputs,
            targets,
            tags,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.rows != self.inputs.len() || self.tags.len() != self.inputs.len() {
            return Err(Error::Dimension(format!(
                "task {}: {} inputs, {} target rows, {} tags",
                self.task_id,
                self.inputs.len(),
                self.targets.rows,
                self.tags.len()
            )));
        }
        if let Some(&t) = self.inputs.iter().find(|t| !(20.0..=40.0).contains(*t)) {
            return Err(Error::TemperatureOutOfRange {
                temperature: t,
                min: 20.0,
                max: 40.0,
            });
        }
        if self.targets.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("task {}: non-finite target", self.task_id)));
        }
        Ok(())
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tags[i] == split).collect()
    }

    /// Inputs as an `n × 1` matrix and targets of the selected rows.
    pub fn rows(&self, idx: &[usize]) -> (Mat, Mat) {
        let x = Mat::column(&idx.iter().map(|&i| self.inputs[i]).collect::<Vec<_>>());
        (x, self.targets.select_rows(idx))
    }

    pub fn split(&self, split: Split) -> (Mat, Mat) {
        self.rows(&self.indices(split))
    }
}

/// Input standardization plus target min-max scaling, fitted on a
/// training population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input: AffineScaler,
    pub target: AffineScaler,
}

/// Target range the bounded output layer is asked to reach.
pub const TARGET_RANGE: (f64, f64) = (-0.9, 0.9);

impl Normalizer {
    pub fn fit(tasks: &[TaskDataset]) -> Result<Self> {
        let Some(first) = tasks.first() else {
            return Err(Error::Data("no tasks to fit a normalizer on".into()));
        };
        let d = first.target_dim();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in tasks {
            if t.target_dim() != d {
                return Err(Error::Dimension(format!(
                    "task {} has target dimension {}, expected {}",
                    t.task_id,
                    t.target_dim(),
                    d
                )));
            }
            xs.extend_from_slice(&t.inputs);
            ys.extend_from_slice(&t.targets.data);
        }
        let n = xs.len();
        Ok(Self {
            input: AffineScaler::fit_standard(&Mat::column(&xs))?,
            target: AffineScaler::fit_minmax(&Mat::from_vec(n, d, ys), TARGET_RANGE.0, TARGET_RANGE.1)?,
        })
    }

    pub fn identity(target_dim: usize) -> Self {
        Self {
            input: AffineScaler::identity(1),
            target: AffineScaler::identity(target_dim),
        }
    }

    pub fn inputs(&self, x: &Mat) -> Result<Mat> {
        self.input.transform(x)
    }

    pub fn targets(&self, y: &Mat) -> Result<Mat> {
        self.target.transform(y)
    }

    pub fn predictions(&self, y: &Mat) -> Result<Mat> {
        self.target.inverse(y)
    }

    /// Selected rows in scaled units.
    pub fn scaled_rows(&self, task: &TaskDataset, idx: &[usize]) -> Result<Pairs> {
        let (x, y) = task.rows(idx);
        Ok(Pairs {
            x: self.inputs(&x)?,
            y: self.targets(&y)?,
        })
    }
}

/// A set of `(x, y)` rows in model units.
#[derive(Clone, Debug, PartialEq)]
pub struct Pairs {
    pub x: Mat,
    pub y: Mat,
}

impl Pairs {
    pub fn len(&self) -> usize {
        self.x.rows
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows == 0
    }

    pub fn select(&self, idx: &[usize]) -> Pairs {
        Pairs {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }
}
