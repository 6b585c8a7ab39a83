use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};

/// Column-wise `x ↦ (x - shift) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineScaler {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

fn check_rows(data: &Mat) -> Result<()> {
    if data.rows == 0 {
        return Err(Error::Data("cannot fit a scaler on zero rows".into()));
    }
    if data.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("scaler input contains non-finite values".into()));
    }
    Ok(())
}

impl AffineScaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Zero mean and unit (population) variance per column.
    /// Constant columns keep unit scale.
    pub fn fit_standard(data: &Mat) -> Result<Self> {
        check_rows(data)?;
        let n = data.rows as f64;
        let mut shift = vec![0.0; data.cols];
        let mut scale = vec![1.0; data.cols];
        for j in 0..data.cols {
            let mean = (0..data.rows).map(|i| data.at(i, j)).sum::<f64>() / n;
            let var = (0..data.rows).map(|i| (data.at(i, j) - mean).powi(2)).sum::<f64>() / n;
            shift[j] = mean;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Ok(Self { shift, scale })
    }

    /// Maps each column's `[min, max]` onto `[lo, hi]`.
    pub fn fit_minmax(data: &Mat, lo: f64, hi: f64) -> Result<Self> {
        check_rows(data)?;
        assert!(hi > lo, "empty target interval");
        let mut shift = vec![0.0; data.cols];
        let mut scale = vec![1.0; data.cols];
        for j in 0..data.cols {
            let col = (0..data.rows).map(|i| data.at(i, j));
            let min = col.clone().fold(f64::INFINITY, f64::min);
            let max = col.fold(f64::NEG_INFINITY, f64::max);
            let s = if max > min { (max - min) / (hi - lo) } else { 1.0 };
            scale[j] = s;
            shift[j] = min - lo * s;
        }
        Ok(Self { shift, scale })
    }

    fn check_dim(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::Dimension(format!(
                "scaler fitted on {} columns, got {}",
                self.dim(),
                cols
            )));
        }
        Ok(())
    }

    pub fn transform(&self, data: &Mat) -> Result<Mat> {
        self.check_dim(data.cols)?;
        let mut out = data.clone();
        for (k, v) in out.data.iter_mut().enumerate() {
            let j = k % data.cols;
            *v = (*v - self.shift[j]) / self.scale[j];
        }
        Ok(out)
    }

    pub fn inverse(&self, data: &Mat) -> Result<Mat> {
        self.check_dim(data.cols)?;
        let mut out = data.clone();
        for (k, v) in out.data.iter_mut().enumerate() {
            let j = k % data.cols;
            *v = *v * self.scale[j] + self.shift[j];
        }
        Ok(out)
    }

    /// Single-column convenience.
    pub fn transform_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.transform(&Mat::column(values)).map(|m| m.data)
    }

    pub fn inverse_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.inverse(&Mat::column(values)).map(|m| m.data)
    }
}
