use crate::autodiff::Mat;
use crate::error::{Error, Result};

/// Normalized mean-squared error in percent, `100/(N σ²) Σ (ŷ - y)²`, with
/// `σ²` the population variance of the observations.
pub fn nmse(predictions: &[f64], observations: &[f64]) -> Result<f64> {
    if predictions.len() != observations.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    let n = observations.len();
    if n < 2 {
        return Err(Error::Data("NMSE needs at least 2 observations".into()));
    }
    let nf = n as f64;
    let mean = observations.iter().sum::<f64>() / nf;
    let var = observations.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / nf;
    if !(var > 0.0) {
        return Err(Error::DegenerateTarget);
    }
    let sse: f64 = predictions.iter().zip(observations).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(100.0 * sse / (nf * var))
}

/// Mean of per-column NMSEs.
pub fn nmse_multi(predictions: &Mat, observations: &Mat) -> Result<f64> {
    if !predictions.same_shape(observations) {
        return Err(Error::Dimension(format!(
            "predictions {}x{} vs observations {}x{}",
            predictions.rows, predictions.cols, observations.rows, observations.cols
        )));
    }
    let d = observations.cols;
    let mut total = 0.0;
    for j in 0..d {
        let p: Vec<f64> = (0..predictions.rows).map(|i| predictions.at(i, j)).collect();
        let o: Vec<f64> = (0..observations.rows).map(|i| observations.at(i, j)).collect();
        total += nmse(&p, &o)?;
    }
    Ok(total / d as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n - 1`); zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
