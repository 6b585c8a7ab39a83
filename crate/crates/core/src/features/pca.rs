use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};

/// Principal subspace of a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `d × r`, orthonormal columns.
    pub components: Mat,
    /// Fraction of total variance carried by each kept component.
    pub explained: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.components.rows
    }

    pub fn n_components(&self) -> usize {
        self.components.cols
    }
}

struct Spectrum {
    mean: Vec<f64>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    order: Vec<usize>,
    rank: usize,
}

fn spectrum(samples: &Mat) -> Result<Spectrum> {
    let (n, d) = (samples.rows, samples.cols);
    if n < 2 || d == 0 {
        return Err(Error::Data(format!("PCA needs at least 2 samples, got {n}")));
    }
    if samples.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("PCA samples contain non-finite values".into()));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(samples.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| samples.at(i, j) - mean[j]);
    let cov = centred.tr_mul(&centred) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let values: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let top = values[order[0]];
    let tol = top * (n.max(d) as f64) * f64::EPSILON * 10.0;
    let rank = values.iter().filter(|&&v| v > tol).count();
    Ok(Spectrum {
        mean,
        values,
        vectors: eig.eigenvectors,
        order,
        rank,
    })
}

/// Fits an `r`-component basis. Each component is signed so that its
/// largest-magnitude entry is positive.
pub fn pca_fit(samples: &Mat, r: usize) -> Result<PcaBasis> {
    let s = spectrum(samples)?;
    if r == 0 || r > s.rank {
        return Err(Error::RankDeficient { requested: r, rank: s.rank });
    }
    let d = samples.cols;
    let total: f64 = s.values.iter().sum();
    let mut components = Mat::zeros(d, r);
    let mut explained = Vec::with_capacity(r);
    for (c, &idx) in s.order.iter().take(r).enumerate() {
        let col = s.vectors.column(idx);
        let mut lead = 0;
        for i in 1..d {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components.data[i * r + c] = sign * col[i];
        }
        explained.push(s.values[idx] / total);
    }
    Ok(PcaBasis {
        mean: s.mean,
        components,
        explained,
    })
}

/// Smallest `r` whose components explain at least `threshold` of the variance,
/// optionally capped.
pub fn components_for_variance(samples: &Mat, threshold: f64, cap: Option<usize>) -> Result<usize> {
    let s = spectrum(samples)?;
    let total: f64 = s.values.iter().sum();
    let mut acc = 0.0;
    let mut r = s.rank;
    for (k, &idx) in s.order.iter().take(s.rank).enumerate() {
        acc += s.values[idx] / total;
        if acc >= threshold {
            r = k + 1;
            break;
        }
    }
    Ok(cap.map_or(r, |c| r.min(c)).max(1))
}

fn check_cols(m: &Mat, expected: usize) -> Result<()> {
    if m.cols != expected {
        return Err(Error::Dimension(format!("expected {expected} columns, got {}", m.cols)));
    }
    Ok(())
}

/// Rows `x ↦ Pᵀ(x - μ)`.
pub fn pca_transform(basis: &PcaBasis, x: &Mat) -> Result<Mat> {
    check_cols(x, basis.dim())?;
    let mut centred = x.clone();
    for (k, v) in centred.data.iter_mut().enumerate() {
        *v -= basis.mean[k % x.cols];
    }
    Ok(centred.matmul(&basis.components))
}

/// Rows `z ↦ P z + μ`.
pub fn pca_inverse(basis: &PcaBasis, z: &Mat) -> Result<Mat> {
    check_cols(z, basis.n_components())?;
    let mut out = z.matmul_nt(&basis.components);
    for (k, v) in out.data.iter_mut().enumerate() {
        *v += basis.mean[k % basis.dim()];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_in_plane() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, -2.0 * i as f64 + 1.0]).collect();
        let x = Mat::from_rows(&rows);
        let b = pca_fit(&x, 1).unwrap();
        assert!((b.explained[0] - 1.0).abs() < 1e-12);
        let p = &b.components.data;
        assert!((p[1].abs() - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!(p[1] > 0.0, "largest entry positive");
        assert!(matches!(pca_fit(&x, 2), Err(Error::RankDeficient { rank: 1, .. })));
        let back = pca_inverse(&b, &pca_transform(&b, &x).unwrap()).unwrap();
        for (a, c) in back.data.iter().zip(&x.data) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_maps_to_origin() {
        let x = Mat::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0], vec![3.0, 1.0, 0.0], vec![1.0, 5.0, 1.0]]);
        let b = pca_fit(&x, 2).unwrap();
        let z = pca_transform(&b, &Mat::from_rows(&[b.mean.clone()])).unwrap();
        assert!(z.data.iter().all(|v| v.abs() < 1e-14));
        assert!(b.explained[0] >= b.explained[1]);
        assert_eq!(components_for_variance(&x, 0.0, None).unwrap(), 1);
        assert_eq!(components_for_variance(&x, 1.0, Some(2)).unwrap(), 2);
    }
}
