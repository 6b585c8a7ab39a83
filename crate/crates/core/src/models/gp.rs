use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use crate::autodiff::Mat;
use crate::error::{Error, Result};

/// Squared-exponential kernel hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub signal_var: f64,
    pub length_scale: f64,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn from_log(p: [f64; 3]) -> Self {
        Self {
            signal_var: p[0].exp(),
            length_scale: p[1].exp(),
            noise_var: p[2].exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Lower bound on the noise variance.
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            iterations: 200,
            learning_rate: 0.05,
            noise_floor: 1e-8,
            seed: 0,
        }
    }
}

pub const JITTER_START: f64 = 1e-9;
pub const JITTER_MAX: f64 = 1e-5;

/// Zero-mean GP regressor on scalar inputs.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub hyper: GpHyper,
    /// Diagonal jitter that made the factorization succeed.
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

pub fn se_kernel(a: f64, b: f64, h: &GpHyper) -> f64 {
    let d = a - b;
    h.signal_var * (-0.5 * d * d / (h.length_scale * h.length_scale)).exp()
}

fn signal_matrix(x: &[f64], h: &GpHyper) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), x.len(), |i, j| se_kernel(x[i], x[j], h))
}

fn factor(kf: &DMatrix<f64>, noise_var: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_START;
    loop {
        let mut k = kf.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += noise_var + jitter;
        }
        if let Some(c) = Cholesky::new(k) {
            return Ok((c, jitter));
        }
        if jitter >= JITTER_MAX {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        jitter *= 10.0;
    }
}

fn check_data(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyContext);
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("GP data contains non-finite values".into()));
    }
    Ok(())
}

/// Builds the posterior for fixed hyperparameters.
pub fn gp_with_hyper(x: &[f64], y: &[f64], hyper: GpHyper) -> Result<GpModel> {
    check_data(x, y)?;
    let (chol, jitter) = factor(&signal_matrix(x, &hyper), hyper.noise_var)?;
    let alpha = chol.solve(&DVector::from_column_slice(y));
    Ok(GpModel {
        inputs: x.to_vec(),
        targets: y.to_vec(),
        hyper,
        jitter,
        chol,
        alpha,
    })
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln σ_f², ln ℓ, ln σ_n²)`.
pub fn log_marginal_likelihood(x: &[f64], y: &[f64], hyper: &GpHyper) -> Result<(f64, [f64; 3])> {
    check_data(x, y)?;
    let n = x.len();
    let kf = signal_matrix(x, hyper);
    let (chol, _) = factor(&kf, hyper.noise_var)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet: f64 = chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum();
    let lml = -0.5 * yv.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let kinv = chol.inverse();
    let ell2 = hyper.length_scale * hyper.length_scale;
    let mut g = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let d = x[i] - x[j];
            g[0] += w * kf[(i, j)];
            g[1] += w * kf[(i, j)] * d * d / ell2;
        }
        g[2] += (alpha[i] * alpha[i] - kinv[(i, i)]) * hyper.noise_var;
    }
    Ok((lml, g.map(|v| 0.5 * v)))
}

struct Bounds {
    lo: [f64; 3],
    hi: [f64; 3],
}

fn bounds(x: &[f64], y: &[f64], noise_floor: f64) -> Bounds {
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = if span > 0.0 { span } else { 1.0 };
    let scale = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    Bounds {
        lo: [(scale * 1e-6).ln(), (span * 1e-2).ln(), noise_floor.ln()],
        hi: [(scale * 1e4).ln(), (span * 1e3).ln(), (scale * 10.0).max(noise_floor).ln()],
    }
}

/// Multi-start gradient ascent on the log marginal likelihood.
pub fn gp_fit(x: &[f64], y: &[f64], opts: &GpFitOptions) -> Result<GpModel> {
    check_data(x, y)?;
    let b = bounds(x, y, opts.noise_floor);
    let clamp = |p: &mut [f64; 3]| {
        for k in 0..3 {
            p[k] = p[k].clamp(b.lo[k], b.hi[k]);
        }
    };
    let mut rng = crate::rng::stream(opts.seed, &[crate::rng::tag("gp-restarts")]);
    let mut best: Option<(f64, GpHyper)> = None;
    let mut last_err = None;
    for r in 0..opts.restarts.max(1) {
        // The first start sits mid-range; the rest are uniform in log space.
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = if r == 0 {
                0.5 * (b.lo[k] + b.hi[k])
            } else {
                rng.random_range(b.lo[k]..=b.hi[k])
            };
        }
        if r == 0 {
            p[2] = (b.hi[2] - 3.0).max(b.lo[2]);
        }
        let mut adam = Adam::new(3, opts.learning_rate);
        for _ in 0..=opts.iterations {
            let h = GpHyper::from_log(p);
            match log_marginal_likelihood(x, y, &h) {
                Ok((lml, g)) if lml.is_finite() => {
                    if best.is_none_or(|(bl, _)| lml > bl) {
                        best = Some((lml, h));
                    }
                    let neg = [-g[0], -g[1], -g[2]];
                    adam.step(&mut p, &neg);
                    clamp(&mut p);
                }
                Ok(_) => break,
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            }
        }
    }
    match best {
        Some((_, h)) => gp_with_hyper(x, y, h),
        None => Err(last_err.unwrap_or(Error::NotPositiveDefinite { jitter: JITTER_MAX })),
    }
}

impl GpModel {
    /// Posterior mean and (latent) variance at each query.
    pub fn predict(&self, queries: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.inputs.len();
        let mut means = Vec::with_capacity(queries.len());
        let mut vars = Vec::with_capacity(queries.len());
        for &q in queries {
            let ks = DVector::from_iterator(n, self.inputs.iter().map(|&x| se_kernel(x, q, &self.hyper)));
            means.push(ks.dot(&self.alpha));
            let mut v = ks.clone();
            self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
            vars.push((self.hyper.signal_var - v.norm_squared()).max(0.0));
        }
        (means, vars)
    }

    pub fn effective_noise_var(&self) -> f64 {
        self.hyper.noise_var + self.jitter
    }
}

pub fn gp_predict(model: &GpModel, queries: &[f64]) -> (Vec<f64>, Vec<f64>) {
    model.predict(queries)
}

/// Independent GPs, one per target column.
pub fn gp_fit_multi(x: &[f64], y: &Mat, opts: &GpFitOptions) -> Result<Vec<GpModel>> {
    (0..y.cols)
        .map(|j| {
            let col: Vec<f64> = (0..y.rows).map(|i| y.at(i, j)).collect();
            gp_fit(x, &col, opts)
        })
        .collect()
}

/// Means of [`gp_fit_multi`] models as a `q × d` matrix.
pub fn gp_predict_multi(models: &[GpModel], queries: &[f64]) -> Mat {
    let d = models.len();
    let mut out = Mat::zeros(queries.len(), d);
    for (j, m) in models.iter().enumerate() {
        let (mu, _) = m.predict(queries);
        for (i, v) in mu.into_iter().enumerate() {
            out.data[i * d + j] = v;
        }
    }
    out
}
