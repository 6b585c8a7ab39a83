//! Brute-force reference computations.
//!
//! Everything here is written from scratch on plain slices and nested
//! `Vec`s, with no dependency on `popinf-core`, so the production code can be
//! checked against arithmetic it does not share. Performance is irrelevant.

/// Tolerances shared by the oracle-backed tests.
pub mod tol {
    /// First-order finite-difference gradient checks (relative).
    pub const FD_GRADIENT: f64 = 1e-6;
    /// Finite differences of a gradient-through-update objective (relative).
    pub const FD_THROUGH_UPDATE: f64 = 1e-4;
    /// Dense linear algebra comparisons.
    pub const LINALG: f64 = 1e-8;
}

/// Central-difference gradient of `f` at `theta`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut probe = theta.to_vec();
    let mut out = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        out[i] = (up - down) / (2.0 * h);
    }
    out
}

/// Central difference of `f` along a single coordinate.
pub fn fd_partial<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], index: usize, h: f64) -> f64 {
    let mut probe = theta.to_vec();
    probe[index] = theta[index] + h;
    let up = f(&probe);
    probe[index] = theta[index] - h;
    let down = f(&probe);
    (up - down) / (2.0 * h)
}

/// Relative error with an absolute floor for values near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Gauss-Jordan inverse with partial pivoting. `None` when singular.
pub fn dense_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if aug[r][col].abs() > aug[piv][col].abs() {
                piv = r;
            }
        }
        if aug[piv][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, piv);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = aug[r][col];
                if factor != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= factor * aug[col][c];
                    }
                }
            }
        }
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Squared-exponential kernel, written out independently of production code.
pub fn se_kernel(a: f64, b: f64, signal_var: f64, length_scale: f64) -> f64 {
    let d = a - b;
    signal_var * (-(d * d) / (2.0 * length_scale * length_scale)).exp()
}

/// GP posterior means `k_*ᵀ (K + σ_n² I)⁻¹ y` through an explicit inverse.
///
/// `kernel` is the train/train kernel matrix without noise; `cross[q]` holds
/// the kernel between query `q` and every training input.
pub fn dense_gp_solve(
    kernel: &[Vec<f64>],
    noise_var: f64,
    targets: &[f64],
    cross: &[Vec<f64>],
) -> Option<Vec<f64>> {
    let inv = noisy_inverse(kernel, noise_var)?;
    let weights: Vec<f64> = inv
        .iter()
        .map(|row| row.iter().zip(targets).map(|(a, b)| a * b).sum())
        .collect();
    Some(
        cross
            .iter()
            .map(|k| k.iter().zip(&weights).map(|(a, b)| a * b).sum())
            .collect(),
    )
}

/// GP posterior variances `k(x,x) - k_*ᵀ (K + σ_n² I)⁻¹ k_*` via explicit inverse.
pub fn dense_gp_variance(
    kernel: &[Vec<f64>],
    noise_var: f64,
    cross: &[Vec<f64>],
    prior_var: &[f64],
) -> Option<Vec<f64>> {
    let inv = noisy_inverse(kernel, noise_var)?;
    Some(
        cross
            .iter()
            .zip(prior_var)
            .map(|(k, kss)| {
                let mut quad = 0.0;
                for i in 0..k.len() {
                    for j in 0..k.len() {
                        quad += k[i] * inv[i][j] * k[j];
                    }
                }
                kss - quad
            })
            .collect(),
    )
}

fn noisy_inverse(kernel: &[Vec<f64>], noise_var: f64) -> Option<Vec<Vec<f64>>> {
    let mut jitter = 0.0;
    loop {
        let mut a = kernel.to_vec();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += noise_var + jitter;
        }
        if let Some(inv) = dense_inverse(&a) {
            return Some(inv);
        }
        jitter = if jitter == 0.0 { 1e-9 } else { jitter * 10.0 };
        if jitter > 1e-5 {
            return None;
        }
    }
}

/// Naive log marginal likelihood of a zero-mean GP, via explicit inverse and
/// a determinant from Gaussian elimination.
pub fn gp_log_marginal_likelihood(kernel: &[Vec<f64>], noise_var: f64, targets: &[f64]) -> f64 {
    let n = targets.len();
    let mut a = kernel.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += noise_var;
    }
    let inv = dense_inverse(&a).expect("kernel matrix invertible");
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += targets[i] * inv[i][j] * targets[j];
        }
    }
    let logdet = log_det(&a);
    -0.5 * quad - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn log_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m = a.to_vec();
    let mut acc = 0.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        m.swap(col, piv);
        let p = m[col][col];
        acc += p.abs().ln();
        for r in col + 1..n {
            let f = m[r][col] / p;
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    acc
}

/// Minimal complex number for the receptance oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cplx {
    pub re: f64,
    pub im: f64,
}

impl Cplx {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn sub(self, o: Cplx) -> Cplx {
        Cplx::new(self.re - o.re, self.im - o.im)
    }
    fn mul(self, o: Cplx) -> Cplx {
        Cplx::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn div(self, o: Cplx) -> Cplx {
        let d = o.re * o.re + o.im * o.im;
        Cplx::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
    pub fn abs(self) -> f64 {
        (self.re * self.re + self.im * self.im).sqrt()
    }
}

/// Dense complex Gaussian elimination with partial pivoting.
pub fn complex_solve(a: &[Vec<Cplx>], b: &[Cplx]) -> Option<Vec<Cplx>> {
    let n = b.len();
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() == 0.0 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col].div(m[col][col]);
            for c in col..n {
                let t = f.mul(m[col][c]);
                m[r][c] = m[r][c].sub(t);
            }
            rhs[r] = rhs[r].sub(f.mul(rhs[col]));
        }
    }
    let mut x = vec![Cplx::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc = acc.sub(m[r][c].mul(x[c]));
        }
        x[r] = acc.div(m[r][r]);
    }
    Some(x)
}

/// Receptance magnitude `|[(K - ω²M + iωC)⁻¹]_{obs, exc}|` at `freq_hz`.
pub fn receptance(
    m: &[Vec<f64>],
    c: &[Vec<f64>],
    k: &[Vec<f64>],
    excited: usize,
    observed: usize,
    freq_hz: f64,
) -> Option<f64> {
    let n = m.len();
    let w = 2.0 * std::f64::consts::PI * freq_hz;
    let a: Vec<Vec<Cplx>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Cplx::new(k[i][j] - w * w * m[i][j], w * c[i][j]))
                .collect()
        })
        .collect();
    let mut b = vec![Cplx::new(0.0, 0.0); n];
    b[excited] = Cplx::new(1.0, 0.0);
    complex_solve(&a, &b).map(|x| x[observed].abs())
}

/// Number of eigenvalues of the pencil (K, M) below `lambda`, by Sylvester's
/// law of inertia applied to an unpivoted LDLᵀ of `K - λM`.
fn count_below(m: &[Vec<f64>], k: &[Vec<f64>], lambda: f64) -> usize {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| k[i][j] - lambda * m[i][j]).collect())
        .collect();
    let mut negatives = 0;
    for col in 0..n {
        let mut p = a[col][col];
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            negatives += 1;
        }
        for r in col + 1..n {
            let f = a[r][col] / p;
            for c in col + 1..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    negatives
}

/// Undamped natural frequencies in Hz, sorted ascending.
///
/// Uses the closed-form characteristic polynomial for `n == 1` and inertia
/// bisection on `det(K - ω²M)` for `n <= 5`.
pub fn modal_frequencies(m: &[Vec<f64>], k: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    assert!((1..=5).contains(&n), "oracle supports 1..=5 DOF");
    let two_pi = 2.0 * std::f64::consts::PI;
    if n == 1 {
        return vec![(k[0][0] / m[0][0]).sqrt() / two_pi];
    }
    // Gershgorin-style upper bound on λ = ω².
    let mut hi = 0.0f64;
    for i in 0..n {
        let row: f64 = k[i].iter().map(|v| v.abs()).sum();
        hi = hi.max(row / m[i][i]);
    }
    hi *= 2.0;
    let mut out = Vec::with_capacity(n);
    for idx in 0..n {
        let (mut lo, mut up) = (0.0f64, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + up);
            if count_below(m, k, mid) > idx {
                up = mid;
            } else {
                lo = mid;
            }
        }
        out.push((0.5 * (lo + up)).sqrt() / two_pi);
    }
    out
}

/// Closed-form natural frequencies (Hz) of a 2-DOF grounded chain with equal
/// masses `m` and equal springs `k`.
pub fn two_dof_chain_frequencies(k: f64, m: f64) -> [f64; 2] {
    let two_pi = 2.0 * std::f64::consts::PI;
    let base = (k / m).sqrt();
    let s5 = 5f64.sqrt();
    [
        base * ((3.0 - s5) / 2.0).sqrt() / two_pi,
        base * ((3.0 + s5) / 2.0).sqrt() / two_pi,
    ]
}

/// Free response of an undamped oscillator released from `y0` at rest.
pub fn harmonic_displacement(k: f64, m: f64, y0: f64, t: f64) -> f64 {
    y0 * ((k / m).sqrt() * t).cos()
}

/// Straightforward three-layer tanh network on nested vectors.
///
/// `weights[l]` is `fan_in × fan_out`, `biases[l]` has `fan_out` entries.
pub fn naive_mlp(weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (w, b) in weights.iter().zip(biases) {
        let mut next = b.clone();
        for (i, hi) in h.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                *nj += hi * w[i][j];
            }
        }
        h = next.into_iter().map(f64::tanh).collect();
    }
    h
}

/// Arithmetic mean of each column of `rows`, for recomputing report summaries.
pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut acc = vec![0.0; d];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / rows.len() as f64).collect()
}
