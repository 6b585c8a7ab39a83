use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{max_angular_frequency, SystemMatrices};
use crate::error::{Error, Result};

const DIVERGENCE_LIMIT: f64 = 1e12;

/// State history from a time-domain run, stored row-major by step.
#[derive(Clone, Debug)]
pub struct TimeHistory {
    pub n_dof: usize,
    pub dt: f64,
    /// `(n_steps + 1) × n_dof` displacements.
    pub displacement: Vec<f64>,
    /// `(n_steps + 1) × n_dof` velocities.
    pub velocity: Vec<f64>,
}

impl TimeHistory {
    pub fn n_samples(&self) -> usize {
        self.displacement.len() / self.n_dof
    }

    pub fn displacement_of(&self, dof: usize) -> Vec<f64> {
        self.displacement.iter().skip(dof).step_by(self.n_dof).copied().collect()
    }

    pub fn velocity_of(&self, dof: usize) -> Vec<f64> {
        self.velocity.iter().skip(dof).step_by(self.n_dof).copied().collect()
    }
}

/// Unit-variance Gaussian white noise scaled by `std`.
pub fn white_noise<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect()
}

struct Dense {
    n: usize,
    inv_mass: Vec<f64>,
    damping: Vec<f64>,
    stiffness: Vec<f64>,
}

impl Dense {
    /// Writes `d/dt [y; v]` into `out` given force `f` at `dof`.
    fn rate(&self, y: &[f64], v: &[f64], dof: usize, f: f64, dy: &mut [f64], dv: &mut [f64]) {
        let n = self.n;
        dy.copy_from_slice(v);
        for i in 0..n {
            let row = i * n;
            let mut acc = if i == dof { f } else { 0.0 };
            for j in 0..n {
                acc -= self.damping[row + j] * v[j] + self.stiffness[row + j] * y[j];
            }
            dv[i] = acc * self.inv_mass[i];
        }
    }
}

/// Classical RK4 integration of `M ÿ + C ẏ + K y = f(t) e_dof` from rest.
///
/// `force[j]` is held constant over step `j`; it must cover `n_steps` samples.
pub fn simulate_time_domain(
    mats: &SystemMatrices,
    force: &[f64],
    excited_dof: usize,
    dt: f64,
    n_steps: usize,
) -> Result<TimeHistory> {
    let n = mats.n_dof();
    simulate_from(mats, &vec![0.0; n], &vec![0.0; n], force, excited_dof, dt, n_steps)
}

/// As [`simulate_time_domain`] but from the initial state `(y0, v0)`.
pub fn simulate_from(
    mats: &SystemMatrices,
    y0: &[f64],
    v0: &[f64],
    force: &[f64],
    excited_dof: usize,
    dt: f64,
    n_steps: usize,
) -> Result<TimeHistory> {
    let n = mats.n_dof();
    if y0.len() != n || v0.len() != n {
        return Err(Error::Dimension(format!("initial state must have {n} entries")));
    }
    if excited_dof >= n {
        return Err(Error::Dimension(format!("excited dof {excited_dof} out of range")));
    }
    if force.len() < n_steps {
        return Err(Error::Dimension(format!(
            "force has {} samples for {n_steps} steps",
            force.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Data("time step must be positive".into()));
    }
    let product = dt * max_angular_frequency(mats)?;
    if product >= 0.5 {
        return Err(Error::UnstableStep { dt, product });
    }

    let sys = Dense {
        n,
        inv_mass: (0..n).map(|i| 1.0 / mats.mass[(i, i)]).collect(),
        damping: (0..n * n).map(|k| mats.damping[(k / n, k % n)]).collect(),
        stiffness: (0..n * n).map(|k| mats.stiffness[(k / n, k % n)]).collect(),
    };

    let mut disp = Vec::with_capacity((n_steps + 1) * n);
    let mut vel = Vec::with_capacity((n_steps + 1) * n);
    disp.extend_from_slice(y0);
    vel.extend_from_slice(v0);

    let mut y = y0.to_vec();
    let mut v = v0.to_vec();
    let mut ky = vec![vec![0.0; n]; 4];
    let mut kv = vec![vec![0.0; n]; 4];
    let mut ty = vec![0.0; n];
    let mut tv = vec![0.0; n];
    for step in 0..n_steps {
        let f = force[step];
        sys.rate(&y, &v, excited_dof, f, &mut ky[0], &mut kv[0]);
        for stage in 1..4 {
            let h = if stage == 3 { dt } else { 0.5 * dt };
            for i in 0..n {
                ty[i] = y[i] + h * ky[stage - 1][i];
                tv[i] = v[i] + h * kv[stage - 1][i];
            }
            let (dy, dv) = (&mut ky[stage], &mut kv[stage]);
            sys.rate(&ty, &tv, excited_dof, f, dy, dv);
        }
        for i in 0..n {
            y[i] += dt / 6.0 * (ky[0][i] + 2.0 * ky[1][i] + 2.0 * ky[2][i] + ky[3][i]);
            v[i] += dt / 6.0 * (kv[0][i] + 2.0 * kv[1][i] + 2.0 * kv[2][i] + kv[3][i]);
        }
        if y.iter().chain(&v).any(|x| !(x.abs() <= DIVERGENCE_LIMIT)) {
            return Err(Error::Divergence { step: step + 1 });
        }
        disp.extend_from_slice(&y);
        vel.extend_from_slice(&v);
    }
    Ok(TimeHistory {
        n_dof: n,
        dt,
        displacement: disp,
        velocity: vel,
    })
}
