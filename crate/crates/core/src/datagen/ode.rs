//! Autonomous ODE systems and a fixed-step classical Runge–Kutta integrator.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;

pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], dx: &mut [f64]);
}

/// Adapter so closures can be integrated directly.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        (self.f)(x, dx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum OdeSystem {
    Rossler { a: f64, b: f64, c: f64 },
    Lorenz { sigma: f64, beta: f64, rho: f64 },
    LimitCycle { alpha1: f64, gamma1: f64, alpha2: f64, gamma2: f64 },
}

impl OdeSystem {
    pub fn rossler() -> Self {
        OdeSystem::Rossler { a: 0.2, b: 0.2, c: 5.7 }
    }

    pub fn lorenz() -> Self {
        OdeSystem::Lorenz {
            sigma: 10.0,
            beta: 8.0 / 3.0,
            rho: 28.0,
        }
    }

    pub fn limit_cycle() -> Self {
        OdeSystem::LimitCycle {
            alpha1: 0.016,
            gamma1: 0.001,
            alpha2: 0.0278,
            gamma2: 0.002,
        }
    }
}

impl VectorField for OdeSystem {
    fn dim(&self) -> usize {
        match self {
            OdeSystem::Rossler { .. } | OdeSystem::Lorenz { .. } => 3,
            OdeSystem::LimitCycle { .. } => 2,
        }
    }

    fn eval(&self, s: &[f64], ds: &mut [f64]) {
        match *self {
            OdeSystem::Rossler { a, b, c } => {
                let (x, y, z) = (s[0], s[1], s[2]);
                ds[0] = -y - z;
                ds[1] = x + a * y;
                ds[2] = b + z * (x - c);
            }
            OdeSystem::Lorenz { sigma, beta, rho } => {
                let (x, y, z) = (s[0], s[1], s[2]);
                ds[0] = sigma * (y - x);
                ds[1] = x * (rho - z) - y;
                ds[2] = x * y - beta * z;
            }
            OdeSystem::LimitCycle {
                alpha1,
                gamma1,
                alpha2,
                gamma2,
            } => {
                let (x, y) = (s[0], s[1]);
                let w = 1.0 - x - y;
                let coupling = x * y * w * w;
                ds[0] = alpha1 * w - gamma1 * x - coupling;
                ds[1] = alpha2 * w - gamma2 * y - coupling;
            }
        }
    }
}

/// RK4 integrator with scratch space reused across steps.
pub struct Rk4<'a, F: VectorField + ?Sized> {
    field: &'a F,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a, F: VectorField + ?Sized> Rk4<'a, F> {
    pub fn new(field: &'a F) -> Self {
        let n = field.dim();
        Rk4 {
            field,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    pub fn step(&mut self, x: &mut [f64], dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        self.field.eval(x, k1);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        self.field.eval(tmp, k2);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        self.field.eval(tmp, k3);
        for i in 0..x.len() {
            tmp[i] = x[i] + dt * k3[i];
        }
        self.field.eval(tmp, k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Matrix,
}

fn check_finite(x: &[f64], time: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { time })
    }
}

/// All internal RK4 states from `t = 0` to `t_end`; the last step is
/// shortened if `t_end` is not a multiple of `dt`.
pub fn integrate_rk4<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("integration step must be positive, got {dt}")));
    }
    check_dim("initial condition", field.dim(), x0.len())?;
    let n_full = (t_end / dt + 1e-9).floor().max(0.0) as usize;
    let remainder = t_end - n_full as f64 * dt;
    let mut rk = Rk4::new(field);
    let mut x = x0.to_vec();
    let mut times = vec![0.0];
    let mut data = x.clone();
    for i in 1..=n_full {
        rk.step(&mut x, dt);
        let t = i as f64 * dt;
        check_finite(&x, t)?;
        times.push(t);
        data.extend_from_slice(&x);
    }
    if remainder > 1e-12 * dt.max(1.0) {
        rk.step(&mut x, remainder);
        check_finite(&x, t_end)?;
        times.push(t_end);
        data.extend_from_slice(&x);
    }
    let states = Matrix::from_vec(times.len(), field.dim(), data)?;
    Ok(Trajectory { times, states })
}

/// Burn in, then record `n` states spaced `dt_sample` apart. `dt_sample`
/// must be an integer multiple of `dt_internal`.
pub fn sample_trajectory<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    dt_internal: f64,
    burn_in: f64,
    dt_sample: f64,
    n: usize,
) -> Result<Matrix> {
    if !(dt_internal > 0.0) || !(dt_sample > 0.0) {
        return Err(Error::Config("sampling intervals must be positive".into()));
    }
    check_dim("initial condition", field.dim(), x0.len())?;
    let ratio = dt_sample / dt_internal;
    let per_sample = ratio.round() as usize;
    if per_sample == 0 || (ratio - per_sample as f64).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "sampling interval {dt_sample} is not a multiple of the step {dt_internal}"
        )));
    }
    let mut rk = Rk4::new(field);
    let mut x = x0.to_vec();
    let burn_steps = (burn_in / dt_internal).round() as usize;
    for i in 0..burn_steps {
        rk.step(&mut x, dt_internal);
        if i % 1000 == 0 {
            check_finite(&x, (i + 1) as f64 * dt_internal)?;
        }
    }
    check_finite(&x, burn_in)?;
    let mut out = Matrix::zeros(n, field.dim());
    for s in 0..n {
        if s > 0 {
            for _ in 0..per_sample {
                rk.step(&mut x, dt_internal);
            }
        }
        check_finite(&x, burn_in + s as f64 * dt_sample)?;
        out.row_mut(s).copy_from_slice(&x);
    }
    Ok(out)
}
