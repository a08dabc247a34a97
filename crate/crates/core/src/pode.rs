//! Positive periodic orbits of scalar periodic ODEs `u' = u h(t, u)` and the
//! exponential weights `p(t) = exp(int_0^t a)` used by the envelope recipes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::numerics::{self, OdeError, OdeOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PodeError {
    #[error("no sign change of the Poincare displacement on [{lo}, {hi}] (d(lo) = {d_lo:e}, d(hi) = {d_hi:e})")]
    NoSignChange { lo: f64, hi: f64, d_lo: f64, d_hi: f64 },
    #[error("bisection did not reach tolerance {tol:e} (residual {residual:e})")]
    NonConvergence { tol: f64, residual: f64 },
    #[error("h(t, u) is not strictly decreasing in u near t = {t}, u = {u}")]
    AssumptionViolation { t: f64, u: f64 },
    #[error("weight rate has nonzero mean: integral over a period = {integral:e}")]
    NotZeroMean { integral: f64 },
    #[error("linear periodic problem is resonant (multiplier {multiplier})")]
    Resonant { multiplier: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// A `T`-periodic scalar function sampled on a uniform mesh of `[0, T]`
/// (both ends included) with derivative samples for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub period: f64,
    pub t_mesh: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    /// `|u(T; u0) - u0|` for solved orbits, `|p(T) - p(0)|` for weights.
    pub residual: f64,
    pub tol: f64,
}

impl PeriodicOrbit {
    pub fn constant(period: f64, value: f64) -> Self {
        Self {
            period,
            t_mesh: vec![0.0, period],
            values: vec![value, value],
            slopes: vec![0.0, 0.0],
            residual: 0.0,
            tol: 0.0,
        }
    }

    /// Builds an orbit from samples on a uniform mesh of `[0, T]` with `n + 1`
    /// points, computing slopes with `deriv(t, value)`.
    pub fn from_uniform<D: Fn(f64, f64) -> f64>(period: f64, values: Vec<f64>, deriv: D) -> Self {
        let n = values.len() - 1;
        let t_mesh: Vec<f64> = (0..=n).map(|k| period * k as f64 / n as f64).collect();
        let slopes = t_mesh.iter().zip(&values).map(|(&t, &v)| deriv(t, v)).collect();
        Self {
            period,
            t_mesh,
            values,
            slopes,
            residual: 0.0,
            tol: 0.0,
        }
    }

    pub fn intervals(&self) -> usize {
        self.t_mesh.len() - 1
    }

    /// Periodic cubic Hermite interpolation.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.intervals();
        let h = self.period / n as f64;
        let s = t.rem_euclid(self.period) / h;
        let k = (s.floor() as usize).min(n - 1);
        let x = s - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let x2 = x * x;
        let x3 = x2 * x;
        (2.0 * x3 - 3.0 * x2 + 1.0) * y0
            + (x3 - 2.0 * x2 + x) * m0
            + (-2.0 * x3 + 3.0 * x2) * y1
            + (x3 - x2) * m1
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        numerics::period_mean(|t| self.eval(t), self.period, 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.t_mesh.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", crate::output::fmt_num(*t), crate::output::fmt_num(*v));
        }
        out
    }
}

fn ode_options(tol: f64) -> OdeOptions {
    OdeOptions {
        rtol: (tol * 1e-2).clamp(1e-13, 1e-10),
        ..OdeOptions::default()
    }
}

/// `u(T; u0) - u0` for `u' = u h(t, u)`, relative tolerance `1e-10`.
pub fn poincare_displacement<H: Fn(f64, f64) -> f64>(h: H, period: f64, u0: f64) -> Result<f64, PodeError> {
    displacement_with(&h, period, u0, &OdeOptions::default())
}

fn displacement_with<H: Fn(f64, f64) -> f64>(
    h: &H,
    period: f64,
    u0: f64,
    opts: &OdeOptions,
) -> Result<f64, PodeError> {
    let u = numerics::dopri5(|t, u| u * h(t, u), 0.0, period, u0, opts)?;
    Ok(u - u0)
}

/// Integrates `u' = u h(t, u)` over `[t0, t1]`.
pub fn flow<H: Fn(f64, f64) -> f64>(h: H, t0: f64, t1: f64, u0: f64) -> Result<f64, PodeError> {
    Ok(numerics::dopri5(|t, u| u * h(t, u), t0, t1, u0, &OdeOptions::default())?)
}

fn check_decreasing<H: Fn(f64, f64) -> f64>(h: &H, period: f64, lo: f64, hi: f64) -> Result<(), PodeError> {
    const NT: usize = 16;
    const NU: usize = 16;
    for i in 0..NT {
        let t = period * i as f64 / NT as f64;
        let mut prev = h(t, 0.0);
        for j in 1..=NU {
            let u = lo + (hi - lo) * j as f64 / NU as f64;
            let cur = h(t, u);
            if !(cur < prev) {
                return Err(PodeError::AssumptionViolation { t, u });
            }
            prev = cur;
        }
    }
    Ok(())
}

/// Positive periodic orbit of `u' = u h(t, u)` by bisection on the Poincare
/// displacement inside `bracket`, followed by a mesh fill refined until the
/// Hermite interpolant agrees with a twice finer mesh to `tol / 10`.
pub fn solve_periodic_orbit<H: Fn(f64, f64) -> f64>(
    h: H,
    period: f64,
    tol: f64,
    bracket: (f64, f64),
) -> Result<PeriodicOrbit, PodeError> {
    let (lo0, hi0) = bracket;
    check_decreasing(&h, period, lo0, hi0)?;
    let opts = ode_options(tol);
    let d = |u: f64| displacement_with(&h, period, u, &opts);
    let (mut lo, mut hi) = (lo0, hi0);
    let (d_lo, d_hi) = (d(lo)?, d(hi)?);
    if !(d_lo > 0.0 && d_hi < 0.0) {
        return Err(PodeError::NoSignChange {
            lo,
            hi,
            d_lo,
            d_hi,
        });
    }
    let mut u0 = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        u0 = 0.5 * (lo + hi);
        let dm = d(u0)?;
        residual = dm.abs();
        if residual <= 0.5 * tol || hi - lo <= 4.0 * f64::EPSILON * u0 {
            break;
        }
        if dm > 0.0 {
            lo = u0;
        } else {
            hi = u0;
        }
    }
    if residual > tol {
        return Err(PodeError::NonConvergence { tol, residual });
    }

    let deriv = |t: f64, u: f64| u * h(t, u);
    let fill = |n: usize| -> Result<Vec<f64>, PodeError> {
        let mut values = Vec::with_capacity(n + 1);
        let mut u = u0;
        values.push(u);
        for k in 0..n {
            let (a, b) = (period * k as f64 / n as f64, period * (k + 1) as f64 / n as f64);
            u = numerics::dopri5(deriv, a, b, u, &opts)?;
            values.push(u);
        }
        Ok(values)
    };
    let mut n = 256;
    let mut orbit = PeriodicOrbit::from_uniform(period, fill(n)?, deriv);
    while n < 1 << 14 {
        let finer = PeriodicOrbit::from_uniform(period, fill(2 * n)?, deriv);
        let change = finer
            .t_mesh
            .iter()
            .zip(&finer.values)
            .skip(1)
            .step_by(2)
            .map(|(&t, &v)| (orbit.eval(t) - v).abs())
            .fold(0.0, f64::max);
        orbit = finer;
        n *= 2;
        if change < tol / 10.0 {
            break;
        }
    }
    orbit.residual = residual;
    orbit.tol = tol;
    Ok(orbit)
}

/// `p(t) = exp(int_0^t a)` for a zero-mean rate `a`.
pub fn periodic_weight<A: Fn(f64) -> f64>(a: A, period: f64) -> Result<PeriodicOrbit, PodeError> {
    let integral = numerics::integrate(&a, 0.0, period, 1e-14);
    if integral.abs() > 1e-8 {
        return Err(PodeError::NotZeroMean { integral });
    }
    let n = 1024;
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(1.0);
    for k in 0..n {
        let (lo, hi) = (period * k as f64 / n as f64, period * (k + 1) as f64 / n as f64);
        acc += numerics::integrate(&a, lo, hi, 1e-15);
        values.push(acc.exp());
    }
    let residual = (values[n] - values[0]).abs();
    // Remove the quadrature drift so the sampled weight closes exactly.
    values[n] = values[0];
    let mut orbit = PeriodicOrbit::from_uniform(period, values, |t, p| a(t) * p);
    orbit.residual = residual;
    orbit.tol = 1e-10;
    Ok(orbit)
}

/// Periodic solution of the linear ODE `v' = a(t) v + b(t)`; requires
/// `int_0^T a != 0`.
pub fn solve_linear_periodic<A, B>(a: A, b: B, period: f64) -> Result<PeriodicOrbit, PodeError>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    let opts = OdeOptions {
        rtol: 1e-12,
        ..OdeOptions::default()
    };
    let rhs = |t: f64, v: f64| a(t) * v + b(t);
    let multiplier = numerics::integrate(&a, 0.0, period, 1e-14).exp();
    if (multiplier - 1.0).abs() < 1e-10 {
        return Err(PodeError::Resonant { multiplier });
    }
    let particular = numerics::dopri5(rhs, 0.0, period, 0.0, &opts)?;
    let v0 = particular / (1.0 - multiplier);
    let n = 512;
    let mut values = Vec::with_capacity(n + 1);
    let mut v = v0;
    values.push(v);
    for k in 0..n {
        let (lo, hi) = (period * k as f64 / n as f64, period * (k + 1) as f64 / n as f64);
        v = numerics::dopri5(rhs, lo, hi, v, &opts)?;
        values.push(v);
    }
    let residual = (values[n] - values[0]).abs();
    values[n] = values[0];
    let mut orbit = PeriodicOrbit::from_uniform(period, values, rhs);
    orbit.residual = residual;
    orbit.tol = 1e-10;
    Ok(orbit)
}
