//! Time stepping for `u_t = u_xx + b u_x + u G(t, x, u)` on a truncated grid.
//!
//! In the lab frame `b = 0` and `G(t, x, u) = g(t, x - ct, u)`; in the frame
//! moving with the environment `b = c` and `G = g`. Diffusion and advection
//! are treated by Crank-Nicolson with a pre-factored tridiagonal matrix, the
//! reaction by RK4 substeps (Strang splitting, the default) or by a Heun
//! predictor-corrector folded into the implicit solve (`ImexCn`).

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::env::PeriodicEnvironment;
use crate::numerics::Tridiagonal;
use crate::output::fmt_num;
use crate::pode::PeriodicOrbit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error("advection CFL number {cfl} exceeds 1")]
    CflViolation { cfl: f64 },
    #[error("non-finite value at node {node} (t = {t})")]
    NonFiniteValue { node: usize, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self, PdeError> {
        if n < 3 {
            return Err(PdeError::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(PdeError::InvalidGrid(format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, n })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Linear interpolation of nodal `values` at `x`; `None` outside the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Option<f64> {
        if x < self.x_min || x > self.x_max {
            return None;
        }
        let s = (x - self.x_min) / self.dx();
        let i = (s.floor() as usize).min(self.n - 2);
        let w = s - i as f64;
        Some((1.0 - w) * values[i] + w * values[i + 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid1D,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn from_fn<F: Fn(f64) -> f64>(grid: Grid1D, t: f64, f: F) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, t, values }
    }

    pub fn zeros(grid: Grid1D, t: f64) -> Self {
        Self {
            grid,
            t,
            values: vec![0.0; grid.n],
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Rows `t,x,u`.
    pub fn to_csv(&self, with_header: bool) -> String {
        let mut out = String::new();
        if with_header {
            out.push_str("t,x,u\n");
        }
        for (i, u) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", fmt_num(self.t), fmt_num(self.grid.x(i)), fmt_num(*u));
        }
        out
    }
}

pub type BoundaryFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Boundary {
    /// Dirichlet value `alpha(t)`.
    ClampToOrbit(Arc<PeriodicOrbit>),
    /// Dirichlet value given by an arbitrary function of time.
    Dirichlet(BoundaryFn),
    Zero,
    NeumannZero,
}

impl std::fmt::Debug for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ClampToOrbit(_) => write!(f, "ClampToOrbit"),
            Self::Dirichlet(_) => write!(f, "Dirichlet"),
            Self::Zero => write!(f, "Zero"),
            Self::NeumannZero => write!(f, "NeumannZero"),
        }
    }
}

impl Boundary {
    /// Dirichlet target at time `t`, `None` for Neumann.
    pub fn target(&self, t: f64) -> Option<f64> {
        match self {
            Self::ClampToOrbit(o) => Some(o.eval(t)),
            Self::Dirichlet(f) => Some(f(t)),
            Self::Zero => Some(0.0),
            Self::NeumannZero => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryPolicy {
    pub left: Boundary,
    pub right: Boundary,
}

impl BoundaryPolicy {
    pub fn neumann() -> Self {
        Self {
            left: Boundary::NeumannZero,
            right: Boundary::NeumannZero,
        }
    }

    pub fn wave(alpha: Arc<PeriodicOrbit>) -> Self {
        Self {
            left: Boundary::ClampToOrbit(alpha),
            right: Boundary::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImexCn,
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
}

impl StepperConfig {
    pub fn per_period(period: f64, divisor: usize) -> Self {
        Self {
            dt: period / divisor as f64,
            scheme: Scheme::Strang,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// `T / dt`, which must be an integer within `1e-12`.
    pub fn steps_per_period(&self, period: f64) -> Result<usize, PdeError> {
        if !(self.dt > 0.0) {
            return Err(PdeError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        let ratio = period / self.dt;
        let k = ratio.round();
        if (ratio - k).abs() > 1e-12 * ratio.max(1.0) || k < 1.0 {
            return Err(PdeError::InvalidConfig(format!(
                "period / dt = {ratio} is not an integer"
            )));
        }
        Ok(k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame {
    Lab { c: f64 },
    Moving { c: f64 },
}

impl Frame {
    pub fn advection(&self) -> f64 {
        match *self {
            Frame::Lab { .. } => 0.0,
            Frame::Moving { c } => c,
        }
    }
}

/// Owns the factored operators of one stepping session.
pub struct Stepper {
    env: PeriodicEnvironment,
    frame: Frame,
    bc: BoundaryPolicy,
    cfg: StepperConfig,
    grid: Grid1D,
    steps_per_period: usize,
    x: Vec<f64>,
    // explicit half of Crank-Nicolson: (I + dt/2 L) as three diagonals
    ex_lower: Vec<f64>,
    ex_diag: Vec<f64>,
    ex_upper: Vec<f64>,
    implicit: Tridiagonal,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    pub fn new(
        env: &PeriodicEnvironment,
        frame: Frame,
        bc: BoundaryPolicy,
        cfg: StepperConfig,
        grid: Grid1D,
    ) -> Result<Self, PdeError> {
        let steps_per_period = cfg.steps_per_period(env.period())?;
        let dx = grid.dx();
        let b = frame.advection();
        let cfl = b.abs() * cfg.dt / dx;
        if cfl > 1.0 {
            return Err(PdeError::CflViolation { cfl });
        }
        let n = grid.n;
        // L u_i = lo u_{i-1} + di u_i + up u_{i+1}
        let d2 = 1.0 / (dx * dx);
        let (lo, di, up) = if b.abs() * dx <= 2.0 {
            // central advection keeps all off-diagonals non-negative here
            (d2 - b / (2.0 * dx), -2.0 * d2, d2 + b / (2.0 * dx))
        } else if b > 0.0 {
            (d2, -2.0 * d2 - b / dx, d2 + b / dx)
        } else {
            (d2 - b / dx, -2.0 * d2 + b / dx, d2)
        };
        let half = 0.5 * cfg.dt;
        let mut ex_lower = vec![0.0; n];
        let mut ex_diag = vec![1.0; n];
        let mut ex_upper = vec![0.0; n];
        let mut im_lower = vec![0.0; n];
        let mut im_diag = vec![1.0; n];
        let mut im_upper = vec![0.0; n];
        for i in 1..n - 1 {
            ex_lower[i] = half * lo;
            ex_diag[i] = 1.0 + half * di;
            ex_upper[i] = half * up;
            im_lower[i] = -half * lo;
            im_diag[i] = 1.0 - half * di;
            im_upper[i] = -half * up;
        }
        // Neumann rows reflect through a ghost node: u_{-1} = u_1.
        if matches!(bc.left, Boundary::NeumannZero) {
            ex_diag[0] = 1.0 - half * 2.0 * d2;
            ex_upper[0] = half * 2.0 * d2;
            im_diag[0] = 1.0 + half * 2.0 * d2;
            im_upper[0] = -half * 2.0 * d2;
        }
        if matches!(bc.right, Boundary::NeumannZero) {
            ex_diag[n - 1] = 1.0 - half * 2.0 * d2;
            ex_lower[n - 1] = half * 2.0 * d2;
            im_diag[n - 1] = 1.0 + half * 2.0 * d2;
            im_lower[n - 1] = -half * 2.0 * d2;
        }
        let implicit = Tridiagonal::factor(&im_lower, &im_diag, &im_upper);
        Ok(Self {
            env: env.clone(),
            frame,
            bc,
            cfg,
            grid,
            steps_per_period,
            x: grid.points(),
            ex_lower,
            ex_diag,
            ex_upper,
            implicit,
            rhs: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn boundary(&self) -> &BoundaryPolicy {
        &self.bc
    }

    pub fn env(&self) -> &PeriodicEnvironment {
        &self.env
    }

    #[inline]
    fn xi_shift(&self, t: f64) -> f64 {
        match self.frame {
            Frame::Lab { c } => c * t,
            Frame::Moving { .. } => 0.0,
        }
    }

    /// `u G(t, x, u)` at every node.
    fn reaction_into(&self, t: f64, u: &[f64], out: &mut [f64]) {
        let shift = self.xi_shift(t);
        for ((o, &ui), &xi) in out.iter_mut().zip(u).zip(&self.x) {
            *o = ui * self.env.growth(t, xi - shift, ui);
        }
    }

    /// One RK4 step of the pointwise reaction ODE over `[t, t + h]`.
    fn react(&self, u: &mut [f64], t: f64, h: f64) {
        let (s0, s1, s2) = (self.xi_shift(t), self.xi_shift(t + 0.5 * h), self.xi_shift(t + h));
        let (tm, te) = (t + 0.5 * h, t + h);
        let env = &self.env;
        for (ui, &x) in u.iter_mut().zip(&self.x) {
            let v = *ui;
            let k1 = v * env.growth(t, x - s0, v);
            let v2 = v + 0.5 * h * k1;
            let k2 = v2 * env.growth(tm, x - s1, v2);
            let v3 = v + 0.5 * h * k2;
            let k3 = v3 * env.growth(tm, x - s1, v3);
            let v4 = v + h * k3;
            let k4 = v4 * env.growth(te, x - s2, v4);
            *ui = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }

    fn apply_explicit(&mut self, u: &[f64]) {
        let n = u.len();
        self.rhs[0] = self.ex_diag[0] * u[0] + self.ex_upper[0] * u[1];
        for i in 1..n - 1 {
            self.rhs[i] = self.ex_lower[i] * u[i - 1] + self.ex_diag[i] * u[i] + self.ex_upper[i] * u[i + 1];
        }
        self.rhs[n - 1] = self.ex_lower[n - 1] * u[n - 2] + self.ex_diag[n - 1] * u[n - 1];
    }

    fn set_dirichlet(&self, v: &mut [f64], t: f64) {
        let n = v.len();
        if let Some(a) = self.bc.left.target(t) {
            v[0] = a;
        }
        if let Some(b) = self.bc.right.target(t) {
            v[n - 1] = b;
        }
    }

    /// Crank-Nicolson for diffusion/advection over one `dt`, with Dirichlet
    /// rows pinned to their targets at `t_target`.
    fn diffuse(&mut self, u: &mut [f64], t_target: f64) {
        self.apply_explicit(u);
        let mut rhs = std::mem::take(&mut self.rhs);
        self.set_dirichlet(&mut rhs, t_target);
        self.implicit.solve_in_place(&mut rhs);
        u.copy_from_slice(&rhs);
        self.rhs = rhs;
    }

    fn finish(&self, u: &mut [f64], t: f64) -> Result<(), PdeError> {
        self.set_dirichlet(u, t);
        for (i, v) in u.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(PdeError::NonFiniteValue { node: i, t });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(())
    }

    fn step_values(&mut self, u: &mut [f64], t: f64) -> Result<(), PdeError> {
        let dt = self.cfg.dt;
        match self.cfg.scheme {
            Scheme::Strang => {
                self.react(u, t, 0.5 * dt);
                self.diffuse(u, t + 0.5 * dt);
                self.react(u, t + 0.5 * dt, 0.5 * dt);
            }
            Scheme::ImexCn => {
                let n = u.len();
                let mut r0 = std::mem::take(&mut self.scratch);
                self.reaction_into(t, u, &mut r0);
                // predictor
                self.apply_explicit(u);
                let base = self.rhs.clone();
                let mut pred: Vec<f64> = base.iter().zip(&r0).map(|(b, r)| b + dt * r).collect();
                self.set_dirichlet(&mut pred, t + dt);
                self.implicit.solve_in_place(&mut pred);
                for v in pred.iter_mut() {
                    *v = v.max(0.0);
                }
                let mut r1 = vec![0.0; n];
                self.reaction_into(t + dt, &pred, &mut r1);
                // corrector
                let mut corr: Vec<f64> = (0..n).map(|i| base[i] + 0.5 * dt * (r0[i] + r1[i])).collect();
                self.set_dirichlet(&mut corr, t + dt);
                self.implicit.solve_in_place(&mut corr);
                u.copy_from_slice(&corr);
                self.scratch = r0;
            }
        }
        self.finish(u, t + dt)
    }

    /// Advances `field` by one `dt`.
    pub fn step(&mut self, field: &mut Field) -> Result<(), PdeError> {
        let t = field.t;
        self.step_values(&mut field.values, t)?;
        field.t = t + self.cfg.dt;
        Ok(())
    }

    /// Advances by `steps` steps; times are `t0 + k dt` without accumulation.
    /// Under Strang splitting the reaction half-steps of consecutive steps
    /// are merged into one full step, which leaves the end state unchanged to
    /// splitting order.
    pub fn advance(&mut self, field: &mut Field, steps: usize) -> Result<(), PdeError> {
        let t0 = field.t;
        let dt = self.cfg.dt;
        if steps == 0 {
            return Ok(());
        }
        match self.cfg.scheme {
            Scheme::Strang => {
                let u = &mut field.values;
                self.react(u, t0, 0.5 * dt);
                for k in 0..steps {
                    let t = t0 + k as f64 * dt;
                    self.diffuse(u, t + 0.5 * dt);
                    let h = if k + 1 == steps { 0.5 * dt } else { dt };
                    self.react(u, t + 0.5 * dt, h);
                    for v in u.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                self.finish(u, t0 + steps as f64 * dt)?;
            }
            Scheme::ImexCn => {
                for k in 0..steps {
                    let t = t0 + k as f64 * dt;
                    self.step_values(&mut field.values, t)?;
                }
            }
        }
        field.t = t0 + steps as f64 * dt;
        Ok(())
    }

    /// Exactly `n_periods * steps_per_period` steps.
    pub fn integrate_periods(&mut self, field: &mut Field, n_periods: usize) -> Result<(), PdeError> {
        let t0 = field.t;
        for p in 0..n_periods {
            field.t = t0 + p as f64 * self.env.period();
            self.advance(field, self.steps_per_period)?;
        }
        field.t = t0 + n_periods as f64 * self.env.period();
        Ok(())
    }

    /// `|u(node next to the boundary) - target|` at each Dirichlet end; large
    /// values indicate a boundary layer, i.e. truncation error.
    pub fn boundary_drift(&self, field: &Field) -> (Option<f64>, Option<f64>) {
        let n = field.values.len();
        let left = self.bc.left.target(field.t).map(|a| (field.values[1] - a).abs());
        let right = self.bc.right.target(field.t).map(|b| (field.values[n - 2] - b).abs());
        (left, right)
    }
}

/// One step as a pure function.
pub fn step(
    field: &Field,
    env: &PeriodicEnvironment,
    frame: Frame,
    bc: &BoundaryPolicy,
    cfg: StepperConfig,
) -> Result<Field, PdeError> {
    let mut stepper = Stepper::new(env, frame, bc.clone(), cfg, field.grid)?;
    let mut out = field.clone();
    stepper.step(&mut out)?;
    Ok(out)
}

/// Whole periods as a pure function.
pub fn integrate_periods(
    field: &Field,
    env: &PeriodicEnvironment,
    frame: Frame,
    bc: &BoundaryPolicy,
    cfg: StepperConfig,
    n_periods: usize,
) -> Result<Field, PdeError> {
    let mut stepper = Stepper::new(env, frame, bc.clone(), cfg, field.grid)?;
    let mut out = field.clone();
    stepper.integrate_periods(&mut out, n_periods)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GrowthFn, LimitFn};
    use std::f64::consts::PI;

    fn const_env(rate: impl Fn(f64) -> f64 + Send + Sync + Copy + 'static, period: f64) -> PeriodicEnvironment {
        let g: GrowthFn = Arc::new(move |_, _, u| rate(u));
        let l: LimitFn = Arc::new(move |_, u| rate(u));
        PeriodicEnvironment::new("test", period, g, l.clone(), l, 1e9, 1.0)
    }

    #[test]
    fn constant_is_exact_without_reaction() {
        let env = const_env(|_| 0.0, 1.0);
        let grid = Grid1D::new(-10.0, 10.0, 201).unwrap();
        let f = Field::from_fn(grid, 0.0, |_| 1.0);
        let out = integrate_periods(&f, &env, Frame::Moving { c: 0.7 }, &BoundaryPolicy::neumann(), StepperConfig::per_period(1.0, 64), 2).unwrap();
        assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-13));
        assert_eq!(out.t, 2.0);
    }

    #[test]
    fn heat_eigenmode_decay_per_step() {
        let env = const_env(|_| 0.0, 1.0);
        let l = 1.0;
        let grid = Grid1D::new(0.0, l, 401).unwrap();
        let dt = 1.0 / 1024.0;
        let bc = BoundaryPolicy {
            left: Boundary::Zero,
            right: Boundary::Zero,
        };
        let mut stepper = Stepper::new(&env, Frame::Lab { c: 0.0 }, bc, StepperConfig::per_period(1.0, 1024), grid).unwrap();
        let mut f = Field::from_fn(grid, 0.0, |x| (PI * x / l).sin());
        stepper.step(&mut f).unwrap();
        let factor = (-PI * PI * dt / (l * l)).exp();
        let mid = f.values[200];
        assert!((mid - factor).abs() < 1e-6, "{mid} vs {factor}");
    }

    #[test]
    fn uniform_logistic_tracks_closed_form() {
        let env = const_env(|u| 1.0 - u, 1.0);
        let grid = Grid1D::new(-5.0, 5.0, 51).unwrap();
        let f = Field::from_fn(grid, 0.0, |_| 0.5);
        let exact = 1.0 / (1.0 + (-1.0f64).exp());
        for scheme in [Scheme::Strang, Scheme::ImexCn] {
            let cfg = StepperConfig::per_period(1.0, 256).with_scheme(scheme);
            let out = integrate_periods(&f, &env, Frame::Lab { c: 0.0 }, &BoundaryPolicy::neumann(), cfg, 1).unwrap();
            let err = out.values.iter().map(|v| (v - exact).abs()).fold(0.0, f64::max);
            assert!(err < 1e-5, "{scheme:?}: {err}");
        }
    }

    #[test]
    fn zero_state_and_zero_periods() {
        let env = const_env(|u| 1.0 - u, 1.0);
        let grid = Grid1D::new(-5.0, 5.0, 51).unwrap();
        let f = Field::zeros(grid, 0.0);
        let cfg = StepperConfig::per_period(1.0, 32);
        let out = integrate_periods(&f, &env, Frame::Moving { c: 1.0 }, &BoundaryPolicy::neumann(), cfg, 3).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
        let g = Field::from_fn(grid, 0.0, |x| (-x * x).exp());
        assert_eq!(integrate_periods(&g, &env, Frame::Lab { c: 1.0 }, &BoundaryPolicy::neumann(), cfg, 0).unwrap(), g);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 0.0, 10).is_err());
        let cfg = StepperConfig {
            dt: 0.3,
            scheme: Scheme::Strang,
        };
        assert!(cfg.steps_per_period(1.0).is_err());
        let env = const_env(|u| 1.0 - u, 1.0);
        let grid = Grid1D::new(0.0, 1.0, 101).unwrap();
        let err = Stepper::new(&env, Frame::Moving { c: 20.0 }, BoundaryPolicy::neumann(), StepperConfig::per_period(1.0, 1), grid)
            .err()
            .unwrap();
        assert!(matches!(err, PdeError::CflViolation { .. }));
    }
}
