//! Speeds `c*`, `lambda_{1,c}`, `mu_c`, forced KPP waves and forced pulse
//! waves computed by iterating the period map in the moving frame, and the
//! explicit sub/super-solution envelopes.

mod envelopes;

pub use envelopes::*;

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::env::PeriodicEnvironment;
use crate::output::fmt_num;
use crate::pde::{Boundary, BoundaryPolicy, Field, Frame, Grid1D, PdeError, Stepper, StepperConfig};
use crate::pode::{self, PeriodicOrbit, PodeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no convergence after {periods} periods (last change {change:e})")]
    NonConvergence { periods: usize, change: f64 },
    #[error("iteration degenerates to zero after {periods} periods (core sup {core_sup:e})")]
    DegenerateWave { periods: usize, core_sup: f64 },
    #[error("no forced pulse: {0}")]
    NoPulse(String),
    #[error("envelope check failed: {0}")]
    EnvelopeInvalid(String),
    #[error("envelope parameters infeasible: {0}")]
    ParamsInfeasible(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Orbit(#[from] PodeError),
}

/// Speed quantities of an environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedData {
    pub c_star: f64,
    pub g_minus_mean: f64,
    pub g_plus_mean: f64,
}

impl SpeedData {
    /// Root of `l^2 + c l + g_minus_mean = 0` with smaller absolute value;
    /// `None` for `|c| < c*`.
    pub fn lambda_1c(&self, c: f64) -> Option<f64> {
        let cs2 = self.c_star * self.c_star;
        let mut disc = c * c - cs2;
        // c* carries quadrature error; treat |c| within it as critical
        if disc.abs() <= 1e-10 * cs2 {
            disc = 0.0;
        }
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        Some(if c >= 0.0 { (-c + root) / 2.0 } else { (-c - root) / 2.0 })
    }

    /// `c = -c*` up to the tolerance used by [`SpeedData::lambda_1c`].
    pub fn is_critical_left(&self, c: f64) -> bool {
        let cs2 = self.c_star * self.c_star;
        c < 0.0 && (c * c - cs2).abs() <= 1e-10 * cs2
    }

    /// Negative root of `m^2 + c m + g_plus_mean = 0`.
    pub fn mu_c(&self, c: f64) -> f64 {
        (-c - (c * c - 4.0 * self.g_plus_mean).sqrt()) / 2.0
    }
}

pub fn compute_speed_data(env: &PeriodicEnvironment) -> Result<SpeedData, WaveError> {
    let g_minus_mean = env.mean_minus();
    let g_plus_mean = env.mean_plus();
    if !(g_minus_mean > 0.0) {
        return Err(WaveError::AssumptionViolation(format!(
            "mean of g(t,-inf,0) is {g_minus_mean}, must be positive"
        )));
    }
    if !(g_plus_mean < 0.0) {
        return Err(WaveError::AssumptionViolation(format!(
            "mean of g(t,+inf,0) is {g_plus_mean}, must be negative"
        )));
    }
    Ok(SpeedData {
        c_star: 2.0 * g_minus_mean.sqrt(),
        g_minus_mean,
        g_plus_mean,
    })
}

/// Positive periodic orbit `alpha` of `u' = u g(t, -inf, u)`.
pub fn alpha_orbit(env: &PeriodicEnvironment) -> Result<PeriodicOrbit, WaveError> {
    Ok(pode::solve_periodic_orbit(
        |t, u| env.minus_inf(t, u),
        env.period(),
        1e-11,
        (1e-6, 10.0 * env.u_cap()),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveConfig {
    pub grid: Grid1D,
    pub stepper: StepperConfig,
    /// Convergence threshold on the sup-norm change over one period.
    pub tol: f64,
    pub max_periods: usize,
    /// Snapshots stored per period in the returned profile.
    pub samples_per_period: usize,
}

impl WaveConfig {
    /// `[-200, 200]`, `n = 4001`, `dt = T/512`, `tol = 1e-8`.
    pub fn desk(period: f64) -> Self {
        Self {
            grid: Grid1D::new(-200.0, 200.0, 4001).unwrap(),
            stepper: StepperConfig::per_period(period, 512),
            tol: 1e-8,
            max_periods: 2000,
            samples_per_period: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveKind {
    Kpp,
    Pulse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodStats {
    pub period: usize,
    /// `sup |u(nT) - u((n-1)T)|`.
    pub change: f64,
    /// `max (u(nT) - u((n-1)T))`; non-positive for a monotone descent.
    pub max_increase: f64,
    /// Sup over `xi >= -limit_cutoff`.
    pub core_sup: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveDiagnostics {
    pub periods: usize,
    pub final_change: f64,
    /// `max_t |U(t, x_min) - target(t)|`.
    pub left_deviation: f64,
    /// `max_t U(t, x_max)`.
    pub right_deviation: f64,
    /// `max_t |U(t, -limit_cutoff) - alpha(t)|`, KPP waves only.
    pub clamp_edge_deviation: f64,
    pub history: Vec<PeriodStats>,
}

/// `U(t_j, x_i)` over one period.
#[derive(Debug, Clone)]
pub struct WaveProfile {
    pub grid: Grid1D,
    pub period: f64,
    pub t_mesh: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub kind: WaveKind,
    pub c: f64,
    pub alpha: Arc<PeriodicOrbit>,
    pub diagnostics: WaveDiagnostics,
}

impl WaveProfile {
    pub fn at_phase(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    /// `U(t, x)` with linear interpolation in `t` (periodic) and `x`; beyond
    /// the grid a KPP wave is extended by `alpha(t)` on the left and by 0 on
    /// the right, a pulse by 0 on both sides.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let s = self.t_mesh.len();
        let phase = t.rem_euclid(self.period) / self.period * s as f64;
        let j0 = (phase.floor() as usize) % s;
        let j1 = (j0 + 1) % s;
        let w = phase - phase.floor();
        let at = |j: usize| -> f64 {
            match self.grid.interpolate(&self.values[j], x) {
                Some(v) => v,
                None if x < self.grid.x_min && self.kind == WaveKind::Kpp => self.alpha.eval(self.t_mesh[j]),
                None => 0.0,
            }
        };
        if w < 1e-14 {
            at(j0)
        } else {
            (1.0 - w) * at(j0) + w * at(j1)
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Worst increase in `x` over all snapshots (0 for a non-increasing profile).
    pub fn monotonicity_defect(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|row| row.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    /// `max (U(t, x) - alpha(t))` over snapshots.
    pub fn alpha_excess(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.t_mesh)
            .flat_map(|(row, &t)| {
                let a = self.alpha.eval(t);
                row.iter().map(move |u| u - a)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,U\n");
        for (row, &t) in self.values.iter().zip(&self.t_mesh) {
            for (i, u) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", fmt_num(t), fmt_num(self.grid.x(i)), fmt_num(*u));
            }
        }
        out
    }

    pub fn sup_distance(&self, other: &WaveProfile) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The period-map iteration in the moving frame, exposed one period at a time.
pub struct PeriodIteration {
    stepper: Stepper,
    field: Field,
    core_start: usize,
    history: Vec<PeriodStats>,
}

impl PeriodIteration {
    pub fn new(
        env: &PeriodicEnvironment,
        c: f64,
        cfg: &WaveConfig,
        bc: BoundaryPolicy,
        start: Vec<f64>,
    ) -> Result<Self, WaveError> {
        let stepper = Stepper::new(env, Frame::Moving { c }, bc, cfg.stepper, cfg.grid)?;
        let core_start = (0..cfg.grid.n)
            .find(|&i| cfg.grid.x(i) >= -env.limit_cutoff())
            .unwrap_or(0);
        let field = Field {
            grid: cfg.grid,
            t: 0.0,
            values: start,
        };
        Ok(Self {
            stepper,
            field,
            core_start,
            history: Vec::new(),
        })
    }

    /// KPP boundary data: `alpha` on the left, 0 on the right.
    pub fn kpp(
        env: &PeriodicEnvironment,
        c: f64,
        cfg: &WaveConfig,
        alpha: Arc<PeriodicOrbit>,
        start: Vec<f64>,
    ) -> Result<Self, WaveError> {
        Self::new(env, c, cfg, BoundaryPolicy::wave(alpha), start)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn history(&self) -> &[PeriodStats] {
        &self.history
    }

    pub fn next_period(&mut self) -> Result<PeriodStats, WaveError> {
        let before = self.field.values.clone();
        self.stepper.integrate_periods(&mut self.field, 1)?;
        let mut change = 0.0f64;
        let mut max_increase = f64::NEG_INFINITY;
        for (a, b) in before.iter().zip(&self.field.values) {
            change = change.max((b - a).abs());
            max_increase = max_increase.max(b - a);
        }
        let core_sup = self.field.values[self.core_start..].iter().copied().fold(0.0, f64::max);
        let stats = PeriodStats {
            period: self.history.len() + 1,
            change,
            max_increase,
            core_sup,
            sup: self.field.sup(),
        };
        self.history.push(stats);
        Ok(stats)
    }

    /// Runs one more period storing `samples` evenly spaced snapshots.
    pub fn sample_period(&mut self, samples: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>), WaveError> {
        let steps = self.stepper.steps_per_period();
        let samples = (1..=samples.min(steps)).rev().find(|s| steps.is_multiple_of(*s)).unwrap_or(1);
        let stride = steps / samples;
        let period = self.stepper.env().period();
        let t0 = self.field.t;
        let mut field = self.field.clone();
        let mut t_mesh = Vec::with_capacity(samples);
        let mut values = Vec::with_capacity(samples);
        for j in 0..samples {
            t_mesh.push(period * j as f64 / samples as f64);
            values.push(field.values.clone());
            field.t = t0 + period * j as f64 / samples as f64;
            self.stepper.advance(&mut field, stride)?;
        }
        Ok((t_mesh, values))
    }
}

/// Starting data for the KPP iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum KppStart {
    /// Constant `M alpha(0)`.
    Level(f64),
    /// `alpha(0)` for `x < 0`, 0 otherwise.
    Step,
    Values(Vec<f64>),
}

fn check_wave_grid(env: &PeriodicEnvironment, grid: &Grid1D) -> Result<(), WaveError> {
    let need = 1.25 * env.limit_cutoff();
    if -grid.x_min < need || grid.x_max < need {
        return Err(WaveError::InvalidGrid(format!(
            "[{}, {}] must extend beyond +-{need} so the clamp region covers a fifth of each side",
            grid.x_min, grid.x_max
        )));
    }
    Ok(())
}

/// Forced KPP wave from the constant start `alpha(0)`.
pub fn compute_kpp_wave(env: &PeriodicEnvironment, c: f64, cfg: &WaveConfig) -> Result<WaveProfile, WaveError> {
    compute_kpp_wave_from(env, c, cfg, &KppStart::Level(1.0))
}

pub fn compute_kpp_wave_from(
    env: &PeriodicEnvironment,
    c: f64,
    cfg: &WaveConfig,
    start: &KppStart,
) -> Result<WaveProfile, WaveError> {
    compute_speed_data(env)?;
    check_wave_grid(env, &cfg.grid)?;
    let alpha = Arc::new(alpha_orbit(env)?);
    let a0 = alpha.values[0];
    let grid = cfg.grid;
    let init = match start {
        KppStart::Level(m) => vec![m * a0; grid.n],
        KppStart::Step => grid.points().iter().map(|&x| if x < 0.0 { a0 } else { 0.0 }).collect(),
        KppStart::Values(v) => {
            if v.len() != grid.n {
                return Err(WaveError::InvalidGrid(format!("start has {} values for {} nodes", v.len(), grid.n)));
            }
            v.clone()
        }
    };
    let mut it = PeriodIteration::kpp(env, c, cfg, alpha.clone(), init)?;
    let mut last;
    loop {
        let stats = it.next_period()?;
        last = stats.change;
        if stats.core_sup < 10.0 * cfg.tol {
            return Err(WaveError::DegenerateWave {
                periods: stats.period,
                core_sup: stats.core_sup,
            });
        }
        if stats.change < cfg.tol {
            break;
        }
        if stats.period >= cfg.max_periods {
            return Err(WaveError::NonConvergence {
                periods: stats.period,
                change: last,
            });
        }
    }
    let (t_mesh, values) = it.sample_period(cfg.samples_per_period)?;
    let n = grid.n;
    let edge = grid
        .interpolate(&values[0], -env.limit_cutoff())
        .map(|_| ())
        .map(|_| {
            values
                .iter()
                .zip(&t_mesh)
                .map(|(row, &t)| (grid.interpolate(row, -env.limit_cutoff()).unwrap() - alpha.eval(t)).abs())
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::NAN);
    let diagnostics = WaveDiagnostics {
        periods: it.history.len(),
        final_change: last,
        left_deviation: values
            .iter()
            .zip(&t_mesh)
            .map(|(row, &t)| (row[0] - alpha.eval(t)).abs())
            .fold(0.0, f64::max),
        right_deviation: values.iter().map(|row| row[n - 1].abs()).fold(0.0, f64::max),
        clamp_edge_deviation: edge,
        history: it.history.clone(),
    };
    Ok(WaveProfile {
        grid,
        period: env.period(),
        t_mesh,
        values,
        kind: WaveKind::Kpp,
        c,
        alpha,
        diagnostics,
    })
}

#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub c: f64,
    /// Converged profiles from starts `alpha(0)`, `3 alpha(0)` and the step.
    pub outcomes: Vec<Result<WaveProfile, WaveError>>,
    /// Pairwise sup distances `(0,1), (0,2), (1,2)` of the converged profiles.
    pub distances: Vec<f64>,
    pub all_degenerate: bool,
}

impl UniquenessReport {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

pub fn verify_uniqueness(env: &PeriodicEnvironment, c: f64, cfg: &WaveConfig) -> Result<UniquenessReport, WaveError> {
    let starts = [KppStart::Level(1.0), KppStart::Level(3.0), KppStart::Step];
    let outcomes: Vec<Result<WaveProfile, WaveError>> = starts
        .iter()
        .map(|s| compute_kpp_wave_from(env, c, cfg, s))
        .collect();
    for o in &outcomes {
        if let Err(e) = o {
            if !matches!(e, WaveError::DegenerateWave { .. }) {
                return Err(e.clone());
            }
        }
    }
    let all_degenerate = outcomes.iter().all(|o| matches!(o, Err(WaveError::DegenerateWave { .. })));
    let mut distances = Vec::new();
    for i in 0..outcomes.len() {
        for j in i + 1..outcomes.len() {
            if let (Ok(a), Ok(b)) = (&outcomes[i], &outcomes[j]) {
                distances.push(a.sup_distance(b));
            }
        }
    }
    Ok(UniquenessReport {
        c,
        outcomes,
        distances,
        all_degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct PulseResult {
    pub profile: WaveProfile,
    pub upper: EnvelopeRecipe,
    pub lower: EnvelopeRecipe,
    pub upper_report: ResidualReport,
    pub lower_report: ResidualReport,
    /// `max(lower - U, U - upper, 0)` over every node and snapshot.
    pub sandwich_violation: f64,
    /// Worst sandwich violation seen at period ends during the iteration.
    pub iteration_violation: f64,
}

/// Forced pulse for `c <= -c*` from `min(upper, alpha)`, with the left end
/// pinned to the upper envelope's tail.
pub fn compute_pulse_wave(
    env: &PeriodicEnvironment,
    c: f64,
    cfg: &WaveConfig,
    shift: f64,
) -> Result<PulseResult, WaveError> {
    let speeds = compute_speed_data(env)?;
    if c > -speeds.c_star && !speeds.is_critical_left(c) {
        return Err(WaveError::NoPulse(format!(
            "c = {c} exceeds -c* = {}; forced pulses need c <= -c*",
            -speeds.c_star
        )));
    }
    check_wave_grid(env, &cfg.grid)?;
    let alpha = Arc::new(alpha_orbit(env)?);
    let (upper, lower) = pulse_envelopes(env, c, shift, &cfg.grid, alpha.as_ref())?;
    let grid = cfg.grid;
    let samples: Vec<f64> = (0..8).map(|k| env.period() * k as f64 / 8.0).collect();
    let check_grid = Grid1D::new(grid.x_min, grid.x_max, grid.n.min(2001))?;
    let upper_report = check_envelope(&upper, &check_grid, &samples);
    let lower_report = check_envelope(&lower, &check_grid, &samples);
    for r in [&upper_report, &lower_report] {
        if !r.passed {
            return Err(WaveError::EnvelopeInvalid(r.summary()));
        }
    }
    let xs = grid.points();
    let start: Vec<f64> = xs.iter().map(|&x| upper.eval(0.0, x).min(alpha.values[0])).collect();
    let up = upper.clone();
    let x_min = grid.x_min;
    let bc = BoundaryPolicy {
        left: Boundary::Dirichlet(Arc::new(move |t| up.eval(t, x_min))),
        right: Boundary::Zero,
    };
    let mut it = PeriodIteration::new(env, c, cfg, bc, start)?;
    let violation_at = |values: &[f64], t: f64| -> f64 {
        xs.iter()
            .zip(values)
            .map(|(&x, &u)| (lower.eval(t, x) - u).max(u - upper.eval(t, x)))
            .fold(0.0, f64::max)
    };
    let mut iteration_violation = 0.0f64;
    let mut last;
    loop {
        let stats = it.next_period()?;
        last = stats.change;
        if stats.period % 10 == 0 || stats.change < cfg.tol {
            iteration_violation = iteration_violation.max(violation_at(&it.field.values, 0.0));
        }
        if stats.change < cfg.tol {
            break;
        }
        if stats.period >= cfg.max_periods {
            return Err(WaveError::NonConvergence {
                periods: stats.period,
                change: last,
            });
        }
    }
    let (t_mesh, values) = it.sample_period(cfg.samples_per_period)?;
    let sandwich_violation = values
        .iter()
        .zip(&t_mesh)
        .map(|(row, &t)| violation_at(row, t))
        .fold(0.0, f64::max);
    let n = grid.n;
    let diagnostics = WaveDiagnostics {
        periods: it.history.len(),
        final_change: last,
        left_deviation: values.iter().map(|row| row[0].abs()).fold(0.0, f64::max),
        right_deviation: values.iter().map(|row| row[n - 1].abs()).fold(0.0, f64::max),
        clamp_edge_deviation: f64::NAN,
        history: it.history.clone(),
    };
    let profile = WaveProfile {
        grid,
        period: env.period(),
        t_mesh,
        values,
        kind: WaveKind::Pulse,
        c,
        alpha,
        diagnostics,
    };
    Ok(PulseResult {
        profile,
        upper,
        lower,
        upper_report,
        lower_report,
        sandwich_violation,
        iteration_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{tanh_fisher, GrowthFn, LimitFn, TanhFisherParams};
    use approx::assert_relative_eq;

    fn speeds(gm: f64, gp: f64) -> SpeedData {
        SpeedData {
            c_star: 2.0 * gm.sqrt(),
            g_minus_mean: gm,
            g_plus_mean: gp,
        }
    }

    #[test]
    fn quadratic_roots() {
        let s = speeds(1.0, -1.0);
        assert_relative_eq!(s.lambda_1c(2.5).unwrap(), -0.5, epsilon = 1e-15);
        assert_relative_eq!(s.lambda_1c(-2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.lambda_1c(2.0).unwrap(), -1.0, epsilon = 1e-15);
        assert!(s.lambda_1c(1.0).is_none());
        assert_relative_eq!(s.mu_c(0.0), -1.0, epsilon = 1e-15);
        for c in [-5.0, -2.0, 2.0, 3.0, 7.0] {
            let l = s.lambda_1c(c).unwrap();
            assert!(s.mu_c(c) < l);
            assert!(if c > 0.0 { l < 0.0 } else { l > 0.0 });
        }
    }

    #[test]
    fn seasonal_speed_is_two() {
        let env = tanh_fisher(&TanhFisherParams::default()).unwrap();
        let s = compute_speed_data(&env).unwrap();
        assert_relative_eq!(s.c_star, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn autonomous_step_wave_solves_steady_equation() {
        // a(x) = 1 for x < 0, -1 for x > 0; fixed points of the IMEX scheme
        // are exact discrete steady states
        let g: GrowthFn = Arc::new(|_, x: f64, u| if x < 0.0 { 1.0 - u } else { -1.0 - u });
        let gm: LimitFn = Arc::new(|_, u| 1.0 - u);
        let gp: LimitFn = Arc::new(|_, u| -1.0 - u);
        let env = PeriodicEnvironment::new("step", 1.0, g, gm, gp, 20.0, 1.0);
        let cfg = WaveConfig {
            grid: Grid1D::new(-40.0, 40.0, 801).unwrap(),
            stepper: StepperConfig::per_period(1.0, 128).with_scheme(crate::pde::Scheme::ImexCn),
            tol: 1e-10,
            max_periods: 2000,
            samples_per_period: 4,
        };
        let w = compute_kpp_wave(&env, 0.0, &cfg).unwrap();
        let u = w.at_phase(0);
        let dx = cfg.grid.dx();
        let mut worst = 0.0f64;
        for i in 1..u.len() - 1 {
            let x = cfg.grid.x(i);
            if x.abs() < 1.5 * dx {
                continue;
            }
            let a = if x < 0.0 { 1.0 } else { -1.0 };
            let r = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (dx * dx) + u[i] * (a - u[i]);
            worst = worst.max(r.abs());
        }
        assert!(worst <= 10.0 * cfg.tol, "steady residual {worst}");
        assert!(w.monotonicity_defect() < 1e-8);
    }

    #[test]
    fn pulse_needs_fast_leftward_shift() {
        let env = tanh_fisher(&TanhFisherParams::default()).unwrap();
        let cfg = WaveConfig::desk(1.0);
        assert!(matches!(compute_pulse_wave(&env, -1.0, &cfg, 0.0), Err(WaveError::NoPulse(_))));
    }
}
