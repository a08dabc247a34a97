//! Lab-frame initial value problems: extinction, spreading at `c*`, and
//! attraction to the forced wave, with front tracking and rate fits.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::env::PeriodicEnvironment;
use crate::output::fmt_num;
use crate::pde::{BoundaryPolicy, Field, Frame, Grid1D, PdeError, Stepper, StepperConfig};
use crate::waves::{self, WaveError, WaveProfile};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid initial data: {0}")]
    InvalidInit(String),
    #[error("need at least {needed} samples in the fit window, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid fit window: {0}")]
    InvalidWindow(String),
    #[error("phase mismatch: {0}")]
    PhaseMismatch(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Wave(#[from] WaveError),
}

fn one() -> f64 {
    1.0
}

/// Non-negative bounded initial densities.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `height` on `[center - half_width, center + half_width]`, 0 elsewhere.
    CompactBump {
        #[serde(default = "one")]
        height: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        half_width: f64,
    },
    /// `height e^{rate (x - edge)}` for `x <= edge`, 0 beyond.
    ExpTail {
        #[serde(default = "one")]
        height: f64,
        rate: f64,
        #[serde(default)]
        edge: f64,
    },
    /// `level / (1 + e^{2 (x - center) / width})`.
    FrontLike {
        #[serde(default = "one")]
        level: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
    },
    Constant { level: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::CompactBump {
            height: 1.0,
            center: 0.0,
            half_width: 1.0,
        }
    }
}

impl InitialData {
    pub const KINDS: [&'static str; 4] = ["compact_bump", "exp_tail", "front_like", "constant"];

    pub fn kind(&self) -> &'static str {
        match self {
            InitialData::CompactBump { .. } => "compact_bump",
            InitialData::ExpTail { .. } => "exp_tail",
            InitialData::FrontLike { .. } => "front_like",
            InitialData::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = match *self {
            InitialData::CompactBump { height, half_width, .. } => height > 0.0 && half_width > 0.0,
            InitialData::ExpTail { height, rate, .. } => height > 0.0 && rate > 0.0,
            InitialData::FrontLike { level, width, .. } => level > 0.0 && width > 0.0,
            InitialData::Constant { level } => level > 0.0,
        };
        let finite = match *self {
            InitialData::CompactBump { height, center, half_width } => [height, center, half_width].iter().all(|v| v.is_finite()),
            InitialData::ExpTail { height, rate, edge } => [height, rate, edge].iter().all(|v| v.is_finite()),
            InitialData::FrontLike { level, center, width } => [level, center, width].iter().all(|v| v.is_finite()),
            InitialData::Constant { level } => level.is_finite(),
        };
        if ok && finite {
            Ok(())
        } else {
            Err(DynamicsError::InvalidInit(format!(
                "{self:?}: heights, rates and widths must be positive and finite"
            )))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialData::CompactBump { height, center, half_width } => {
                if (x - center).abs() <= half_width {
                    height
                } else {
                    0.0
                }
            }
            InitialData::ExpTail { height, rate, edge } => {
                if x <= edge {
                    height * (rate * (x - edge)).exp()
                } else {
                    0.0
                }
            }
            InitialData::FrontLike { level, center, width } => level / (1.0 + (2.0 * (x - center) / width).exp()),
            InitialData::Constant { level } => level,
        }
    }

    pub fn field(&self, grid: Grid1D) -> Field {
        Field::from_fn(grid, 0.0, |x| self.eval(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailIntegral {
    /// Trapezoid rule over the grid.
    pub quadrature: f64,
    /// Analytic contribution from outside the grid (infinite if divergent).
    pub outside: f64,
    /// Exact value over the real line when available.
    pub closed_form: Option<f64>,
    pub finite: bool,
}

impl TailIntegral {
    pub fn total(&self) -> f64 {
        self.quadrature + self.outside
    }
}

/// `int e^{-rate x} u0(x) dx`.
pub fn tail_integral(init: &InitialData, rate: f64, grid: &Grid1D) -> TailIntegral {
    let xs = grid.points();
    let f: Vec<f64> = xs.iter().map(|&x| (-rate * x).exp() * init.eval(x)).collect();
    let dx = grid.dx();
    let quadrature = dx * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[f.len() - 1]));
    let (a, b) = (grid.x_min, grid.x_max);
    // e^{-r x} integrated over [lo, hi]
    let exp_int = |r: f64, lo: f64, hi: f64| {
        if r == 0.0 {
            hi - lo
        } else {
            ((-r * lo).exp() - (-r * hi).exp()) / r
        }
    };
    let (outside, closed_form) = match *init {
        InitialData::CompactBump { height, center, half_width } => {
            let (lo, hi) = (center - half_width, center + half_width);
            let exact = height * exp_int(rate, lo, hi);
            let inside = height * exp_int(rate, lo.max(a), hi.min(b).max(lo.max(a)));
            (exact - inside, Some(exact))
        }
        InitialData::ExpTail { height, rate: l0, edge } => {
            if l0 > rate {
                let k = l0 - rate;
                // height e^{-l0 edge} int_{-inf}^{x} e^{k s} ds
                let upto = |x: f64| height * (-l0 * edge).exp() * (k * x).exp() / k;
                let left = upto(a.min(edge));
                let right = if edge > b { upto(edge) - upto(b) } else { 0.0 };
                (left + right, Some(upto(edge)))
            } else {
                (f64::INFINITY, None)
            }
        }
        InitialData::FrontLike { level, center, width } => {
            let k = 2.0 / width + rate;
            if rate < 0.0 && k > 0.0 {
                // level e^{-r x} is integrable on the left; on the right the
                // density is bounded by level e^{-2 (x - center) / width}
                let left = level * (-rate * a).exp() / -rate;
                let right = level * (2.0 * center / width).exp() * (-k * b).exp() / k;
                (left + right, None)
            } else {
                (f64::INFINITY, None)
            }
        }
        InitialData::Constant { .. } => (f64::INFINITY, None),
    };
    TailIntegral {
        quadrature,
        outside,
        closed_form,
        finite: outside.is_finite(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// Smallest `x` with `u >= level`; `+inf` if none.
    pub x_left: f64,
    /// Largest `x` with `u >= level`; `-inf` if none.
    pub x_right: f64,
    pub sup_u: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontTrace {
    pub level: f64,
    pub period: f64,
    pub rows: Vec<TraceRow>,
}

impl FrontTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x_left,x_right,sup_u,mass\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_num(r.t),
                fmt_num(r.x_left),
                fmt_num(r.x_right),
                fmt_num(r.sup_u),
                fmt_num(r.mass)
            );
        }
        out
    }
}

/// Front positions of `field` at `level`, linearly interpolated between
/// nodes.
pub fn trace_row(field: &Field, level: f64) -> TraceRow {
    let u = &field.values;
    let g = field.grid;
    let n = u.len();
    let cross = |i: usize, j: usize| {
        // u[i] >= level > u[j] for adjacent nodes
        let w = (u[i] - level) / (u[i] - u[j]);
        g.x(i) + w * (g.x(j) - g.x(i))
    };
    let x_right = match (0..n).rev().find(|&i| u[i] >= level) {
        Some(i) if i + 1 < n => cross(i, i + 1),
        Some(i) => g.x(i),
        None => f64::NEG_INFINITY,
    };
    let x_left = match (0..n).find(|&i| u[i] >= level) {
        Some(i) if i > 0 => cross(i, i - 1),
        Some(i) => g.x(i),
        None => f64::INFINITY,
    };
    let mass = g.dx() * (u.iter().sum::<f64>() - 0.5 * (u[0] + u[n - 1]));
    TraceRow {
        t: field.t,
        x_left,
        x_right,
        sup_u: field.sup(),
        mass,
    }
}

#[derive(Debug, Clone)]
pub struct IvpRun {
    pub field: Field,
    pub trace: FrontTrace,
    /// Set when a front came within 10% of the domain length of an end.
    pub boundary_contaminated: bool,
}

/// Solves the lab-frame problem with zero-flux ends for `horizon_periods`
/// periods, recording the front trace at every period multiple. The front
/// level is half the minimum of `alpha`.
pub fn run_ivp(
    env: &PeriodicEnvironment,
    c: f64,
    init: &InitialData,
    grid: Grid1D,
    cfg: StepperConfig,
    horizon_periods: usize,
) -> Result<IvpRun, DynamicsError> {
    init.validate()?;
    let alpha = waves::alpha_orbit(env)?;
    let level = 0.5 * alpha.min();
    let mut stepper = Stepper::new(env, Frame::Lab { c }, BoundaryPolicy::neumann(), cfg, grid)?;
    let mut field = init.field(grid);
    let margin = 0.1 * (grid.x_max - grid.x_min);
    let near_edge = |r: &TraceRow| {
        (r.x_right.is_finite() && r.x_right > grid.x_max - margin) || (r.x_left.is_finite() && r.x_left < grid.x_min + margin)
    };
    let mut rows = vec![trace_row(&field, level)];
    let mut contaminated = false;
    for _ in 0..horizon_periods {
        stepper.integrate_periods(&mut field, 1)?;
        let row = trace_row(&field, level);
        contaminated |= near_edge(&row);
        rows.push(row);
    }
    Ok(IvpRun {
        field,
        trace: FrontTrace {
            level,
            period: env.period(),
            rows,
        },
        boundary_contaminated: contaminated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontSide {
    /// `X_right(t)`.
    Right,
    /// `-X_left(t)`, so that a front spreading leftwards has positive speed.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedFit {
    pub c_hat: f64,
    pub gamma_hat: f64,
    pub intercept: f64,
    pub rms: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Least squares fit of `X(t) = c t - gamma ln t + b`.
pub fn fit_log_corrected(samples: &[(f64, f64)]) -> Result<SpeedFit, DynamicsError> {
    if samples.len() < 20 {
        return Err(DynamicsError::InsufficientData {
            needed: 20,
            got: samples.len(),
        });
    }
    let a = DMatrix::from_fn(samples.len(), 3, |i, j| {
        let t = samples[i].0;
        match j {
            0 => t,
            1 => -t.ln(),
            _ => 1.0,
        }
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| DynamicsError::InvalidWindow(e.to_string()))?;
    let resid = &a * &coef - &y;
    Ok(SpeedFit {
        c_hat: coef[0],
        gamma_hat: coef[1],
        intercept: coef[2],
        rms: (resid.norm_squared() / samples.len() as f64).sqrt(),
        window: (samples[0].0, samples[samples.len() - 1].0),
        samples: samples.len(),
    })
}

/// Fits one front of `trace` over `window` (default `[t_end/3, t_end]`).
/// The window must start at or after `10 T`.
pub fn fit_front_speed(trace: &FrontTrace, side: FrontSide, window: Option<(f64, f64)>) -> Result<SpeedFit, DynamicsError> {
    let t_end = trace.rows.last().map(|r| r.t).unwrap_or(0.0);
    let (t1, t2) = window.unwrap_or((t_end / 3.0, t_end));
    if !(t2 > t1) || t1 < 10.0 * trace.period * (1.0 - 1e-12) {
        return Err(DynamicsError::InvalidWindow(format!(
            "[{t1}, {t2}] must satisfy t2 > t1 >= 10 T = {}",
            10.0 * trace.period
        )));
    }
    let eps = 1e-9 * t2.abs().max(1.0);
    let samples: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.t >= t1 - eps && r.t <= t2 + eps)
        .map(|r| {
            (
                r.t,
                match side {
                    FrontSide::Right => r.x_right,
                    FrontSide::Left => -r.x_left,
                },
            )
        })
        .filter(|s| s.1.is_finite())
        .collect();
    fit_log_corrected(&samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub sigma_hat: f64,
    pub rms: f64,
    /// Level at which `e(t)` stops decreasing.
    pub floor: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct AttractionReport {
    /// `(t, e(t))` at period multiples, `e(t) = sup_{x >= -c* t / 2} |u - U(t, x - ct)|`.
    pub series: Vec<(f64, f64)>,
    /// `Some(delta)` if sampled `g_u < -delta` holds with `delta > 0`.
    pub decreasing_in_u: Option<f64>,
    /// Log-linear fit of `e(t)`, reported for front-like data when `g` is
    /// strictly decreasing in `u`.
    pub decay: Option<DecayFit>,
    pub boundary_contaminated: bool,
}

impl AttractionReport {
    pub fn final_error(&self) -> f64 {
        self.series.last().map(|s| s.1).unwrap_or(f64::NAN)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,error\n");
        for (t, e) in &self.series {
            let _ = writeln!(out, "{},{}", fmt_num(*t), fmt_num(*e));
        }
        out
    }
}

/// Largest sampled `g_u`, negated: `g_u < -delta` on the sample set.
pub fn sampled_decrease_margin(env: &PeriodicEnvironment, u_top: f64) -> f64 {
    let cutoff = env.limit_cutoff().min(1e4);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..16 {
        let t = env.period() * k as f64 / 16.0;
        for i in 0..=64 {
            let xi = -2.0 * cutoff + 4.0 * cutoff * i as f64 / 64.0;
            for j in 0..=16 {
                worst = worst.max(env.du_growth(t, xi, u_top * j as f64 / 16.0));
            }
        }
    }
    -worst
}

/// Log-linear fit of `e(t)` over its initial decay. The lab-frame run and
/// the moving-frame wave are different discretizations, so `e(t)` levels off
/// at a floor (median over the last quarter of the series); the fit uses the
/// leading run of samples with `t > 0` and `e > 10 floor`.
pub fn fit_decay(series: &[(f64, f64)]) -> Option<DecayFit> {
    let t_end = series.last()?.0;
    let mut tail: Vec<f64> = series.iter().filter(|p| p.0 >= 0.75 * t_end).map(|p| p.1).collect();
    if tail.is_empty() {
        return None;
    }
    tail.sort_by(|a, b| a.total_cmp(b));
    let floor = tail[tail.len() / 2].max(1e-13);
    // the decay phase starts at the largest error; before it the data is
    // still being carried onto the wave
    let start = series
        .iter()
        .enumerate()
        .filter(|(_, p)| p.0 > 0.0)
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?
        .0;
    let pts: Vec<(f64, f64)> = series[start..]
        .iter()
        .take_while(|p| p.1 > 10.0 * floor)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 5 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rms = (pts.iter().map(|p| (my + slope * (p.0 - mt) - p.1).powi(2)).sum::<f64>() / n).sqrt();
    Some(DecayFit {
        sigma_hat: -slope,
        rms,
        floor,
        window: (pts[0].0, pts[pts.len() - 1].0),
        samples: pts.len(),
    })
}

/// Runs the lab-frame problem and measures its distance to the forced wave
/// `U(t, x - ct)` once per period.
pub fn wave_attraction_error(
    env: &PeriodicEnvironment,
    c: f64,
    init: &InitialData,
    wave: &WaveProfile,
    grid: Grid1D,
    cfg: StepperConfig,
    horizon: f64,
) -> Result<AttractionReport, DynamicsError> {
    init.validate()?;
    let period = env.period();
    let periods = horizon / period;
    if !(periods >= 0.0) || (periods - periods.round()).abs() > 1e-9 * periods.max(1.0) {
        return Err(DynamicsError::PhaseMismatch(format!(
            "horizon {horizon} is not a whole number of periods {period}"
        )));
    }
    if (wave.period - period).abs() > 1e-12 * period || (wave.c - c).abs() > 1e-12 * c.abs().max(1.0) {
        return Err(DynamicsError::PhaseMismatch(format!(
            "wave computed for (T, c) = ({}, {}), run uses ({period}, {c})",
            wave.period, wave.c
        )));
    }
    let speeds = waves::compute_speed_data(env)?;
    let mu = speeds.c_star / 2.0;
    let mut stepper = Stepper::new(env, Frame::Lab { c }, BoundaryPolicy::neumann(), cfg, grid)?;
    let mut field = init.field(grid);
    let xs = grid.points();
    let error_at = |field: &Field| -> f64 {
        let t = field.t;
        xs.iter()
            .zip(&field.values)
            .filter(|(&x, _)| x >= -mu * t)
            .map(|(&x, &u)| (u - wave.eval(t, x - c * t)).abs())
            .fold(0.0, f64::max)
    };
    let alpha_max = wave.alpha.max();
    let margin = sampled_decrease_margin(env, 1.5 * alpha_max.max(init_sup(init)));
    let decreasing_in_u = (margin > 0.0).then_some(margin);
    let mut series = vec![(0.0, error_at(&field))];
    let edge = 0.1 * (grid.x_max - grid.x_min);
    let level = 0.5 * wave.alpha.min();
    let mut contaminated = false;
    for _ in 0..periods.round() as usize {
        stepper.integrate_periods(&mut field, 1)?;
        series.push((field.t, error_at(&field)));
        let row = trace_row(&field, level);
        contaminated |= row.x_right.is_finite() && row.x_right > grid.x_max - edge;
    }
    let decay = match (init, decreasing_in_u) {
        (InitialData::FrontLike { .. }, Some(_)) => fit_decay(&series),
        _ => None,
    };
    Ok(AttractionReport {
        series,
        decreasing_in_u,
        decay,
        boundary_contaminated: contaminated,
    })
}

fn init_sup(init: &InitialData) -> f64 {
    match *init {
        InitialData::CompactBump { height, .. } => height,
        InitialData::ExpTail { height, .. } => height,
        InitialData::FrontLike { level, .. } => level,
        InitialData::Constant { level } => level,
    }
}
