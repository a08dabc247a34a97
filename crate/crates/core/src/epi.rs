//! Periodic SIS epidemic in a shifting host front: reduction to the host
//! density `N` and the infectious density `I`, the invasion index `A_bar`,
//! transmission thresholds and the small/large period limits.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::env::{GrowthFn, LimitFn, PeriodicEnvironment};
use crate::numerics;
use crate::pde::{Boundary, BoundaryPolicy, Grid1D, StepperConfig};
use crate::pode::{self, PeriodicOrbit, PodeError};
use crate::waves::{PeriodIteration, WaveConfig, WaveDiagnostics, WaveKind, WaveProfile};

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DensityRateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum EpiError {
    #[error("invalid epidemic parameters: {0}")]
    InvalidParams(String),
    #[error("epidemic assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("transmission profile integrates to zero against the host orbit")]
    DegenerateTransmission,
    #[error("root not bracketed: {0}")]
    RootBracketFailure(String),
    #[error("host density increases in xi at t = {t}, xi = {xi}")]
    MonotonicityViolation { t: f64, xi: f64 },
    #[error(transparent)]
    Orbit(#[from] PodeError),
    #[error("host wave: {0}")]
    HostWave(String),
}

/// Coefficients `B(t, N)`, `mu(t, N)`, `omega(t)`, `gamma(t)` of the SIS system.
#[derive(Clone)]
pub struct EpidemicParams {
    pub birth: DensityRateFn,
    pub death: DensityRateFn,
    pub transmission: RateFn,
    pub recovery: RateFn,
    pub period: f64,
}

impl std::fmt::Debug for EpidemicParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpidemicParams").field("period", &self.period).finish()
    }
}

impl EpidemicParams {
    /// Net host growth `B - mu`.
    pub fn net_growth(&self, t: f64, n: f64) -> f64 {
        (self.birth)(t, n) - (self.death)(t, n)
    }

    /// Same coefficients with the transmission rate multiplied by `l`.
    pub fn with_transmission_scale(&self, l: f64) -> Self {
        let w = self.transmission.clone();
        Self {
            transmission: Arc::new(move |t| l * w(t)),
            ..self.clone()
        }
    }
}

fn seasonal(mean: f64, amp: f64, period: f64) -> impl Fn(f64) -> f64 + Clone {
    move |t: f64| mean * (1.0 + amp * (2.0 * PI * t / period).sin())
}

fn default_period() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_transmission() -> f64 {
    5.0
}

/// Config-friendly seasonal family: `B = b0 (1 + b_amp sin)`,
/// `mu = m0 + m1 N`, `omega = w0 (1 + w_amp sin)`, `gamma = g0`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonalEpidemic {
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_one")]
    pub b0: f64,
    #[serde(default)]
    pub b_amp: f64,
    #[serde(default)]
    pub m0: f64,
    #[serde(default = "default_one")]
    pub m1: f64,
    #[serde(default = "default_transmission")]
    pub w0: f64,
    #[serde(default)]
    pub w_amp: f64,
    #[serde(default = "default_one")]
    pub g0: f64,
}

impl Default for SeasonalEpidemic {
    fn default() -> Self {
        Self {
            period: 1.0,
            b0: 1.0,
            b_amp: 0.0,
            m0: 0.0,
            m1: 1.0,
            w0: 5.0,
            w_amp: 0.0,
            g0: 1.0,
        }
    }
}

impl SeasonalEpidemic {
    pub fn build(&self) -> Result<EpidemicParams, EpiError> {
        let p = self.period;
        if !(p > 0.0 && p.is_finite()) {
            return Err(EpiError::InvalidParams(format!("period must be positive, got {p}")));
        }
        if self.b_amp.abs() > 1.0 || self.w_amp.abs() > 1.0 {
            return Err(EpiError::InvalidParams("seasonal amplitudes must lie in [-1, 1]".into()));
        }
        if self.w0 < 0.0 || self.g0 < 0.0 || self.m0 < 0.0 || self.m1 < 0.0 {
            return Err(EpiError::InvalidParams(
                "transmission, recovery and death coefficients must be non-negative".into(),
            ));
        }
        let b = seasonal(self.b0, self.b_amp, p);
        let w = seasonal(self.w0, self.w_amp, p);
        let (m0, m1, g0) = (self.m0, self.m1, self.g0);
        Ok(EpidemicParams {
            birth: Arc::new(move |t, _n| b(t)),
            death: Arc::new(move |_t, n| m0 + m1 * n),
            transmission: Arc::new(w),
            recovery: Arc::new(move |_t| g0),
            period: p,
        })
    }
}

/// Checks strict decrease of `B - mu` in `N`, positive mean at `N = 0` and
/// a level `M` with `B - mu <= 0`; returns that level.
pub fn check_host_assumptions(params: &EpidemicParams) -> Result<f64, EpiError> {
    let period = params.period;
    let mean0 = numerics::period_mean(|t| params.net_growth(t, 0.0), period, 1e-13);
    if !(mean0 > 0.0) {
        return Err(EpiError::AssumptionViolation(format!(
            "mean host growth at N = 0 is {mean0}, must be positive"
        )));
    }
    let ts: Vec<f64> = (0..32).map(|k| period * k as f64 / 32.0).collect();
    let mut cap = 1.0;
    while !ts.iter().all(|&t| params.net_growth(t, cap) <= 0.0) {
        cap *= 2.0;
        if cap > 1e12 {
            return Err(EpiError::AssumptionViolation(
                "B - mu stays positive for every sampled density".into(),
            ));
        }
    }
    for &t in &ts {
        for k in 0..32 {
            let (n0, n1) = (cap * k as f64 / 32.0, cap * (k + 1) as f64 / 32.0);
            if !(params.net_growth(t, n1) < params.net_growth(t, n0)) {
                return Err(EpiError::AssumptionViolation(format!(
                    "B - mu not strictly decreasing in N at t = {t}, N = {n1}"
                )));
            }
        }
    }
    Ok(cap)
}

#[derive(Debug, Clone)]
pub struct EpidemicDerived {
    pub params: EpidemicParams,
    pub n_star: Arc<PeriodicOrbit>,
    pub c_n: f64,
    /// `(t, A(t))` on the host orbit mesh.
    pub a_samples: Vec<(f64, f64)>,
    pub a_bar: f64,
    pub i_star: Option<PeriodicOrbit>,
    pub wave_interval: Option<(f64, f64)>,
}

impl EpidemicDerived {
    /// `A(t) = omega N* - mu(t, N*) - gamma`.
    pub fn a_rate(&self, t: f64) -> f64 {
        a_rate(&self.params, &self.n_star, t)
    }
}

fn a_rate(params: &EpidemicParams, n_star: &PeriodicOrbit, t: f64) -> f64 {
    let n = n_star.eval(t);
    (params.transmission)(t) * n - (params.death)(t, n) - (params.recovery)(t)
}

const ORBIT_TOL: f64 = 1e-12;

pub fn derive_epidemic(params: &EpidemicParams) -> Result<EpidemicDerived, EpiError> {
    let cap = check_host_assumptions(params)?;
    let period = params.period;
    let n_star = Arc::new(pode::solve_periodic_orbit(
        |t, n| params.net_growth(t, n),
        period,
        ORBIT_TOL,
        (1e-6, 10.0 * cap),
    )?);
    let mean0 = numerics::period_mean(|t| params.net_growth(t, 0.0), period, 1e-14);
    let c_n = 2.0 * mean0.sqrt();
    let a_samples = n_star
        .t_mesh
        .iter()
        .map(|&t| (t, a_rate(params, &n_star, t)))
        .collect();
    let a_bar = numerics::period_mean(|t| a_rate(params, &n_star, t), period, 1e-14);
    let i_star = if a_bar > 0.0 {
        let ns = n_star.clone();
        let h = |t: f64, i: f64| a_rate(params, &ns, t) - (params.transmission)(t) * i;
        let hi = 2.0 * n_star.max();
        let orbit = pode::solve_periodic_orbit(h, period, ORBIT_TOL * n_star.max(), (1e-10 * hi, hi))?;
        Some(orbit)
    } else {
        None
    };
    let wave_interval = (a_bar > c_n * c_n / 4.0).then(|| (c_n, 2.0 * a_bar.sqrt()));
    Ok(EpidemicDerived {
        params: params.clone(),
        n_star,
        c_n,
        a_samples,
        a_bar,
        i_star,
        wave_interval,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionThresholds {
    /// `A_bar(l) = 0`.
    pub l_low: f64,
    /// `A_bar(l) = c_N^2 / 4`.
    pub l_high: f64,
    /// Slope of the affine map `l -> A_bar(l)`.
    pub slope: f64,
    pub intercept: f64,
}

impl TransmissionThresholds {
    pub fn a_bar(&self, l: f64) -> f64 {
        self.slope * l + self.intercept
    }
}

/// Roots of the affine map `l -> A_bar(l)` for `omega = l * omega_tilde`,
/// where `params.transmission` is `omega_tilde`.
pub fn transmission_thresholds(params: &EpidemicParams) -> Result<TransmissionThresholds, EpiError> {
    let derived = derive_epidemic(&params.with_transmission_scale(0.0))?;
    let period = params.period;
    let ns = &derived.n_star;
    let slope = numerics::period_mean(|t| (params.transmission)(t) * ns.eval(t), period, 1e-14);
    if slope.abs() < 1e-300 {
        return Err(EpiError::DegenerateTransmission);
    }
    let loss = numerics::period_mean(
        |t| (params.death)(t, ns.eval(t)) + (params.recovery)(t),
        period,
        1e-14,
    );
    let quarter = derived.c_n * derived.c_n / 4.0;
    Ok(TransmissionThresholds {
        l_low: loss / slope,
        l_high: (loss + quarter) / slope,
        slope,
        intercept: -loss,
    })
}

#[derive(Debug, Clone)]
pub struct PeriodRow {
    pub period: f64,
    pub orbit: PeriodicOrbit,
    pub a_bar: f64,
    pub sup_dev_zero: f64,
    pub sup_dev_inf: f64,
}

#[derive(Debug, Clone)]
pub struct PeriodLimits {
    pub rows: Vec<PeriodRow>,
    pub v_zero: f64,
    /// Pointwise root `v_inf(s)` on a uniform mesh of `[0, 1]`.
    pub v_inf: Vec<(f64, f64)>,
    pub a_bar_zero: f64,
    pub a_bar_inf: f64,
}

fn root_in(f: impl Fn(f64) -> f64, hi: f64, what: &str) -> Result<f64, EpiError> {
    numerics::bisect(f, 0.0, hi, 1e-14).ok_or_else(|| EpiError::RootBracketFailure(what.to_string()))
}

/// `v_T(s)` for the normalized host problem `dv/ds = T v (B - mu)(s, v)`,
/// together with its `T -> 0` and `T -> inf` limits and the matching
/// invasion index `A_bar(T)`. `normalized` must have period 1.
pub fn period_limits(normalized: &EpidemicParams, periods: &[f64]) -> Result<PeriodLimits, EpiError> {
    if (normalized.period - 1.0).abs() > 1e-12 {
        return Err(EpiError::InvalidParams("normalized coefficients must have period 1".into()));
    }
    let cap = check_host_assumptions(normalized)?;
    let p = normalized;
    let a_of = |s: f64, v: f64| (p.transmission)(s) * v - (p.death)(s, v) - (p.recovery)(s);

    let v_zero = root_in(
        |w| numerics::integrate(|s| p.net_growth(s, w), 0.0, 1.0, 1e-14),
        2.0 * cap,
        "mean host growth has no root",
    )?;
    let n_mesh = 256;
    let mut v_inf = Vec::with_capacity(n_mesh + 1);
    for k in 0..=n_mesh {
        let s = k as f64 / n_mesh as f64;
        let root = root_in(|w| p.net_growth(s, w), 2.0 * cap, &format!("pointwise root at s = {s}"))?;
        v_inf.push((s, root));
    }
    let v_inf_at = |s: f64| -> f64 {
        numerics::bisect(|w| p.net_growth(s, w), 0.0, 2.0 * cap, 1e-14).unwrap_or(f64::NAN)
    };
    let a_bar_zero = numerics::integrate(|s| a_of(s, v_zero), 0.0, 1.0, 1e-13);
    let a_bar_inf = numerics::integrate(|s| a_of(s, v_inf_at(s)), 0.0, 1.0, 1e-10);

    let mut rows = Vec::with_capacity(periods.len());
    for &period in periods {
        if !(period > 0.0) {
            return Err(EpiError::InvalidParams(format!("period {period} must be positive")));
        }
        let orbit = pode::solve_periodic_orbit(
            |s, v| period * p.net_growth(s, v),
            1.0,
            1e-12,
            (1e-6, 10.0 * cap),
        )?;
        let a_bar = numerics::integrate(|s| a_of(s, orbit.eval(s)), 0.0, 1.0, 1e-12);
        let sup_dev_zero = orbit
            .values
            .iter()
            .map(|v| (v - v_zero).abs())
            .fold(0.0, f64::max);
        let sup_dev_inf = orbit
            .t_mesh
            .iter()
            .zip(&orbit.values)
            .step_by((orbit.intervals() / 256).max(1))
            .map(|(&s, &v)| (v - v_inf_at(s)).abs())
            .fold(0.0, f64::max);
        rows.push(PeriodRow {
            period,
            orbit,
            a_bar,
            sup_dev_zero,
            sup_dev_inf,
        });
    }
    Ok(PeriodLimits {
        rows,
        v_zero,
        v_inf,
        a_bar_zero,
        a_bar_inf,
    })
}

/// A host density `N(t, xi)` along a front, non-increasing in `xi`, with
/// `N -> N*(t)` on the left and `N -> 0` on the right.
#[derive(Clone)]
pub struct HostDensity {
    pub density: GrowthLike,
    pub n_star: Arc<PeriodicOrbit>,
    /// `|xi|` beyond which `N` equals its limits to within `1e-12`.
    pub cutoff: f64,
    pub xi_samples: Vec<f64>,
    /// The computed profile when the density comes from a host wave.
    pub profile: Option<Arc<WaveProfile>>,
}

pub type GrowthLike = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

impl HostDensity {
    /// `N*(t) (1 - tanh(xi / width)) / 2`.
    pub fn tanh_front(n_star: Arc<PeriodicOrbit>, width: f64) -> Self {
        let ns = n_star.clone();
        let density: GrowthLike = Arc::new(move |t, xi| ns.eval(t) / (1.0 + (2.0 * xi / width).exp()));
        let cutoff = 20.0 * width;
        let xi_samples = (0..=400).map(|k| -cutoff + 2.0 * cutoff * k as f64 / 400.0).collect();
        Self {
            density,
            n_star,
            cutoff,
            xi_samples,
            profile: None,
        }
    }
}

/// Settings for [`HostDensity::traveling_wave`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostWaveConfig {
    pub grid: Grid1D,
    pub steps_per_period: usize,
    pub tol: f64,
    pub max_periods: usize,
    pub samples_per_period: usize,
}

impl HostWaveConfig {
    /// `[-100, 100]`, `n = 2001`, `dt = T/256`, `tol = 1e-9`.
    pub fn desk() -> Self {
        Self {
            grid: Grid1D::new(-100.0, 100.0, 2001).expect("static grid"),
            steps_per_period: 256,
            tol: 1e-9,
            max_periods: 3000,
            samples_per_period: 32,
        }
    }
}

impl HostDensity {
    /// Periodic traveling wave of `N_t = N_xx + N (B - mu)` at speed
    /// `c >= c_N`, computed in the frame moving at `c`. The left end is
    /// clamped to `N*`; the right end is pinned to the slow exponential tail
    /// `psi(t) e^{-lambda xi}`, which fixes the otherwise free translation.
    /// `cutoff` is set to 80% of the half-width so the same grid can carry
    /// the infection wave.
    pub fn traveling_wave(derived: &EpidemicDerived, c: f64, cfg: &HostWaveConfig) -> Result<Self, EpiError> {
        let c_n = derived.c_n;
        if c < c_n * (1.0 - 1e-10) {
            return Err(EpiError::HostWave(format!("speed {c} is below the minimal host speed {c_n}")));
        }
        let grid = cfg.grid;
        if !(grid.x_min < 0.0 && grid.x_max > 0.0) {
            return Err(EpiError::HostWave("grid must contain 0".into()));
        }
        let period = derived.params.period;
        let lambda = (c - (c * c - c_n * c_n).max(0.0).sqrt()) / 2.0;
        let mean0 = c_n * c_n / 4.0;
        let p = derived.params.clone();
        let psi = Arc::new(pode::periodic_weight(|t| p.net_growth(t, 0.0) - mean0, period)?);

        let p = derived.params.clone();
        let net: GrowthFn = Arc::new(move |t, _xi, n| p.net_growth(t, n));
        let p = derived.params.clone();
        let lim: LimitFn = Arc::new(move |t, n| p.net_growth(t, n));
        let host_env = PeriodicEnvironment::new("host", period, net, lim.clone(), lim, f64::INFINITY, derived.n_star.max());

        let x_max = grid.x_max;
        let tail = psi.clone();
        let bc = BoundaryPolicy {
            left: Boundary::ClampToOrbit(derived.n_star.clone()),
            right: Boundary::Dirichlet(Arc::new(move |t| tail.eval(t) * (-lambda * x_max).exp())),
        };
        let wave_cfg = WaveConfig {
            grid,
            stepper: StepperConfig::per_period(period, cfg.steps_per_period),
            tol: cfg.tol,
            max_periods: cfg.max_periods,
            samples_per_period: cfg.samples_per_period,
        };
        let n0 = derived.n_star.values[0];
        let start = grid.points().iter().map(|&x| n0.min(psi.values[0] * (-lambda * x).exp())).collect();
        let mut it = PeriodIteration::new(&host_env, c, &wave_cfg, bc, start)
            .map_err(|e| EpiError::HostWave(e.to_string()))?;
        let mut last;
        loop {
            let stats = it.next_period().map_err(|e| EpiError::HostWave(e.to_string()))?;
            last = stats.change;
            if stats.change < cfg.tol {
                break;
            }
            if stats.period >= cfg.max_periods {
                return Err(EpiError::HostWave(format!(
                    "no convergence after {} periods (last change {last:e})",
                    stats.period
                )));
            }
        }
        let (t_mesh, values) = it
            .sample_period(cfg.samples_per_period)
            .map_err(|e| EpiError::HostWave(e.to_string()))?;
        let n = grid.n;
        let profile = Arc::new(WaveProfile {
            grid,
            period,
            diagnostics: WaveDiagnostics {
                periods: it.history().len(),
                final_change: last,
                left_deviation: values
                    .iter()
                    .zip(&t_mesh)
                    .map(|(row, &t)| (row[0] - derived.n_star.eval(t)).abs())
                    .fold(0.0, f64::max),
                right_deviation: values.iter().map(|row| row[n - 1].abs()).fold(0.0, f64::max),
                clamp_edge_deviation: f64::NAN,
                history: it.history().to_vec(),
            },
            t_mesh,
            values,
            kind: WaveKind::Kpp,
            c,
            alpha: derived.n_star.clone(),
        });
        let cutoff = 0.8 * (-grid.x_min).min(grid.x_max);
        let prof = profile.clone();
        let density: GrowthLike = Arc::new(move |t, xi| prof.eval(t, xi));
        Ok(Self {
            density,
            n_star: derived.n_star.clone(),
            cutoff,
            xi_samples: grid.points(),
            profile: Some(profile),
        })
    }
}

/// Infection growth rate along the host front:
/// `g(t, xi, I) = omega N - mu(t, N) - gamma - omega I`.
pub fn epidemic_environment(derived: &EpidemicDerived, host: &HostDensity) -> Result<PeriodicEnvironment, EpiError> {
    let period = derived.params.period;
    for k in 0..16 {
        let t = period * k as f64 / 16.0;
        for w in host.xi_samples.windows(2) {
            if (host.density)(t, w[1]) > (host.density)(t, w[0]) + 1e-12 {
                return Err(EpiError::MonotonicityViolation { t, xi: w[1] });
            }
        }
    }
    let p = derived.params.clone();
    let n_profile = host.density.clone();
    let g: GrowthFn = Arc::new(move |t, xi, i| {
        let n = n_profile(t, xi);
        let w = (p.transmission)(t);
        w * n - (p.death)(t, n) - (p.recovery)(t) - w * i
    });
    let p = derived.params.clone();
    let ns = derived.n_star.clone();
    let gm: LimitFn = Arc::new(move |t, i| {
        let n = ns.eval(t);
        let w = (p.transmission)(t);
        w * n - (p.death)(t, n) - (p.recovery)(t) - w * i
    });
    let p = derived.params.clone();
    let gp: LimitFn = Arc::new(move |t, i| -(p.death)(t, 0.0) - (p.recovery)(t) - (p.transmission)(t) * i);
    let u_cap = derived.n_star.max().max(1e-6);
    Ok(PeriodicEnvironment::new("sis_derived", period, g, gm, gp, host.cutoff, u_cap))
}
