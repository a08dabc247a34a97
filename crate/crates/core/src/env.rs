//! Environments `g(t, xi, u)`: per-capita growth rates that are periodic in
//! time, non-increasing in the moving-frame coordinate `xi` and in the density
//! `u`, favorable as `xi -> -inf` and unfavorable as `xi -> +inf`.
//!
//! A [`PeriodicEnvironment`] is immutable once built and cheap to clone; the
//! solvers only ever call [`PeriodicEnvironment::growth`], which clamps `u`
//! into the domain of definition and replaces `g` by its closed-form limits
//! beyond the cutoff.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::epi::{self, EpidemicParams, HostDensity, SeasonalEpidemic};
use crate::numerics;

pub type GrowthFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type LimitFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment parameters: {0}")]
    InvalidParams(String),
    #[error("environment assumption violated: {0}")]
    AssumptionViolation(String),
    #[error(transparent)]
    Epidemic(#[from] Box<epi::EpiError>),
}

/// Decay metadata `(r0, m)` for the approach of `g(t, xi, 0)` to its
/// `xi -> -inf` limit: the deviation is `o(|xi|^-(r0 + m))`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct DecayTail {
    pub r0: f64,
    pub m: u8,
}

#[derive(Clone)]
pub struct PeriodicEnvironment {
    label: String,
    g: GrowthFn,
    g_minus_inf: LimitFn,
    g_plus_inf: LimitFn,
    period: f64,
    limit_cutoff: f64,
    u_cap: f64,
    decay: Option<DecayTail>,
}

impl fmt::Debug for PeriodicEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicEnvironment")
            .field("label", &self.label)
            .field("period", &self.period)
            .field("limit_cutoff", &self.limit_cutoff)
            .field("u_cap", &self.u_cap)
            .field("decay", &self.decay)
            .finish()
    }
}

impl PeriodicEnvironment {
    /// Wraps opaque closures. `u_cap` is a level `M` with `g(t, -inf, M) <= 0`;
    /// densities are clamped to `[0, 10 M]` before `g` is called.
    pub fn new(
        label: impl Into<String>,
        period: f64,
        g: GrowthFn,
        g_minus_inf: LimitFn,
        g_plus_inf: LimitFn,
        limit_cutoff: f64,
        u_cap: f64,
    ) -> Self {
        Self {
            label: label.into(),
            g,
            g_minus_inf,
            g_plus_inf,
            period,
            limit_cutoff,
            u_cap,
            decay: None,
        }
    }

    pub fn with_decay(mut self, decay: Option<DecayTail>) -> Self {
        self.decay = decay;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn limit_cutoff(&self) -> f64 {
        self.limit_cutoff
    }

    pub fn u_cap(&self) -> f64 {
        self.u_cap
    }

    pub fn decay(&self) -> Option<DecayTail> {
        self.decay
    }

    #[inline]
    fn clamp_u(&self, u: f64) -> f64 {
        u.clamp(0.0, 10.0 * self.u_cap)
    }

    /// The growth rate used by every solver.
    #[inline]
    pub fn growth(&self, t: f64, xi: f64, u: f64) -> f64 {
        let u = self.clamp_u(u);
        if xi <= -self.limit_cutoff {
            (self.g_minus_inf)(t, u)
        } else if xi >= self.limit_cutoff {
            (self.g_plus_inf)(t, u)
        } else {
            (self.g)(t, xi, u)
        }
    }

    /// `g` without the cutoff replacement (density still clamped).
    pub fn raw(&self, t: f64, xi: f64, u: f64) -> f64 {
        (self.g)(t, xi, self.clamp_u(u))
    }

    pub fn minus_inf(&self, t: f64, u: f64) -> f64 {
        (self.g_minus_inf)(t, self.clamp_u(u))
    }

    pub fn plus_inf(&self, t: f64, u: f64) -> f64 {
        (self.g_plus_inf)(t, self.clamp_u(u))
    }

    /// Central difference estimate of `dg/du` with step `1e-6 max(1, |u|)`.
    pub fn du_growth(&self, t: f64, xi: f64, u: f64) -> f64 {
        let h = 1e-6 * u.abs().max(1.0);
        if u - h < 0.0 {
            (self.growth(t, xi, u + h) - self.growth(t, xi, u)) / h
        } else {
            (self.growth(t, xi, u + h) - self.growth(t, xi, u - h)) / (2.0 * h)
        }
    }

    /// Mean of `g(t, -inf, 0)` over one period.
    pub fn mean_minus(&self) -> f64 {
        numerics::period_mean(|t| self.minus_inf(t, 0.0), self.period, 1e-13)
    }

    /// Mean of `g(t, +inf, 0)` over one period.
    pub fn mean_plus(&self) -> f64 {
        numerics::period_mean(|t| self.plus_inf(t, 0.0), self.period, 1e-13)
    }

    /// Environment seen from a frame translated by `y`: `g(t, xi + y, u)`.
    pub fn shifted(&self, y: f64) -> Self {
        let base = self.clone();
        let g: GrowthFn = Arc::new(move |t, xi, u| base.growth(t, xi + y, u));
        Self {
            label: format!("{} shifted by {y}", self.label),
            g,
            g_minus_inf: self.g_minus_inf.clone(),
            g_plus_inf: self.g_plus_inf.clone(),
            period: self.period,
            limit_cutoff: self.limit_cutoff + y.abs(),
            u_cap: self.u_cap,
            decay: self.decay,
        }
    }

    /// Spatially homogeneous environment `g(t, -inf, u)` everywhere.
    pub fn homogeneous_minus(&self) -> Self {
        let gm = self.g_minus_inf.clone();
        let g: GrowthFn = Arc::new(move |t, _xi, u| gm(t, u));
        Self {
            label: format!("{} (favorable limit)", self.label),
            g,
            g_minus_inf: self.g_minus_inf.clone(),
            g_plus_inf: self.g_minus_inf.clone(),
            period: self.period,
            limit_cutoff: f64::INFINITY,
            u_cap: self.u_cap,
            decay: None,
        }
    }
}

/// Seasonal rate `mean + amp sin(2 pi t / T + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seasonal {
    pub mean: f64,
    pub amp: f64,
    pub phase: f64,
    pub period: f64,
}

impl Seasonal {
    pub fn constant(value: f64, period: f64) -> Self {
        Self {
            mean: value,
            amp: 0.0,
            phase: 0.0,
            period,
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        if self.amp == 0.0 {
            self.mean
        } else {
            self.mean + self.amp * (2.0 * PI * t / self.period + self.phase).sin()
        }
    }
}

fn default_period() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_minus_one() -> f64 {
    -1.0
}
fn default_half() -> f64 {
    0.5
}
fn default_tail_power() -> f64 {
    4.0
}

/// Parameters of the `tanh_fisher` kind:
/// `g = r(t) (1 - tanh(xi/l))/2 + s(t) (1 + tanh(xi/l))/2 - u`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhFisherParams {
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_one")]
    pub r_mean: f64,
    #[serde(default = "default_half")]
    pub r_amp: f64,
    #[serde(default = "default_minus_one")]
    pub s_mean: f64,
    #[serde(default)]
    pub s_amp: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_one")]
    pub width: f64,
    #[serde(default)]
    pub decay_r0: Option<f64>,
    #[serde(default)]
    pub decay_m: Option<u8>,
}

impl Default for TanhFisherParams {
    fn default() -> Self {
        Self {
            period: 1.0,
            r_mean: 1.0,
            r_amp: 0.5,
            s_mean: -1.0,
            s_amp: 0.0,
            phase: 0.0,
            width: 1.0,
            decay_r0: None,
            decay_m: None,
        }
    }
}

/// Parameters of the `piecewise_fisher` kind: the favorable and unfavorable
/// rates are joined by an algebraic transition `~ |xi|^-p` on both sides.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseFisherParams {
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_one")]
    pub r_mean: f64,
    #[serde(default)]
    pub r_amp: f64,
    #[serde(default = "default_minus_one")]
    pub s_mean: f64,
    #[serde(default)]
    pub s_amp: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_one")]
    pub width: f64,
    #[serde(default = "default_tail_power")]
    pub tail_power: f64,
    #[serde(default)]
    pub decay_r0: Option<f64>,
    #[serde(default)]
    pub decay_m: Option<u8>,
}

impl Default for PiecewiseFisherParams {
    fn default() -> Self {
        Self {
            period: 1.0,
            r_mean: 1.0,
            r_amp: 0.0,
            s_mean: -1.0,
            s_amp: 0.0,
            phase: 0.0,
            width: 1.0,
            tail_power: 4.0,
            decay_r0: None,
            decay_m: None,
        }
    }
}

/// Parameters of the `sis_derived` kind: the infection growth rate along a
/// host front `N(t, xi) = N*(t) (1 - tanh(xi/l))/2`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SisDerivedParams {
    #[serde(flatten)]
    pub epidemic: SeasonalEpidemic,
    #[serde(default = "default_one")]
    pub front_width: f64,
}

impl Default for SisDerivedParams {
    fn default() -> Self {
        Self {
            epidemic: SeasonalEpidemic::default(),
            front_width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentParams {
    TanhFisher(TanhFisherParams),
    PiecewiseFisher(PiecewiseFisherParams),
    SisDerived(SisDerivedParams),
}

impl EnvironmentParams {
    pub const KINDS: [&'static str; 3] = ["tanh_fisher", "piecewise_fisher", "sis_derived"];

    pub fn kind(&self) -> &'static str {
        match self {
            Self::TanhFisher(_) => "tanh_fisher",
            Self::PiecewiseFisher(_) => "piecewise_fisher",
            Self::SisDerived(_) => "sis_derived",
        }
    }
}

impl Default for EnvironmentParams {
    fn default() -> Self {
        Self::TanhFisher(TanhFisherParams::default())
    }
}

fn check_rates(period: f64, r: &Seasonal, s: &Seasonal, width: f64) -> Result<(), EnvError> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(EnvError::InvalidParams(format!("period must be positive, got {period}")));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(EnvError::InvalidParams(format!("width must be positive, got {width}")));
    }
    if r.mean <= 0.0 {
        return Err(EnvError::InvalidParams(format!(
            "mean favorable rate must be positive, got {}",
            r.mean
        )));
    }
    if s.mean >= 0.0 {
        return Err(EnvError::InvalidParams(format!(
            "mean unfavorable rate must be negative, got {}",
            s.mean
        )));
    }
    for k in 0..256 {
        let t = period * k as f64 / 256.0;
        if r.at(t) < s.at(t) {
            return Err(EnvError::InvalidParams(format!(
                "favorable rate below unfavorable rate at t = {t}"
            )));
        }
    }
    Ok(())
}

fn decay_from(r0: Option<f64>, m: Option<u8>, default: DecayTail) -> Result<DecayTail, EnvError> {
    let tail = DecayTail {
        r0: r0.unwrap_or(default.r0),
        m: m.unwrap_or(default.m),
    };
    if !(tail.r0 > 0.0) || !(tail.m == 1 || tail.m == 2) {
        return Err(EnvError::InvalidParams(format!(
            "decay metadata needs r0 > 0 and m in {{1, 2}}, got r0 = {}, m = {}",
            tail.r0, tail.m
        )));
    }
    Ok(tail)
}

pub fn tanh_fisher(p: &TanhFisherParams) -> Result<PeriodicEnvironment, EnvError> {
    let r = Seasonal {
        mean: p.r_mean,
        amp: p.r_amp,
        phase: p.phase,
        period: p.period,
    };
    let s = Seasonal {
        mean: p.s_mean,
        amp: p.s_amp,
        phase: p.phase,
        period: p.period,
    };
    check_rates(p.period, &r, &s, p.width)?;
    let width = p.width;
    let g: GrowthFn = Arc::new(move |t, xi, u| {
        // (1 - tanh z)/2 = 1/(1 + e^{2z})
        let left = 1.0 / (1.0 + (2.0 * xi / width).exp());
        r.at(t) * left + s.at(t) * (1.0 - left) - u
    });
    let gm: LimitFn = Arc::new(move |t, u| r.at(t) - u);
    let gp: LimitFn = Arc::new(move |t, u| s.at(t) - u);
    let u_cap = (r.mean + r.amp.abs()).max(1e-3);
    let decay = decay_from(p.decay_r0, p.decay_m, DecayTail { r0: 1.0, m: 1 })?;
    Ok(
        PeriodicEnvironment::new("tanh_fisher", p.period, g, gm, gp, 40.0 * width, u_cap)
            .with_decay(Some(decay)),
    )
}

pub fn piecewise_fisher(p: &PiecewiseFisherParams) -> Result<PeriodicEnvironment, EnvError> {
    let r = Seasonal {
        mean: p.r_mean,
        amp: p.r_amp,
        phase: p.phase,
        period: p.period,
    };
    let s = Seasonal {
        mean: p.s_mean,
        amp: p.s_amp,
        phase: p.phase,
        period: p.period,
    };
    check_rates(p.period, &r, &s, p.width)?;
    if !(p.tail_power > 0.0) {
        return Err(EnvError::InvalidParams(format!(
            "tail_power must be positive, got {}",
            p.tail_power
        )));
    }
    let (width, power) = (p.width, p.tail_power);
    let g: GrowthFn = Arc::new(move |t, xi, u| {
        let z = xi / width;
        let h = if z <= 0.0 {
            0.5 * (1.0 - z).powf(-power)
        } else {
            1.0 - 0.5 * (1.0 + z).powf(-power)
        };
        let (rt, st) = (r.at(t), s.at(t));
        rt - (rt - st) * h - u
    });
    let gm: LimitFn = Arc::new(move |t, u| r.at(t) - u);
    let gp: LimitFn = Arc::new(move |t, u| s.at(t) - u);
    let spread = (r.mean + r.amp.abs()) - (s.mean - s.amp.abs());
    // Beyond the cutoff the transition is below 1e-8 and g is replaced by its limits.
    let cutoff = width * ((0.5 * spread * 1e8).powf(1.0 / power) - 1.0).max(1.0);
    let u_cap = (r.mean + r.amp.abs()).max(1e-3);
    let decay = decay_from(
        p.decay_r0,
        p.decay_m,
        DecayTail {
            r0: ((power - 1.0) / 2.0).max(0.1),
            m: 1,
        },
    )?;
    Ok(
        PeriodicEnvironment::new("piecewise_fisher", p.period, g, gm, gp, cutoff, u_cap)
            .with_decay(Some(decay)),
    )
}

pub fn sis_derived(p: &SisDerivedParams) -> Result<PeriodicEnvironment, EnvError> {
    if !(p.front_width > 0.0) {
        return Err(EnvError::InvalidParams(format!(
            "front_width must be positive, got {}",
            p.front_width
        )));
    }
    let params: EpidemicParams = p
        .epidemic
        .build()
        .map_err(|e| EnvError::InvalidParams(e.to_string()))?;
    let derived = epi::derive_epidemic(&params).map_err(|e| EnvError::Epidemic(Box::new(e)))?;
    let host = HostDensity::tanh_front(derived.n_star.clone(), p.front_width);
    epi::epidemic_environment(&derived, &host).map_err(|e| EnvError::Epidemic(Box::new(e)))
}

pub fn build_environment(params: &EnvironmentParams) -> Result<PeriodicEnvironment, EnvError> {
    match params {
        EnvironmentParams::TanhFisher(p) => tanh_fisher(p),
        EnvironmentParams::PiecewiseFisher(p) => piecewise_fisher(p),
        EnvironmentParams::SisDerived(p) => sis_derived(p),
    }
}

/// Sample points for [`validate_assumptions`].
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub t: Vec<f64>,
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
}

impl SamplingPlan {
    /// 32 phases, 32 positions spanning twice the cutoff, 8 densities in `[0, M]`.
    pub fn default_for(env: &PeriodicEnvironment) -> Self {
        let period = env.period();
        let reach = 2.0 * env.limit_cutoff().min(1e4);
        Self {
            t: (0..32).map(|k| period * k as f64 / 32.0).collect(),
            xi: (0..32).map(|k| -reach + 2.0 * reach * k as f64 / 31.0).collect(),
            u: (0..8).map(|k| env.u_cap() * k as f64 / 7.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    Periodicity,
    Monotonicity,
    FavorableLimit,
    UnfavorableLimit,
    TailDecay,
}

impl Assumption {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Periodicity => "G1",
            Self::Monotonicity => "G2",
            Self::FavorableLimit => "G3",
            Self::UnfavorableLimit => "G4",
            Self::TailDecay => "c4",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    /// Sample `(t, xi, u)` at which the check failed.
    pub witness: Option<(f64, f64, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, a: Assumption) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.assumption == a)
    }

    pub fn passed(&self, a: Assumption) -> bool {
        self.get(a).map(|c| c.passed).unwrap_or(false)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{}={}", c.assumption.tag(), if c.passed { "pass" } else { "fail" })?;
            if let Some((t, xi, u)) = c.witness {
                write!(f, " witness=(t={t}, xi={xi}, u={u})")?;
            }
            writeln!(f, " {}", c.detail)?;
        }
        Ok(())
    }
}

/// Checks periodicity, monotonicity, the sign conditions on the limits and,
/// when decay metadata is present, the algebraic tail condition.
pub fn validate_assumptions(env: &PeriodicEnvironment, plan: &SamplingPlan) -> ValidationReport {
    let period = env.period();
    let mut checks = Vec::new();

    // periodicity
    let mut worst = (0.0f64, None);
    for &t in &plan.t {
        for &xi in &plan.xi {
            for &u in &plan.u {
                let d = (env.growth(t + period, xi, u) - env.growth(t, xi, u)).abs();
                if d > worst.0 {
                    worst = (d, Some((t, xi, u)));
                }
            }
        }
    }
    let ok = worst.0 <= 1e-12;
    checks.push(AssumptionCheck {
        assumption: Assumption::Periodicity,
        passed: ok,
        witness: if ok { None } else { worst.1 },
        detail: format!("max |g(t+T)-g(t)| = {:e}", worst.0),
    });

    // monotonicity in xi and u, strict decrease of the favorable limit in u
    let mut witness = None;
    let mut detail = String::from("non-increasing in xi and u");
    let slack = 1e-13;
    'outer: for &t in &plan.t {
        for &u in &plan.u {
            for w in plan.xi.windows(2) {
                if env.growth(t, w[1], u) > env.growth(t, w[0], u) + slack {
                    witness = Some((t, w[1], u));
                    detail = format!("g increases in xi between {} and {}", w[0], w[1]);
                    break 'outer;
                }
            }
        }
        for &xi in &plan.xi {
            for w in plan.u.windows(2) {
                if env.growth(t, xi, w[1]) > env.growth(t, xi, w[0]) + slack {
                    witness = Some((t, xi, w[1]));
                    detail = format!("g increases in u between {} and {}", w[0], w[1]);
                    break 'outer;
                }
            }
        }
        for w in plan.u.windows(2) {
            if env.minus_inf(t, w[1]) >= env.minus_inf(t, w[0]) {
                witness = Some((t, f64::NEG_INFINITY, w[1]));
                detail = "g(t,-inf,u) not strictly decreasing in u".into();
                break 'outer;
            }
        }
    }
    checks.push(AssumptionCheck {
        assumption: Assumption::Monotonicity,
        passed: witness.is_none(),
        witness,
        detail,
    });

    // favorable limit
    let mean_minus = env.mean_minus();
    let mut cap = env.u_cap();
    let mut capped = false;
    for _ in 0..40 {
        if plan.t.iter().all(|&t| (env.g_minus_inf)(t, cap) <= 0.0) {
            capped = true;
            break;
        }
        cap *= 2.0;
    }
    checks.push(AssumptionCheck {
        assumption: Assumption::FavorableLimit,
        passed: mean_minus > 0.0 && capped,
        witness: None,
        detail: format!(
            "mean g(-inf,0) = {mean_minus}; g(-inf,M) <= 0 {} (M = {cap})",
            if capped { "holds" } else { "fails" }
        ),
    });

    let mean_plus = env.mean_plus();
    checks.push(AssumptionCheck {
        assumption: Assumption::UnfavorableLimit,
        passed: mean_plus < 0.0,
        witness: None,
        detail: format!("mean g(+inf,0) = {mean_plus}"),
    });

    if let Some(tail) = env.decay() {
        checks.push(check_tail_decay(env, tail, &plan.t));
    }

    ValidationReport { checks }
}

/// Decaying-product test on log-spaced points: the product
/// `sup_t |g(t,xi,0) - g(t,-inf,0)| |xi|^(r0+m)` must tend to zero.
pub fn tail_products(env: &PeriodicEnvironment, tail: DecayTail, ts: &[f64]) -> Vec<(f64, f64)> {
    let exponent = tail.r0 + tail.m as f64;
    let (lo, hi) = (1.0f64, 3.0f64);
    let n = 25;
    (0..n)
        .map(|k| {
            let mag = 10f64.powf(lo + (hi - lo) * k as f64 / (n - 1) as f64);
            let xi = -mag;
            let dev = ts
                .iter()
                .map(|&t| (env.raw(t, xi, 0.0) - env.minus_inf(t, 0.0)).abs())
                .fold(0.0, f64::max);
            (mag, dev * mag.powf(exponent))
        })
        .collect()
}

fn check_tail_decay(env: &PeriodicEnvironment, tail: DecayTail, ts: &[f64]) -> AssumptionCheck {
    let products = tail_products(env, tail, ts);
    let n = products.len();
    let scale = ts
        .iter()
        .map(|&t| env.minus_inf(t, 0.0).abs())
        .fold(1.0, f64::max);
    // deviations at roundoff level count as zero
    let nonzero: Vec<(f64, f64)> = products
        .iter()
        .copied()
        .filter(|&(mag, p)| p / mag.powf(tail.r0 + tail.m as f64) > 1e-13 * scale)
        .collect();
    let tail_vanished = products[2 * n / 3..]
        .iter()
        .all(|&(mag, p)| p / mag.powf(tail.r0 + tail.m as f64) <= 1e-13 * scale);
    let (passed, detail) = if tail_vanished {
        (true, "deviation vanishes faster than every power".to_string())
    } else if nonzero.len() < 3 {
        (false, "too few usable tail samples".to_string())
    } else {
        let xs: Vec<f64> = nonzero.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = nonzero.iter().map(|p| p.1.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        let decreasing = nonzero.last().unwrap().1 < nonzero[0].1;
        (
            slope < -0.05 && decreasing,
            format!("log-log slope of tail product = {slope:.4}"),
        )
    };
    AssumptionCheck {
        assumption: Assumption::TailDecay,
        passed,
        witness: None,
        detail: format!("r0 = {}, m = {}: {detail}", tail.r0, tail.m),
    }
}
