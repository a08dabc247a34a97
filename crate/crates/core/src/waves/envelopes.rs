//! Explicit sub- and super-solutions of `v_t = v_xx + c v_x + v g(t, x, v)`
//! and their residual checks.
//!
//! Every envelope carries a periodic weight `p` solving
//! `p' = (g(t, -inf, 0) - gbar) p`, where `gbar` is the mean of
//! `g(t, -inf, 0)`. The residual `N[v] = -v_t + v_xx + c v_x + v g(t, x, v)`
//! is evaluated from exact derivatives, so the checks only see rounding.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::{compute_speed_data, SpeedData, WaveError, WaveProfile};
use crate::env::PeriodicEnvironment;
use crate::numerics;
use crate::pde::Grid1D;
use crate::pode::{self, PeriodicOrbit};

/// Relative residual tolerance used by [`check_envelope`].
pub const RESIDUAL_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    /// `M e^{lambda x} psi(t)` for `|c| >= c*`.
    SuperExponential,
    /// Compactly supported sine bump for `|c| < c*`.
    SubSineBump,
    /// `delta p (e^{mu x} - M e^{(mu + eta) x})^+` for `c <= -c*`.
    SubTwoExponential,
    PulseSuper,
    PulseSub,
    StabilitySuper,
    StabilitySub,
}

impl EnvelopeKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvelopeKind::SuperExponential => "super_exponential",
            EnvelopeKind::SubSineBump => "sub_sine_bump",
            EnvelopeKind::SubTwoExponential => "sub_two_exponential",
            EnvelopeKind::PulseSuper => "pulse_super",
            EnvelopeKind::PulseSub => "pulse_sub",
            EnvelopeKind::StabilitySuper => "stability_super",
            EnvelopeKind::StabilitySub => "stability_sub",
        }
    }

    pub fn side(&self) -> Side {
        match self {
            EnvelopeKind::SuperExponential | EnvelopeKind::PulseSuper | EnvelopeKind::StabilitySuper => Side::Super,
            _ => Side::Sub,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Sub,
    Super,
}

/// Overrides for the automatically chosen parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnvelopeOptions {
    /// Amplitude `M` of the exponential super-solution (default 1).
    pub level: Option<f64>,
    pub epsilon: Option<f64>,
    /// Length `L` of the sine bump.
    pub length: Option<f64>,
    pub delta: Option<f64>,
    /// Translation of the pulse envelopes.
    pub shift: f64,
    /// Right end of the domain, used by the critical pulse super-solution.
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Jet {
    v: f64,
    vt: f64,
    vx: f64,
    vxx: f64,
}

impl Jet {
    /// `amp(t) e^{nu z} f(z)` with `amp' = rate amp`.
    fn exp_poly(amp: f64, rate: f64, nu: f64, z: f64, f: [f64; 3]) -> Self {
        let e = amp * (nu * z).exp();
        let v = e * f[0];
        Self {
            v,
            vt: rate * v,
            vx: e * (nu * f[0] + f[1]),
            vxx: e * (nu * nu * f[0] + 2.0 * nu * f[1] + f[2]),
        }
    }

    fn minus(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            vt: self.vt - o.vt,
            vx: self.vx - o.vx,
            vxx: self.vxx - o.vxx,
        }
    }
}

#[derive(Debug, Clone)]
enum Form {
    Exponential {
        amp: f64,
        lambda: f64,
        shift: f64,
    },
    SineBump {
        delta: f64,
        lambda: f64,
        length: f64,
        left: f64,
    },
    TwoExponential {
        delta: f64,
        mu: f64,
        eta: f64,
        level: f64,
        right: f64,
    },
    /// `delta p e^{mu z} (y^k - M y^{k-r})` with `z = x + shift`, `y = -z`,
    /// supported on `y > M^{1/r}`.
    PulsePolynomial {
        delta: f64,
        mu: f64,
        k: i32,
        r: f64,
        level: f64,
        shift: f64,
    },
    /// `delta p e^{mu z} (a - z)` on `z <= a`.
    PulseLinear {
        delta: f64,
        mu: f64,
        a: f64,
        shift: f64,
    },
    Stability(Arc<StabilityData>),
}

#[derive(Debug)]
struct StabilityData {
    wave: Arc<WaveProfile>,
    sign: f64,
    rho: f64,
    sigma: f64,
    sigma0: f64,
    sigma1: f64,
    delta_prime: f64,
    xi0: f64,
    v0: PeriodicOrbit,
    v1: PeriodicOrbit,
}

/// A sub- or super-solution with its parameters.
#[derive(Clone)]
pub struct EnvelopeRecipe {
    pub kind: EnvelopeKind,
    pub c: f64,
    pub params: Vec<(&'static str, f64)>,
    weight: Arc<PeriodicOrbit>,
    env: PeriodicEnvironment,
    gbar: f64,
    form: Form,
}

impl fmt::Debug for EnvelopeRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvelopeRecipe")
            .field("kind", &self.kind)
            .field("c", &self.c)
            .field("params", &self.params)
            .finish()
    }
}

fn smoothstep(s: f64) -> [f64; 3] {
    if s <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if s >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let s2 = s * s;
    let s3 = s2 * s;
    [
        s3 * (10.0 - 15.0 * s + 6.0 * s2),
        30.0 * s2 * (1.0 - s) * (1.0 - s),
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
    ]
}

impl StabilityData {
    fn u0(&self, t: f64) -> f64 {
        self.wave.eval(t, self.xi0)
    }

    fn u1(&self, t: f64) -> f64 {
        self.wave.eval(t, self.xi0 + 1.0)
    }

    /// `(p, p_t, p_xi, p_xixi)`.
    fn p_jet(&self, env: &PeriodicEnvironment, t: f64, xi: f64) -> [f64; 4] {
        let v0 = self.v0.eval(t);
        let v1 = self.v1.eval(t);
        let d0 = (self.sigma0 + env.growth(t, self.xi0 + 1.0, 0.0)) * v0 + self.u1(t);
        let u0 = self.u0(t);
        let d1 = (self.sigma1 + env.minus_inf(t, 0.0)) * v1 + (self.sigma1 - self.delta_prime * u0) * u0 / self.sigma1;
        let [s, s1, s2] = smoothstep(xi - self.xi0);
        [
            (1.0 - s) * v1 + s * v0,
            (1.0 - s) * d1 + s * d0,
            s1 * (v0 - v1),
            s2 * (v0 - v1),
        ]
    }
}

impl EnvelopeRecipe {
    pub fn side(&self) -> Side {
        self.kind.side()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| *n == name).map(|p| p.1)
    }

    /// The periodic weight `p`.
    pub fn weight(&self) -> &PeriodicOrbit {
        &self.weight
    }

    /// Points where the envelope has a corner at time `t`.
    pub fn kinks(&self, _t: f64) -> Vec<f64> {
        match &self.form {
            Form::SineBump { length, left, .. } => vec![*left, left + length],
            Form::TwoExponential { right, .. } => vec![*right],
            Form::PulsePolynomial { r, level, shift, .. } => vec![-level.powf(1.0 / r) - shift],
            _ => Vec::new(),
        }
    }

    /// Time span over which the envelope is claimed (`T`, or `2T` for the
    /// non-periodic ones).
    pub fn horizon(&self) -> f64 {
        match &self.form {
            Form::SineBump { .. } | Form::Stability(_) => 2.0 * self.env.period(),
            _ => self.env.period(),
        }
    }

    fn rate(&self, t: f64) -> f64 {
        self.env.minus_inf(t, 0.0) - self.gbar
    }

    fn jet(&self, t: f64, x: f64) -> Jet {
        let zero = Jet {
            v: 0.0,
            vt: 0.0,
            vx: 0.0,
            vxx: 0.0,
        };
        let p = self.weight.eval(t);
        let a = self.rate(t);
        match &self.form {
            Form::Exponential { amp, lambda, shift } => Jet::exp_poly(amp * p, a, *lambda, x + shift, [1.0, 0.0, 0.0]),
            Form::SineBump {
                delta,
                lambda,
                length,
                left,
            } => {
                if x <= *left || x >= left + length {
                    return zero;
                }
                let k = PI / length;
                let s = k * (x - left);
                let amp = delta * p * (lambda * t).exp();
                Jet::exp_poly(amp, a + lambda, -self.c / 2.0, x, [s.sin(), k * s.cos(), -k * k * s.sin()])
            }
            Form::TwoExponential {
                delta,
                mu,
                eta,
                level,
                right,
            } => {
                if x >= *right {
                    return zero;
                }
                let one = [1.0, 0.0, 0.0];
                Jet::exp_poly(delta * p, a, *mu, x, one).minus(Jet::exp_poly(delta * p * level, a, mu + eta, x, one))
            }
            Form::PulsePolynomial {
                delta,
                mu,
                k,
                r,
                level,
                shift,
            } => {
                let z = x + shift;
                let y = -z;
                if y <= level.powf(1.0 / r) {
                    return zero;
                }
                let kf = *k as f64;
                let q = kf - r;
                let f = y.powi(*k) - level * y.powf(q);
                let fy = kf * y.powf(kf - 1.0) - level * q * y.powf(q - 1.0);
                let fyy = kf * (kf - 1.0) * y.powf(kf - 2.0) - level * q * (q - 1.0) * y.powf(q - 2.0);
                Jet::exp_poly(delta * p, a, *mu, z, [f, -fy, fyy])
            }
            Form::PulseLinear { delta, mu, a: end, shift } => {
                let z = x + shift;
                if z >= *end {
                    return zero;
                }
                Jet::exp_poly(delta * p, a, *mu, z, [end - z, -1.0, 0.0])
            }
            Form::Stability(d) => {
                let u = d.wave.eval(t, x);
                let e = d.rho * (-d.sigma * t).exp();
                let [pv, ..] = d.p_jet(&self.env, t, x);
                Jet {
                    v: (1.0 + d.sign * e) * u + d.sign * d.sigma * e * pv,
                    vt: f64::NAN,
                    vx: f64::NAN,
                    vxx: f64::NAN,
                }
            }
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.jet(t, x).v
    }

    /// `N[v](t, x)` and the magnitude of its largest term.
    pub fn residual(&self, t: f64, x: f64) -> (f64, f64) {
        if let Form::Stability(d) = &self.form {
            // Uses -U_t + U_xixi + c U_xi = -U g(U) for the wave U.
            let env = &self.env;
            let u = d.wave.eval(t, x);
            let e = d.rho * (-d.sigma * t).exp();
            let [p, pt, px, pxx] = d.p_jet(env, t, x);
            let w = (1.0 + d.sign * e) * u + d.sign * d.sigma * e * p;
            let gu = u * env.growth(t, x, u);
            let bracket = -pt + pxx + self.c * px + d.sigma * p;
            let n = -(1.0 + d.sign * e) * gu + d.sign * d.sigma * e * (u + bracket) + w * env.growth(t, x, w);
            let scale = gu.abs() + d.sigma * e * (u.abs() + pt.abs() + pxx.abs() + (self.c * px).abs() + p.abs()) + w.abs() * env.growth(t, x, w).abs();
            return (n, scale);
        }
        let j = self.jet(t, x);
        let g = self.env.growth(t, x, j.v);
        let n = -j.vt + j.vxx + self.c * j.vx + j.v * g;
        let scale = j.vt.abs() + j.vxx.abs() + (self.c * j.vx).abs() + (j.v * g).abs();
        (n, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinkCheck {
    pub t: f64,
    pub x: f64,
    /// Right minus left derivative.
    pub jump: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub kind: EnvelopeKind,
    pub checked: usize,
    /// Residual at the worst point, signed (negative is bad for a sub).
    pub worst_residual: f64,
    /// Wrong-signed residual over term magnitude at the worst point.
    pub worst_ratio: f64,
    pub witness: Option<(f64, f64)>,
    pub kinks: Vec<KinkCheck>,
    pub passed: bool,
}

impl ResidualReport {
    pub fn summary(&self) -> String {
        let witness = match self.witness {
            Some((t, x)) => format!(" at t={t:.6} x={x:.6}"),
            None => String::new(),
        };
        let bad_kinks = self.kinks.iter().filter(|k| !k.ok).count();
        format!(
            "{}: {} points, worst residual {:.3e} (ratio {:.3e}){witness}, {bad_kinks}/{} kinks with wrong sign: {}",
            self.kind.name(),
            self.checked,
            self.worst_residual,
            self.worst_ratio,
            self.kinks.len(),
            if self.passed { "pass" } else { "fail" }
        )
    }
}

/// Checks the sign of `N[v]` at every node and time sample (and at
/// `t + T` for envelopes claimed on `[0, 2T]`), plus the corner condition
/// at each kink. Subs are only checked where they are positive.
pub fn check_envelope(recipe: &EnvelopeRecipe, grid: &Grid1D, t_samples: &[f64]) -> ResidualReport {
    let period = recipe.env.period();
    let mut times: Vec<f64> = t_samples.to_vec();
    if recipe.horizon() > period * 1.5 {
        times.extend(t_samples.iter().map(|t| t + period));
    }
    let sign = match recipe.side() {
        Side::Sub => -1.0,
        Side::Super => 1.0,
    };
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut worst_residual = 0.0;
    let mut witness = None;
    let mut checked = 0;
    let mut kinks = Vec::new();
    for &t in &times {
        let corners = recipe.kinks(t);
        for x in grid.points() {
            let scale_x = x.abs().max(1.0);
            if corners.iter().any(|k| (k - x).abs() < 1e-9 * scale_x) {
                continue;
            }
            if recipe.side() == Side::Sub && recipe.eval(t, x) <= 0.0 {
                continue;
            }
            let (n, scale) = recipe.residual(t, x);
            if !n.is_finite() {
                worst_ratio = f64::INFINITY;
                witness = Some((t, x));
                worst_residual = n;
                continue;
            }
            checked += 1;
            let ratio = if scale > 0.0 { sign * n / scale } else { 0.0 };
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_residual = n;
                witness = Some((t, x));
            }
        }
        for k in corners {
            let h = 1e-5 * k.abs().max(1.0);
            let f = |x: f64| recipe.eval(t, x);
            let right = (-3.0 * f(k) + 4.0 * f(k + h) - f(k + 2.0 * h)) / (2.0 * h);
            let left = (3.0 * f(k) - 4.0 * f(k - h) + f(k - 2.0 * h)) / (2.0 * h);
            let jump = right - left;
            let slack = 1e-6 * right.abs().max(left.abs());
            let ok = match recipe.side() {
                Side::Sub => jump >= -slack,
                Side::Super => jump <= slack,
            };
            kinks.push(KinkCheck { t, x: k, jump, ok });
        }
    }
    let passed = worst_ratio <= RESIDUAL_RTOL && kinks.iter().all(|k| k.ok);
    ResidualReport {
        kind: recipe.kind,
        checked,
        worst_residual,
        worst_ratio: worst_ratio.max(0.0),
        witness: if worst_ratio > RESIDUAL_RTOL { witness } else { None },
        kinks,
        passed,
    }
}

fn time_samples(period: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| period * k as f64 / n as f64).collect()
}

/// `p' = (g(t, -inf, 0) - gbar) p`, `p(0) = 1`.
pub fn favorable_weight(env: &PeriodicEnvironment, speeds: &SpeedData) -> Result<PeriodicOrbit, WaveError> {
    let gbar = speeds.g_minus_mean;
    Ok(pode::periodic_weight(|t| env.minus_inf(t, 0.0) - gbar, env.period())?)
}

/// Smallest over `t` of the density where `g(t, -inf, .)` has lost `loss`.
fn density_margin(env: &PeriodicEnvironment, loss: f64) -> f64 {
    let top = 10.0 * env.u_cap();
    time_samples(env.period(), 64)
        .into_iter()
        .map(|t| {
            let g0 = env.minus_inf(t, 0.0);
            numerics::bisect(|u| env.minus_inf(t, u) - g0 + loss, 0.0, top, 1e-14 * top).unwrap_or(top)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest `x <= 0` with `g(t, y, d) >= g(t, -inf, 0) - eps` for all `t`
/// and `y <= x`.
fn favorable_edge(env: &PeriodicEnvironment, eps: f64, d: f64) -> f64 {
    let ts = time_samples(env.period(), 64);
    let f = |x: f64| {
        ts.iter()
            .map(|&t| env.growth(t, x, d) - env.minus_inf(t, 0.0) + eps)
            .fold(f64::INFINITY, f64::min)
    };
    if f(0.0) >= 0.0 {
        return 0.0;
    }
    let lo = -env.limit_cutoff().min(1e6);
    let tol = 1e-9 * lo.abs().max(1.0);
    match numerics::bisect(f, lo, 0.0, tol) {
        Some(x) => x - tol,
        None => lo,
    }
}

fn base(env: &PeriodicEnvironment) -> Result<(SpeedData, Arc<PeriodicOrbit>), WaveError> {
    let speeds = compute_speed_data(env)?;
    let weight = Arc::new(favorable_weight(env, &speeds)?);
    Ok((speeds, weight))
}

fn recipe(
    kind: EnvelopeKind,
    env: &PeriodicEnvironment,
    c: f64,
    speeds: &SpeedData,
    weight: Arc<PeriodicOrbit>,
    params: Vec<(&'static str, f64)>,
    form: Form,
) -> EnvelopeRecipe {
    EnvelopeRecipe {
        kind,
        c,
        params,
        weight,
        env: env.clone(),
        gbar: speeds.g_minus_mean,
        form,
    }
}

/// Builds one of the closed-form envelopes. The stability pair needs a
/// computed wave and comes from [`build_stability_pair`].
pub fn build_envelope(
    kind: EnvelopeKind,
    env: &PeriodicEnvironment,
    c: f64,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeRecipe, WaveError> {
    let (speeds, weight) = base(env)?;
    let c_star = speeds.c_star;
    let pmax = weight.max();
    match kind {
        EnvelopeKind::SuperExponential => {
            let lambda = speeds
                .lambda_1c(c)
                .ok_or_else(|| WaveError::ParamsInfeasible(format!("|c| = {} is below c* = {c_star}", c.abs())))?;
            let level = opts.level.unwrap_or(1.0);
            Ok(recipe(
                kind,
                env,
                c,
                &speeds,
                weight,
                vec![("M", level), ("lambda", lambda)],
                Form::Exponential {
                    amp: level,
                    lambda,
                    shift: 0.0,
                },
            ))
        }
        EnvelopeKind::SubSineBump => {
            if c.abs() >= c_star {
                return Err(WaveError::ParamsInfeasible(format!(
                    "sine bump needs |c| < c* = {c_star}, got {c}"
                )));
            }
            let room = (c_star * c_star - c * c) / 4.0;
            let eps = opts.epsilon.unwrap_or(0.1 * room);
            if !(eps > 0.0 && eps < room) {
                return Err(WaveError::ParamsInfeasible(format!("epsilon {eps} outside (0, {room})")));
            }
            let length = opts.length.unwrap_or(1.05 * 2.0 * PI / (room - eps).sqrt());
            let k = PI / length;
            let lambda = room - eps - k * k;
            let d_eps = density_margin(env, eps / 2.0);
            let x_eps = favorable_edge(env, eps, d_eps);
            let left = x_eps - length;
            let growth = (2.0 * env.period() * lambda.max(0.0)).exp();
            let spatial = (-c * left / 2.0).exp().max((-c * x_eps / 2.0).exp());
            let delta = opts.delta.unwrap_or(0.5 * d_eps / (growth * spatial * pmax));
            Ok(recipe(
                kind,
                env,
                c,
                &speeds,
                weight,
                vec![
                    ("epsilon", eps),
                    ("L", length),
                    ("lambda", lambda),
                    ("delta_eps", d_eps),
                    ("x_eps", x_eps),
                    ("M", length - x_eps),
                    ("delta", delta),
                ],
                Form::SineBump {
                    delta,
                    lambda,
                    length,
                    left,
                },
            ))
        }
        EnvelopeKind::SubTwoExponential => {
            if c > -c_star && !speeds.is_critical_left(c) {
                return Err(WaveError::ParamsInfeasible(format!(
                    "two-exponential sub needs c <= -c* = {}, got {c}",
                    -c_star
                )));
            }
            let gbar = speeds.g_minus_mean;
            let eps = opts.epsilon.unwrap_or(0.1 * gbar);
            if !(eps > 0.0 && eps < gbar) {
                return Err(WaveError::ParamsInfeasible(format!("epsilon {eps} outside (0, {gbar})")));
            }
            let disc = (c * c - 4.0 * (gbar - eps)).sqrt();
            let mu = (-c - disc) / 2.0;
            let eta = disc / 2.0;
            let d_eps = density_margin(env, eps / 2.0);
            let x_eps = favorable_edge(env, eps, d_eps);
            let level = (-eta * (x_eps - 1.0)).exp();
            let delta = opts.delta.unwrap_or(0.5 * d_eps / (pmax * (mu * x_eps).exp()));
            Ok(recipe(
                kind,
                env,
                c,
                &speeds,
                weight,
                vec![
                    ("epsilon", eps),
                    ("mu", mu),
                    ("eta", eta),
                    ("M", level),
                    ("delta_eps", d_eps),
                    ("x_eps", x_eps),
                    ("delta", delta),
                ],
                Form::TwoExponential {
                    delta,
                    mu,
                    eta,
                    level,
                    right: x_eps - 1.0,
                },
            ))
        }
        EnvelopeKind::PulseSuper | EnvelopeKind::PulseSub => {
            let alpha = super::alpha_orbit(env)?;
            let x_max = opts.x_max.unwrap_or(200.0);
            let grid = Grid1D::new(-x_max, x_max, 3)?;
            let (upper, lower) = pulse_envelopes(env, c, opts.shift, &grid, &alpha)?;
            Ok(if kind == EnvelopeKind::PulseSuper { upper } else { lower })
        }
        EnvelopeKind::StabilitySuper | EnvelopeKind::StabilitySub => Err(WaveError::ParamsInfeasible(
            "stability envelopes are built from a wave with build_stability_pair".into(),
        )),
    }
}

/// Upper and lower pulse envelopes for `c <= -c*`, translated by `shift`.
/// Both vanish to the right of `-cutoff`, so only `g(t, -inf, .)` enters
/// their residuals.
pub fn pulse_envelopes(
    env: &PeriodicEnvironment,
    c: f64,
    shift: f64,
    grid: &Grid1D,
    alpha: &PeriodicOrbit,
) -> Result<(EnvelopeRecipe, EnvelopeRecipe), WaveError> {
    let (speeds, weight) = base(env)?;
    let c_star = speeds.c_star;
    let critical = speeds.is_critical_left(c);
    if c > -c_star && !critical {
        return Err(WaveError::NoPulse(format!("c = {c} exceeds -c* = {}", -c_star)));
    }
    let k: i32 = if critical { 1 } else { 0 };
    let decay = env
        .decay()
        .ok_or_else(|| WaveError::NoPulse("environment declares no decay of g(t, x, 0) - g(t, -inf, 0)".into()))?;
    if (decay.m as i32) < k + 1 {
        return Err(WaveError::NoPulse(format!(
            "c = {c} needs tail decay with m >= {}, environment has m = {}",
            k + 1,
            decay.m
        )));
    }
    let r = decay.r0.min(1.0) / 2.0;
    let mu = if critical { -c / 2.0 } else { (-c - (c * c - c_star * c_star).sqrt()) / 2.0 };
    let beta = (2.0 * mu + c).abs();
    let pmax = weight.max();

    // Lipschitz constant of g in u on [0, max alpha] left of the cutoff.
    let cutoff = env.limit_cutoff();
    let ts = time_samples(env.period(), 16);
    let top = alpha.max();
    let mut lip = 1e-12f64;
    for &t in &ts {
        for j in 0..=32 {
            let u = top * j as f64 / 32.0;
            lip = lip.max(env.du_growth(t, -cutoff - 1.0, u).abs());
        }
    }

    let mut y0 = cutoff + shift.abs() + 1.0;
    if k == 0 {
        y0 = y0.max(2.0 * (r + 1.0) / beta);
    }
    y0 *= 2.0;
    let level = y0.powf(r);
    // min over y >= y0 of y^-q e^{mu y}, attained at max(y0, q / mu)
    let min_ratio = |q: f64| {
        let y = y0.max(q / mu);
        y.powf(-q) * (mu * y).exp()
    };
    let residual_cap = if k == 0 {
        0.5 * level * r * beta * min_ratio(r + 1.0) / (2.0 * lip * pmax)
    } else {
        0.5 * level * r * (1.0 - r) * min_ratio(r + 3.0) / (lip * pmax)
    };
    let y_peak = if k == 0 { y0 } else { y0.max(1.0 / mu) };
    let peak = y_peak.powi(k) * (-mu * y_peak).exp();
    let alpha_cap = 0.5 * alpha.min() / (pmax * peak);
    let delta = residual_cap.min(alpha_cap);

    let upper_form = if k == 0 {
        Form::Exponential {
            amp: delta,
            lambda: mu,
            shift,
        }
    } else {
        Form::PulseLinear {
            delta,
            mu,
            a: grid.x_max + shift,
            shift,
        }
    };
    let params = vec![
        ("mu", mu),
        ("k", k as f64),
        ("r", r),
        ("M", level),
        ("y0", y0),
        ("delta", delta),
        ("shift", shift),
        ("lipschitz", lip),
    ];
    let upper = recipe(
        EnvelopeKind::PulseSuper,
        env,
        c,
        &speeds,
        weight.clone(),
        params.clone(),
        upper_form,
    );
    let lower = recipe(
        EnvelopeKind::PulseSub,
        env,
        c,
        &speeds,
        weight,
        params,
        Form::PulsePolynomial {
            delta,
            mu,
            k,
            r,
            level,
            shift,
        },
    );
    Ok((upper, lower))
}

/// Super/sub pair `(1 +- E) U +- sigma E p`, `E = rho e^{-sigma t}`, around a
/// computed KPP wave. `delta` bounds `-g_u` from below; by default it is
/// half the smallest sampled `-g_u`.
pub fn build_stability_pair(
    env: &PeriodicEnvironment,
    c: f64,
    wave: Arc<WaveProfile>,
    delta: Option<f64>,
) -> Result<(EnvelopeRecipe, EnvelopeRecipe), WaveError> {
    let (speeds, weight) = base(env)?;
    let period = env.period();
    let ts = time_samples(period, 32);
    let cutoff = env.limit_cutoff();
    let u_top = wave.sup() * 1.5 + 1.0;
    let mut gu_max = f64::NEG_INFINITY;
    for &t in &ts {
        for i in 0..=64 {
            let xi = -2.0 * cutoff + 4.0 * cutoff * i as f64 / 64.0;
            for j in 0..=16 {
                gu_max = gu_max.max(env.du_growth(t, xi, u_top * j as f64 / 16.0));
            }
        }
    }
    if gu_max >= 0.0 {
        return Err(WaveError::ParamsInfeasible(format!(
            "g is not strictly decreasing in u (sampled g_u up to {gu_max})"
        )));
    }
    let delta = delta.unwrap_or(-0.5 * gu_max);
    if !(delta > 0.0 && delta < -gu_max) {
        return Err(WaveError::ParamsInfeasible(format!("delta {delta} must lie in (0, {})", -gu_max)));
    }
    let delta_prime = delta / 2.0;

    let half_plus = 0.5 * speeds.g_plus_mean;
    let mean_g = |xi: f64| numerics::period_mean(|t| env.growth(t, xi, 0.0), period, 1e-11);
    let xi0 = numerics::bisect(|xi| mean_g(xi) - half_plus, -cutoff, cutoff, 1e-10)
        .ok_or_else(|| WaveError::ParamsInfeasible("no point where the mean growth crosses half its right limit".into()))?;
    let sigma0 = -0.25 * mean_g(xi0 + 1.0);
    let u0_min = ts.iter().map(|&t| wave.eval(t, xi0)).fold(f64::INFINITY, f64::min);
    if !(sigma0 > 0.0 && u0_min > 0.0) {
        return Err(WaveError::ParamsInfeasible(format!(
            "sigma0 = {sigma0}, min U(t, xi0) = {u0_min}"
        )));
    }
    let sigma1 = 1f64.min(sigma0).min(0.5 * delta_prime * u0_min);
    let w = wave.clone();
    let v0 = pode::solve_linear_periodic(
        |t| sigma0 + env.growth(t, xi0 + 1.0, 0.0),
        |t| w.eval(t, xi0 + 1.0),
        period,
    )?;
    let v1 = pode::solve_linear_periodic(
        |t| sigma1 + env.minus_inf(t, 0.0),
        |t| {
            let u0 = w.eval(t, xi0);
            (sigma1 - delta_prime * u0) * u0 / sigma1
        },
        period,
    )?;
    let mut data = StabilityData {
        wave: wave.clone(),
        sign: 1.0,
        rho: 0.0,
        sigma: sigma1,
        sigma0,
        sigma1,
        delta_prime,
        xi0,
        v0,
        v1,
    };
    let mut sigma2 = f64::INFINITY;
    for &t in &ts {
        let u0 = wave.eval(t, xi0);
        let u1 = wave.eval(t, xi0 + 1.0);
        let mut worst = 0.0f64;
        for i in 0..=20 {
            let xi = xi0 + i as f64 / 20.0;
            let [p, pt, px, pxx] = data.p_jet(env, t, xi);
            let b = pt.abs() + pxx.abs() + c.abs() * px.abs() + (sigma1 + env.growth(t, xi, 0.0).abs()) * p;
            worst = worst.max(b);
        }
        sigma2 = sigma2.min(delta_prime * u1 * u1 / (u0 + worst));
    }
    let sigma = sigma1.min(sigma2);
    let p_sup = data.v0.max().max(data.v1.max());
    let rho = 0.25f64.min(0.5 * delta / (wave.sup() + p_sup));
    data.sigma = sigma;
    data.rho = rho;
    let params = vec![
        ("delta", delta),
        ("xi0", xi0),
        ("sigma0", sigma0),
        ("sigma1", sigma1),
        ("sigma2", sigma2),
        ("sigma", sigma),
        ("rho", rho),
    ];
    let upper = Arc::new(StabilityData { sign: 1.0, ..clone_data(&data) });
    let lower = Arc::new(StabilityData { sign: -1.0, ..data });
    Ok((
        recipe(
            EnvelopeKind::StabilitySuper,
            env,
            c,
            &speeds,
            weight.clone(),
            params.clone(),
            Form::Stability(upper),
        ),
        recipe(
            EnvelopeKind::StabilitySub,
            env,
            c,
            &speeds,
            weight,
            params,
            Form::Stability(lower),
        ),
    ))
}

fn clone_data(d: &StabilityData) -> StabilityData {
    StabilityData {
        wave: d.wave.clone(),
        sign: d.sign,
        rho: d.rho,
        sigma: d.sigma,
        sigma0: d.sigma0,
        sigma1: d.sigma1,
        delta_prime: d.delta_prime,
        xi0: d.xi0,
        v0: d.v0.clone(),
        v1: d.v1.clone(),
    }
}
