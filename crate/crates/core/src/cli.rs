//! Config-driven experiment runner behind the `shiftwave` binary.
//!
//! A config is a TOML document with the sections `[experiment]`,
//! `[environment]`, `[domain]`, `[time]`, `[output]` and `[sweep]`. Every
//! run produces a `key=value` report; CSV and SVG artifacts are written only
//! when the whole run succeeds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::{self, FrontSide, InitialData};
use crate::env::{self, EnvironmentParams, PeriodicEnvironment, SamplingPlan};
use crate::epi::{self, HostDensity, HostWaveConfig};
use crate::output::{fmt_num, svg_plot, Artifacts, Series};
use crate::pde::{Grid1D, Scheme, StepperConfig};
use crate::waves::{self, EnvelopeKind, EnvelopeOptions, WaveConfig, WaveError, WaveProfile};

/// Worker count for sweeps; defaults to the number of cores.
pub const WORKERS_ENV: &str = "SHIFTWAVE_WORKERS";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn validation(key: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Validation {
            key: key.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for config errors, 1 for failed runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Cstar,
    KppWave,
    PulseWave,
    Ivp,
    Attraction,
    Epidemic,
    PeriodLimits,
    Sweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Cstar,
        ExperimentKind::KppWave,
        ExperimentKind::PulseWave,
        ExperimentKind::Ivp,
        ExperimentKind::Attraction,
        ExperimentKind::Epidemic,
        ExperimentKind::PeriodLimits,
        ExperimentKind::Sweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Cstar => "cstar",
            ExperimentKind::KppWave => "kpp_wave",
            ExperimentKind::PulseWave => "pulse_wave",
            ExperimentKind::Ivp => "ivp",
            ExperimentKind::Attraction => "attraction",
            ExperimentKind::Epidemic => "epidemic",
            ExperimentKind::PeriodLimits => "period_limits",
            ExperimentKind::Sweep => "sweep",
        }
    }

    /// Quantities an experiment reports and that `[experiment.checks]` may
    /// constrain.
    pub fn quantities(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Cstar => &["c_star", "g_minus_mean", "g_plus_mean", "assumptions_failed"],
            ExperimentKind::KppWave => &[
                "exists",
                "periods",
                "final_change",
                "sup",
                "monotonicity_defect",
                "alpha_excess",
                "left_deviation",
                "right_deviation",
                "clamp_edge_deviation",
                "envelope_worst_ratio",
            ],
            ExperimentKind::PulseWave => &[
                "exists",
                "periods",
                "sup",
                "sandwich_violation",
                "iteration_violation",
                "left_tail",
                "right_tail",
                "envelope_worst_ratio",
            ],
            ExperimentKind::Ivp => &[
                "final_sup",
                "boundary_contaminated",
                "c_hat_right",
                "c_hat_left",
                "c_hat_right_rel_error",
                "c_hat_left_rel_error",
                "tail_integral_finite",
            ],
            ExperimentKind::Attraction => &["final_error", "sigma_hat", "sigma_fit_rms", "boundary_contaminated"],
            ExperimentKind::Epidemic => &[
                "n_star_mean",
                "c_n",
                "a_bar",
                "exists",
                "host_monotonicity_defect",
                "s_min",
                "i_sup",
            ],
            ExperimentKind::PeriodLimits => &["v_zero", "sup_dev_zero", "sup_dev_inf", "a_bar_zero", "a_bar_inf"],
            ExperimentKind::Sweep => &[],
        }
    }

    fn needs_speed(&self) -> bool {
        matches!(
            self,
            ExperimentKind::KppWave
                | ExperimentKind::PulseWave
                | ExperimentKind::Ivp
                | ExperimentKind::Attraction
                | ExperimentKind::Epidemic
        )
    }
}

/// Bounds on a reported quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl CheckSpec {
    pub fn accepts(&self, v: f64) -> bool {
        v.is_finite() && self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_periods() -> usize {
    2000
}
fn default_samples() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub c: Option<f64>,
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_periods")]
    pub max_periods: usize,
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    pub init: Option<InitialData>,
    pub fit_window: Option<[f64; 2]>,
    pub periods: Option<Vec<f64>>,
    #[serde(default)]
    pub checks: BTreeMap<String, CheckSpec>,
}

fn default_x_min() -> f64 {
    -200.0
}
fn default_x_max() -> f64 {
    200.0
}
fn default_n() -> usize {
    4001
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_n")]
    pub n: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            x_min: default_x_min(),
            x_max: default_x_max(),
            n: default_n(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    Strang,
    ImexCn,
}

fn default_divisor() -> usize {
    512
}
fn default_horizon() -> usize {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default = "default_divisor")]
    pub dt_divisor: usize,
    #[serde(default = "default_horizon")]
    pub horizon_periods: usize,
    #[serde(default)]
    pub scheme: SchemeName,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt_divisor: default_divisor(),
            horizon_periods: default_horizon(),
            scheme: SchemeName::Strang,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub base: ExperimentKind,
    /// `c`, `shift`, or `environment.<field>`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentSection,
    #[serde(default)]
    environment: Option<EnvironmentParams>,
    #[serde(default)]
    domain: DomainSection,
    #[serde(default)]
    time: TimeSection,
    #[serde(default)]
    output: OutputSection,
    sweep: Option<SweepSection>,
}

/// A parsed and validated config.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub environment: EnvironmentParams,
    /// `[environment]` as written, for sweeps over environment fields.
    pub environment_table: toml::Table,
    pub domain: DomainSection,
    pub time: TimeSection,
    pub output: OutputSection,
    pub sweep: Option<SweepSection>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        CliError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Parse {
        line: 0,
        column: 0,
        message: e.message().to_string(),
    })?;
    let environment_table = match doc.get("environment") {
        Some(toml::Value::Table(t)) => t.clone(),
        _ => toml::Table::new(),
    };
    let cfg = ExperimentConfig {
        experiment: raw.experiment,
        environment: raw.environment.unwrap_or_default(),
        environment_table,
        domain: raw.domain,
        time: raw.time,
        output: raw.output,
        sweep: raw.sweep,
    };
    validate_config(&cfg)?;
    Ok(cfg)
}

fn check_path(key: &str, path: &Option<PathBuf>) -> Result<(), CliError> {
    let Some(p) = path else { return Ok(()) };
    if p.as_os_str().is_empty() {
        return Err(CliError::validation(key, "empty path"));
    }
    if p.is_dir() {
        return Err(CliError::validation(key, format!("{} is a directory", p.display())));
    }
    let mut dir = p.parent();
    while let Some(d) = dir {
        if d.as_os_str().is_empty() {
            break;
        }
        if d.exists() {
            if !d.is_dir() {
                return Err(CliError::validation(key, format!("{} is not a directory", d.display())));
            }
            let meta = std::fs::metadata(d).map_err(|e| CliError::validation(key, e))?;
            if meta.permissions().readonly() {
                return Err(CliError::validation(key, format!("{} is read-only", d.display())));
            }
            break;
        }
        dir = d.parent();
    }
    Ok(())
}

fn validate_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let d = &cfg.domain;
    if d.n < 3 {
        return Err(CliError::validation("domain.n", format!("need at least 3 nodes, got {}", d.n)));
    }
    if !(d.x_min.is_finite() && d.x_max.is_finite() && d.x_min < d.x_max) {
        return Err(CliError::validation(
            "domain.x_max",
            format!("need finite x_min < x_max, got [{}, {}]", d.x_min, d.x_max),
        ));
    }
    if cfg.time.dt_divisor == 0 {
        return Err(CliError::validation("time.dt_divisor", "must be a positive integer"));
    }
    let e = &cfg.experiment;
    if !(e.tol > 0.0 && e.tol.is_finite()) {
        return Err(CliError::validation("experiment.tol", format!("must be positive, got {}", e.tol)));
    }
    if e.samples_per_period == 0 {
        return Err(CliError::validation("experiment.samples_per_period", "must be positive"));
    }
    if let Some(init) = &e.init {
        init.validate().map_err(|err| CliError::validation("experiment.init", err))?;
    }
    if let Some([t1, t2]) = e.fit_window {
        if !(t1.is_finite() && t2.is_finite() && t2 > t1) {
            return Err(CliError::validation("experiment.fit_window", "need finite t1 < t2"));
        }
    }
    let runs: Vec<ExperimentKind> = match e.kind {
        ExperimentKind::Sweep => {
            let s = cfg
                .sweep
                .as_ref()
                .ok_or_else(|| CliError::validation("sweep", "a sweep experiment needs a [sweep] section"))?;
            if s.base == ExperimentKind::Sweep {
                return Err(CliError::validation("sweep.base", "cannot sweep a sweep"));
            }
            if s.values.is_empty() {
                return Err(CliError::validation("sweep.values", "empty list"));
            }
            if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
                return Err(CliError::validation("sweep.values", format!("non-finite value {v}")));
            }
            match s.parameter.as_str() {
                "c" | "shift" => {}
                p if p.starts_with("environment.") => {
                    for &v in &s.values {
                        environment_with(cfg, &p["environment.".len()..], v)?;
                    }
                }
                p => {
                    return Err(CliError::validation(
                        "sweep.parameter",
                        format!("`{p}` is not c, shift or environment.<field>"),
                    ))
                }
            }
            vec![s.base]
        }
        k => vec![k],
    };
    for kind in runs {
        let sweeps_c = cfg.sweep.as_ref().is_some_and(|s| s.parameter == "c") && e.kind == ExperimentKind::Sweep;
        if kind.needs_speed() && e.c.is_none() && !sweeps_c {
            return Err(CliError::validation("experiment.c", format!("{} needs a speed c", kind.name())));
        }
        if let Some(c) = e.c {
            if !c.is_finite() {
                return Err(CliError::validation("experiment.c", "must be finite"));
            }
        }
        if kind == ExperimentKind::PeriodLimits {
            let ps = e.periods.as_ref().ok_or_else(|| CliError::validation("experiment.periods", "period_limits needs a list of periods"))?;
            if ps.is_empty() || ps.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
                return Err(CliError::validation("experiment.periods", "need a non-empty list of positive periods"));
            }
        }
        if matches!(kind, ExperimentKind::Epidemic | ExperimentKind::PeriodLimits)
            && !matches!(cfg.environment, EnvironmentParams::SisDerived(_))
        {
            return Err(CliError::validation(
                "environment.kind",
                format!("{} needs kind = \"sis_derived\"", kind.name()),
            ));
        }
        for name in e.checks.keys() {
            if !kind.quantities().contains(&name.as_str()) {
                return Err(CliError::validation(
                    format!("experiment.checks.{name}"),
                    format!("{} does not report `{name}`; known: {}", kind.name(), kind.quantities().join(", ")),
                ));
            }
        }
    }
    env::build_environment(&cfg.environment).map_err(|err| CliError::validation("environment", err))?;
    check_path("output.csv", &cfg.output.csv)?;
    check_path("output.svg", &cfg.output.svg)?;
    check_path("output.report", &cfg.output.report)?;
    Ok(())
}

fn environment_with(cfg: &ExperimentConfig, field: &str, value: f64) -> Result<EnvironmentParams, CliError> {
    let mut table = cfg.environment_table.clone();
    if !table.contains_key("kind") {
        table.insert("kind".into(), toml::Value::String(cfg.environment.kind().into()));
    }
    // integer-typed fields (decay_m) keep their type
    let v = match table.get(field) {
        Some(toml::Value::Integer(_)) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
        _ => toml::Value::Float(value),
    };
    table.insert(field.to_string(), v);
    let params: EnvironmentParams = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::validation(format!("environment.{field}"), e.message()))?;
    env::build_environment(&params).map_err(|e| CliError::validation(format!("environment.{field}"), e))?;
    Ok(params)
}

/// Report number formatting: 12 decimals in the ordinary range.
pub fn fmt_report(v: f64) -> String {
    if !v.is_finite() {
        return fmt_num(v);
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e7).contains(&a) {
        format!("{v:.12}")
    } else {
        format!("{v:.12e}")
    }
}

/// Result of one experiment before anything touches the filesystem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub lines: Vec<(String, String)>,
    pub quantities: BTreeMap<String, f64>,
    pub csv: Option<String>,
    pub svg: Option<String>,
}

impl Outcome {
    fn text(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.to_string(), value.into()));
    }

    fn num(&mut self, key: &str, v: f64) {
        self.lines.push((key.to_string(), fmt_report(v)));
        self.quantities.insert(key.to_string(), v);
    }

    fn count(&mut self, key: &str, n: usize) {
        self.lines.push((key.to_string(), n.to_string()));
        self.quantities.insert(key.to_string(), n as f64);
    }

    /// Printed as true/false; checks see 1 or 0.
    fn flag(&mut self, key: &str, b: bool) {
        self.lines.push((key.to_string(), b.to_string()));
        self.quantities.insert(key.to_string(), if b { 1.0 } else { 0.0 });
    }

    /// A quantity usable by checks but not printed on its own line.
    fn hidden(&mut self, key: &str, v: f64) {
        self.quantities.insert(key.to_string(), v);
    }

    fn checks(&mut self, checks: &BTreeMap<String, CheckSpec>) -> bool {
        let mut ok = true;
        for (name, spec) in checks {
            let status = match self.quantities.get(name) {
                Some(&v) if spec.accepts(v) => "pass",
                Some(_) => {
                    ok = false;
                    "fail"
                }
                None => "n/a",
            };
            self.lines.push((format!("check.{name}"), status.into()));
        }
        ok
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    env: PeriodicEnvironment,
    c: f64,
    shift: f64,
}

impl Ctx<'_> {
    fn grid(&self) -> Result<Grid1D, CliError> {
        let d = self.cfg.domain;
        Grid1D::new(d.x_min, d.x_max, d.n).map_err(|e| CliError::validation("domain", e))
    }

    fn stepper(&self) -> StepperConfig {
        let s = StepperConfig::per_period(self.env.period(), self.cfg.time.dt_divisor);
        match self.cfg.time.scheme {
            SchemeName::Strang => s.with_scheme(Scheme::Strang),
            SchemeName::ImexCn => s.with_scheme(Scheme::ImexCn),
        }
    }

    fn wave_config(&self) -> Result<WaveConfig, CliError> {
        let e = &self.cfg.experiment;
        Ok(WaveConfig {
            grid: self.grid()?,
            stepper: self.stepper(),
            tol: e.tol,
            max_periods: e.max_periods,
            samples_per_period: e.samples_per_period,
        })
    }
}

fn run_err(e: impl fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn profile_svg(title: &str, wave: &WaveProfile, overlays: Vec<Series>) -> String {
    let xs = wave.grid.points();
    let mut series = vec![Series::new("U(0, x)", xs.iter().copied().zip(wave.at_phase(0).iter().copied()).collect())];
    series.extend(overlays);
    svg_plot(title, "x - ct", "U", &series)
}

/// Overlay of an envelope at `t = 0`, clipped to `cap` so that unbounded
/// envelopes do not flatten the plot.
fn envelope_series(label: &str, recipe: &waves::EnvelopeRecipe, grid: &Grid1D, cap: f64) -> Series {
    Series::new(
        label,
        grid.points()
            .into_iter()
            .map(|x| (x, recipe.eval(0.0, x)))
            .filter(|p| p.1 <= cap)
            .collect(),
    )
}

fn exp_cstar(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let speeds = waves::compute_speed_data(&ctx.env).map_err(run_err)?;
    out.num("c_star", speeds.c_star);
    out.num("g_minus_mean", speeds.g_minus_mean);
    out.num("g_plus_mean", speeds.g_plus_mean);
    let report = env::validate_assumptions(&ctx.env, &SamplingPlan::default_for(&ctx.env));
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    for c in &report.checks {
        out.text(&format!("assumption.{}", c.assumption.tag()), if c.passed { "pass" } else { "fail" });
    }
    out.count("assumptions_failed", failed);
    if let Some(c) = ctx.cfg.experiment.c {
        out.num("c", c);
        match speeds.lambda_1c(c) {
            Some(l) => out.num("lambda_1c", l),
            None => out.text("lambda_1c", "none (|c| < c*)"),
        }
        out.num("mu_c", speeds.mu_c(c));
    }
    Ok(out)
}

fn exp_kpp(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let speeds = waves::compute_speed_data(&ctx.env).map_err(run_err)?;
    out.num("c", ctx.c);
    out.num("c_star", speeds.c_star);
    let cfg = ctx.wave_config()?;
    match waves::compute_kpp_wave(&ctx.env, ctx.c, &cfg) {
        Ok(w) => {
            let d = &w.diagnostics;
            out.text("result", "exists");
            out.hidden("exists", 1.0);
            out.count("periods", d.periods);
            out.num("final_change", d.final_change);
            out.num("sup", w.sup());
            out.num("monotonicity_defect", w.monotonicity_defect());
            out.num("alpha_excess", w.alpha_excess());
            out.num("left_deviation", d.left_deviation);
            out.num("right_deviation", d.right_deviation);
            out.num("clamp_edge_deviation", d.clamp_edge_deviation);
            let mut overlays = vec![Series::new(
                "alpha(0)",
                vec![(cfg.grid.x_min, w.alpha.values[0]), (cfg.grid.x_max, w.alpha.values[0])],
            )];
            if ctx.c.abs() < speeds.c_star {
                let sub = waves::build_envelope(EnvelopeKind::SubSineBump, &ctx.env, ctx.c, &EnvelopeOptions::default())
                    .map_err(run_err)?;
                let rep = waves::check_envelope(&sub, &cfg.grid, &(0..8).map(|k| ctx.env.period() * k as f64 / 8.0).collect::<Vec<_>>());
                out.text("envelope.sub_sine_bump", rep.summary());
                out.num("envelope_worst_ratio", rep.worst_ratio);
                overlays.push(envelope_series("sine bump sub", &sub, &cfg.grid, f64::INFINITY));
            }
            out.csv = Some(w.to_csv());
            out.svg = Some(profile_svg(&format!("forced KPP wave, c = {}", fmt_num(ctx.c)), &w, overlays));
        }
        Err(WaveError::DegenerateWave { periods, core_sup }) => {
            out.text("result", "nonexistent (DegenerateWave)");
            out.hidden("exists", 0.0);
            out.count("periods", periods);
            out.num("core_sup", core_sup);
        }
        Err(e) => return Err(run_err(e)),
    }
    Ok(out)
}

fn exp_pulse(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let speeds = waves::compute_speed_data(&ctx.env).map_err(run_err)?;
    out.num("c", ctx.c);
    out.num("c_star", speeds.c_star);
    out.num("shift", ctx.shift);
    let cfg = ctx.wave_config()?;
    match waves::compute_pulse_wave(&ctx.env, ctx.c, &cfg, ctx.shift) {
        Ok(r) => {
            let w = &r.profile;
            let n = w.grid.n;
            out.text("result", "exists");
            out.hidden("exists", 1.0);
            out.count("periods", w.diagnostics.periods);
            out.num("sup", w.sup());
            out.num("sandwich_violation", r.sandwich_violation);
            out.num("iteration_violation", r.iteration_violation);
            out.num("left_tail", w.values.iter().map(|row| row[0]).fold(0.0, f64::max));
            out.num("right_tail", w.values.iter().map(|row| row[n - 1]).fold(0.0, f64::max));
            out.text("envelope.upper", r.upper_report.summary());
            out.text("envelope.lower", r.lower_report.summary());
            out.num("envelope_worst_ratio", r.upper_report.worst_ratio.max(r.lower_report.worst_ratio));
            let cap = 1.5 * w.sup().max(1e-300);
            let overlays = vec![
                envelope_series("upper envelope", &r.upper, &w.grid, cap),
                envelope_series("lower envelope", &r.lower, &w.grid, cap),
            ];
            out.csv = Some(w.to_csv());
            out.svg = Some(profile_svg(&format!("forced pulse, c = {}", fmt_num(ctx.c)), w, overlays));
        }
        Err(WaveError::NoPulse(msg)) => {
            out.text("result", format!("nonexistent (NoPulse: {msg})"));
            out.hidden("exists", 0.0);
        }
        Err(e) => return Err(run_err(e)),
    }
    Ok(out)
}

fn exp_ivp(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let e = &ctx.cfg.experiment;
    let speeds = waves::compute_speed_data(&ctx.env).map_err(run_err)?;
    let init = e.init.unwrap_or_default();
    let grid = ctx.grid()?;
    out.num("c", ctx.c);
    out.num("c_star", speeds.c_star);
    out.text("init", init.kind());
    let ti = dynamics::tail_integral(&init, speeds.c_star / 2.0, &grid);
    out.num("tail_integral", ti.total());
    out.flag("tail_integral_finite", ti.finite);
    let run = dynamics::run_ivp(&ctx.env, ctx.c, &init, grid, ctx.stepper(), ctx.cfg.time.horizon_periods).map_err(run_err)?;
    let last = run.trace.rows.last().copied().expect("trace has the initial row");
    out.num("t_end", last.t);
    out.num("final_sup", last.sup_u);
    out.num("final_mass", last.mass);
    out.flag("boundary_contaminated", run.boundary_contaminated);
    let window = e.fit_window.map(|[a, b]| (a, b));
    for (side, name) in [(FrontSide::Right, "right"), (FrontSide::Left, "left")] {
        match dynamics::fit_front_speed(&run.trace, side, window) {
            Ok(fit) => {
                out.num(&format!("c_hat_{name}"), fit.c_hat);
                out.num(&format!("gamma_hat_{name}"), fit.gamma_hat);
                out.num(&format!("fit_rms_{name}"), fit.rms);
                out.num(&format!("c_hat_{name}_rel_error"), (fit.c_hat - speeds.c_star).abs() / speeds.c_star);
            }
            Err(err) => out.text(&format!("fit_{name}"), format!("unavailable ({err})")),
        }
    }
    out.csv = Some(run.trace.to_csv());
    let rows = &run.trace.rows;
    out.svg = Some(svg_plot(
        &format!("front positions, c = {}", fmt_num(ctx.c)),
        "t",
        "x",
        &[
            Series::new("x_right", rows.iter().map(|r| (r.t, r.x_right)).collect()),
            Series::new("x_left", rows.iter().map(|r| (r.t, r.x_left)).collect()),
        ],
    ));
    Ok(out)
}

fn exp_attraction(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let e = &ctx.cfg.experiment;
    let init = e.init.unwrap_or_default();
    out.num("c", ctx.c);
    out.text("init", init.kind());
    let cfg = ctx.wave_config()?;
    let wave = match waves::compute_kpp_wave(&ctx.env, ctx.c, &cfg) {
        Ok(w) => w,
        Err(WaveError::DegenerateWave { .. }) => {
            out.text("result", "nonexistent (DegenerateWave)");
            return Ok(out);
        }
        Err(err) => return Err(run_err(err)),
    };
    out.count("wave_periods", wave.diagnostics.periods);
    let horizon = ctx.cfg.time.horizon_periods as f64 * ctx.env.period();
    let rep = dynamics::wave_attraction_error(&ctx.env, ctx.c, &init, &wave, cfg.grid, ctx.stepper(), horizon)
        .map_err(run_err)?;
    out.num("final_error", rep.final_error());
    out.flag("boundary_contaminated", rep.boundary_contaminated);
    match rep.decreasing_in_u {
        Some(d) => out.num("decrease_margin", d),
        None => out.text("decrease_margin", "none (g_u >= 0 somewhere)"),
    }
    if let Some(fit) = rep.decay {
        out.num("sigma_hat", fit.sigma_hat);
        out.num("sigma_fit_rms", fit.rms);
        out.num("error_floor", fit.floor);
        out.text("sigma_window", format!("{},{}", fmt_num(fit.window.0), fmt_num(fit.window.1)));
    }
    out.csv = Some(rep.to_csv());
    out.svg = Some(svg_plot(
        &format!("distance to the forced wave, c = {}", fmt_num(ctx.c)),
        "t",
        "log10 error",
        &[Series::new(
            "e(t)",
            rep.series.iter().filter(|p| p.1 > 0.0).map(|p| (p.0, p.1.log10())).collect(),
        )],
    ));
    Ok(out)
}

fn epidemic_params(cfg: &ExperimentConfig) -> Result<epi::EpidemicParams, CliError> {
    match &cfg.environment {
        EnvironmentParams::SisDerived(p) => p.epidemic.build().map_err(|e| CliError::validation("environment", e)),
        _ => Err(CliError::validation("environment.kind", "needs sis_derived")),
    }
}

fn exp_epidemic(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let params = epidemic_params(ctx.cfg)?;
    let d = epi::derive_epidemic(&params).map_err(run_err)?;
    out.num("n_star_mean", d.n_star.mean());
    out.num("n_star_min", d.n_star.min());
    out.num("n_star_max", d.n_star.max());
    out.num("c_n", d.c_n);
    out.num("a_bar", d.a_bar);
    match d.wave_interval {
        Some((lo, hi)) => out.text("wave_interval", format!("[{}, {})", fmt_report(lo), fmt_report(hi))),
        None => out.text("wave_interval", "empty"),
    }
    if let Some(i) = &d.i_star {
        out.num("i_star_mean", i.mean());
    }
    match epi::transmission_thresholds(&params) {
        Ok(th) => {
            out.num("l_low", th.l_low);
            out.num("l_high", th.l_high);
        }
        Err(e) => out.text("thresholds", format!("unavailable ({e})")),
    }
    out.num("c", ctx.c);
    let host_cfg = HostWaveConfig {
        grid: ctx.grid()?,
        steps_per_period: ctx.cfg.time.dt_divisor,
        tol: ctx.cfg.experiment.tol.min(1e-9),
        max_periods: ctx.cfg.experiment.max_periods,
        samples_per_period: ctx.cfg.experiment.samples_per_period,
    };
    let host = HostDensity::traveling_wave(&d, ctx.c, &host_cfg).map_err(run_err)?;
    let hp = host.profile.clone().expect("computed host wave carries its profile");
    out.count("host_periods", hp.diagnostics.periods);
    out.num("host_monotonicity_defect", hp.monotonicity_defect());
    let env_i = epi::epidemic_environment(&d, &host).map_err(run_err)?;
    let speeds = waves::compute_speed_data(&env_i).map_err(run_err)?;
    out.num("c_star_infection", speeds.c_star);
    let mut cfg = ctx.wave_config()?;
    cfg.samples_per_period = hp.t_mesh.len();
    match waves::compute_kpp_wave(&env_i, ctx.c, &cfg) {
        Ok(w) => {
            out.text("result", "exists");
            out.hidden("exists", 1.0);
            out.count("i_periods", w.diagnostics.periods);
            out.num("i_sup", w.sup());
            let mut s_min = f64::INFINITY;
            let mut csv = String::from("t,x,N,I,S\n");
            for (j, &t) in w.t_mesh.iter().enumerate() {
                for (k, &i) in w.values[j].iter().enumerate() {
                    let x = w.grid.x(k);
                    let n = hp.eval(t, x);
                    s_min = s_min.min(n - i);
                    csv.push_str(&format!("{},{},{},{},{}\n", fmt_num(t), fmt_num(x), fmt_num(n), fmt_num(i), fmt_num(n - i)));
                }
            }
            out.num("s_min", s_min);
            out.csv = Some(csv);
            let xs = w.grid.points();
            out.svg = Some(svg_plot(
                &format!("host and infection waves, c = {}", fmt_num(ctx.c)),
                "x - ct",
                "density",
                &[
                    Series::new("N(0, x)", xs.iter().copied().zip(hp.at_phase(0).iter().copied()).collect()),
                    Series::new("I(0, x)", xs.iter().copied().zip(w.at_phase(0).iter().copied()).collect()),
                ],
            ));
        }
        Err(WaveError::DegenerateWave { periods, core_sup }) => {
            out.text("result", "nonexistent (DegenerateWave)");
            out.hidden("exists", 0.0);
            out.count("i_periods", periods);
            out.num("core_sup", core_sup);
        }
        Err(WaveError::AssumptionViolation(msg)) => {
            out.text("result", format!("nonexistent (AssumptionViolation: {msg})"));
            out.hidden("exists", 0.0);
        }
        Err(e) => return Err(run_err(e)),
    }
    Ok(out)
}

fn exp_period_limits(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    let params = epidemic_params(ctx.cfg)?;
    if (params.period - 1.0).abs() > 1e-12 {
        return Err(CliError::validation("environment.period", "period_limits needs the normalized form, period = 1"));
    }
    let periods = ctx.cfg.experiment.periods.clone().unwrap_or_default();
    let lim = epi::period_limits(&params, &periods).map_err(run_err)?;
    out.num("v_zero", lim.v_zero);
    out.num("a_bar_zero", lim.a_bar_zero);
    out.num("a_bar_inf", lim.a_bar_inf);
    let mut csv = String::from("T,s,v_T,v_0,v_inf,A_bar_T\n");
    let mut series = Vec::new();
    for row in &lim.rows {
        let key = fmt_num(row.period);
        out.num(&format!("T={key}.sup_dev_zero"), row.sup_dev_zero);
        out.num(&format!("T={key}.sup_dev_inf"), row.sup_dev_inf);
        out.num(&format!("T={key}.a_bar"), row.a_bar);
        for &(s, vi) in &lim.v_inf {
            let v = row.orbit.eval(s * row.orbit.period);
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                key,
                fmt_num(s),
                fmt_num(v),
                fmt_num(lim.v_zero),
                fmt_num(vi),
                fmt_num(row.a_bar)
            ));
        }
        series.push(Series::new(format!("v_T, T = {key}"), lim.v_inf.iter().map(|&(s, _)| (s, row.orbit.eval(s * row.orbit.period))).collect()));
    }
    let smallest = lim.rows.iter().min_by(|a, b| a.period.total_cmp(&b.period));
    let largest = lim.rows.iter().max_by(|a, b| a.period.total_cmp(&b.period));
    if let (Some(s), Some(l)) = (smallest, largest) {
        out.hidden("sup_dev_zero", s.sup_dev_zero);
        out.hidden("sup_dev_inf", l.sup_dev_inf);
    }
    series.truncate(6);
    series.push(Series::new("v_0", vec![(0.0, lim.v_zero), (1.0, lim.v_zero)]));
    series.push(Series::new("v_inf", lim.v_inf.clone()));
    out.csv = Some(csv);
    out.svg = Some(svg_plot("host orbit against the period limits", "s = t/T", "v", &series));
    Ok(out)
}

fn run_single(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<Outcome, CliError> {
    let env = env::build_environment(&cfg.environment).map_err(|e| CliError::validation("environment", e))?;
    let ctx = Ctx {
        cfg,
        env,
        c: cfg.experiment.c.unwrap_or(0.0),
        shift: cfg.experiment.shift,
    };
    let mut out = match kind {
        ExperimentKind::Cstar => exp_cstar(&ctx),
        ExperimentKind::KppWave => exp_kpp(&ctx),
        ExperimentKind::PulseWave => exp_pulse(&ctx),
        ExperimentKind::Ivp => exp_ivp(&ctx),
        ExperimentKind::Attraction => exp_attraction(&ctx),
        ExperimentKind::Epidemic => exp_epidemic(&ctx),
        ExperimentKind::PeriodLimits => exp_period_limits(&ctx),
        ExperimentKind::Sweep => Err(CliError::validation("sweep.base", "cannot sweep a sweep")),
    }?;
    let header = vec![
        ("experiment".to_string(), kind.name().to_string()),
        ("environment".to_string(), cfg.environment.kind().to_string()),
    ];
    out.lines.splice(0..0, header);
    Ok(out)
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub report: String,
    pub artifacts: Vec<PathBuf>,
    pub checks_passed: bool,
}

fn suffixed(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{tag}"),
    };
    path.with_file_name(name)
}

fn render(lines: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in lines {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}

fn worker_count() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::validation(WORKERS_ENV, format!("expected a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Runs `cfg`, writes its artifacts, and returns the report. On error
/// nothing written by this run is left behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let mut artifacts = Artifacts::new();
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let (lines, checks_passed) = match cfg.experiment.kind {
        ExperimentKind::Sweep => {
            let sweep = cfg.sweep.as_ref().expect("validated");
            let mut configs = Vec::with_capacity(sweep.values.len());
            for &v in &sweep.values {
                let mut sub = cfg.clone();
                sub.experiment.kind = sweep.base;
                match sweep.parameter.as_str() {
                    "c" => sub.experiment.c = Some(v),
                    "shift" => sub.experiment.shift = v,
                    p => sub.environment = environment_with(cfg, &p["environment.".len()..], v)?,
                }
                configs.push(sub);
            }
            let run_all = || -> Vec<Result<Outcome, CliError>> {
                configs.par_iter().map(|c| run_single(c, sweep.base)).collect()
            };
            let results = match worker_count()? {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(run_err)?
                    .install(run_all),
                None => run_all(),
            };
            let name = sweep.parameter.trim_start_matches("environment.");
            let mut lines = vec![
                ("experiment".to_string(), "sweep".to_string()),
                ("sweep.base".to_string(), sweep.base.name().to_string()),
                ("sweep.parameter".to_string(), sweep.parameter.clone()),
                ("sweep.values".to_string(), sweep.values.len().to_string()),
            ];
            let mut all_ok = true;
            for (&v, res) in sweep.values.iter().zip(results) {
                let mut o = res?;
                all_ok &= o.checks(&cfg.experiment.checks);
                let tag = format!("{name}={}", fmt_num(v));
                if let (Some(p), Some(csv)) = (&cfg.output.csv, &o.csv) {
                    artifacts.write(&suffixed(p, &tag), csv).map_err(io)?;
                }
                if let (Some(p), Some(svg)) = (&cfg.output.svg, &o.svg) {
                    artifacts.write(&suffixed(p, &tag), svg).map_err(io)?;
                }
                lines.extend(o.lines.into_iter().map(|(k, val)| (format!("[{tag}].{k}"), val)));
            }
            (lines, all_ok)
        }
        kind => {
            let mut o = run_single(cfg, kind)?;
            let ok = o.checks(&cfg.experiment.checks);
            if let (Some(p), Some(csv)) = (&cfg.output.csv, &o.csv) {
                artifacts.write(p, csv).map_err(io)?;
            }
            if let (Some(p), Some(svg)) = (&cfg.output.svg, &o.svg) {
                artifacts.write(p, svg).map_err(io)?;
            }
            (o.lines, ok)
        }
    };
    let mut lines = lines;
    lines.push(("checks".to_string(), if checks_passed { "pass" } else { "fail" }.to_string()));
    let report = render(&lines);
    if let Some(p) = &cfg.output.report {
        artifacts.write(p, &report).map_err(io)?;
    }
    Ok(RunSummary {
        report,
        artifacts: artifacts.commit(),
        checks_passed,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Text for `list-kinds`.
pub fn list_kinds() -> String {
    let mut s = String::new();
    s.push_str(&format!("environment: {}\n", EnvironmentParams::KINDS.join(", ")));
    s.push_str(&format!(
        "experiment: {}\n",
        ExperimentKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    ));
    s.push_str(&format!("init: {}\n", InitialData::KINDS.join(", ")));
    s.push_str("scheme: strang, imex_cn\n");
    s
}

/// Short description printed by `validate`.
pub fn describe(cfg: &ExperimentConfig) -> String {
    let mut s = format!(
        "valid: experiment={} environment={} domain=[{}, {}] n={} dt=T/{}",
        cfg.experiment.kind.name(),
        cfg.environment.kind(),
        fmt_num(cfg.domain.x_min),
        fmt_num(cfg.domain.x_max),
        cfg.domain.n,
        cfg.time.dt_divisor
    );
    if let Some(sw) = &cfg.sweep {
        if cfg.experiment.kind == ExperimentKind::Sweep {
            s.push_str(&format!(" sweep={}x{}", sw.parameter, sw.values.len()));
        }
    }
    s
}
