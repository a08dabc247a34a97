use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use shiftwave::env::{build_environment, EnvironmentParams, PeriodicEnvironment, TanhFisherParams};
use shiftwave::pde::{integrate_periods, Boundary, BoundaryPolicy, Field, Frame, Grid1D, Scheme, StepperConfig};
use shiftwave::waves::{alpha_orbit, PeriodIteration, WaveConfig};

fn fisher() -> PeriodicEnvironment {
    build_environment(&EnvironmentParams::default()).unwrap()
}

fn fisher_with(r_amp: f64, s_mean: f64) -> PeriodicEnvironment {
    build_environment(&EnvironmentParams::TanhFisher(TanhFisherParams {
        r_amp,
        s_mean,
        ..Default::default()
    }))
    .unwrap()
}

fn small_grid() -> Grid1D {
    Grid1D::new(-20.0, 20.0, 201).unwrap()
}

fn bump(h: f64, center: f64, width: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| h * (-((x - center) / width).powi(2)).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn comparison_principle(
        h1 in 0.0..1.5f64,
        extra in 0.0..1.0f64,
        center in -5.0..5.0f64,
        width in 0.5..4.0f64,
        c in -2.0..2.0f64,
        scheme in prop_oneof![Just(Scheme::Strang), Just(Scheme::ImexCn)],
    ) {
        let env = fisher();
        let grid = small_grid();
        let cfg = StepperConfig::per_period(1.0, 128).with_scheme(scheme);
        let lo = Field::from_fn(grid, 0.0, bump(h1, center, width));
        let hi = Field::from_fn(grid, 0.0, |x| bump(h1, center, width)(x) + bump(extra, 0.0, 2.0)(x));
        let bc = BoundaryPolicy::neumann();
        let a = integrate_periods(&lo, &env, Frame::Moving { c }, &bc, cfg, 1).unwrap();
        let b = integrate_periods(&hi, &env, Frame::Moving { c }, &bc, cfg, 1).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            prop_assert!(*u <= v + 1e-12, "order lost: {u} > {v}");
        }
    }

    #[test]
    fn a_priori_bound(h in 0.0..3.0f64, center in -5.0..5.0f64, c in -2.0..2.0f64) {
        let env = fisher();
        let grid = small_grid();
        let cfg = StepperConfig::per_period(1.0, 128);
        let u0 = Field::from_fn(grid, 0.0, bump(h, center, 2.0));
        let u = integrate_periods(&u0, &env, Frame::Moving { c }, &BoundaryPolicy::neumann(), cfg, 2).unwrap();
        // g <= r(t) - u <= 1.5 - u, so no state can climb above max(sup u0, 1.5)
        let bound = h.max(1.5) + 1e-12;
        for v in &u.values {
            prop_assert!(*v >= -1e-12 && *v <= bound, "value {v} outside [0, {bound}]");
        }
    }

    #[test]
    fn monotone_profiles_stay_monotone(
        center in -10.0..10.0f64,
        width in 0.5..5.0f64,
        c in -2.0..2.0f64,
        r_amp in 0.0..0.9f64,
    ) {
        let env = fisher_with(r_amp, -1.0);
        let alpha = Arc::new(alpha_orbit(&env).unwrap());
        let grid = small_grid();
        let a0 = alpha.values[0];
        let u0 = Field::from_fn(grid, 0.0, |x| a0 / (1.0 + ((x - center) / width).exp()));
        let u = integrate_periods(
            &u0,
            &env,
            Frame::Moving { c },
            &BoundaryPolicy::wave(alpha),
            StepperConfig::per_period(1.0, 128),
            1,
        )
        .unwrap();
        for w in u.values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "increase {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn translation_covariance(k in -20i32..20, h in 0.1..1.5f64, c in -2.0..2.0f64) {
        // shifting the environment by y and the data by y shifts the solution
        let env = fisher();
        let grid = small_grid();
        let y = k as f64 * grid.dx();
        let moved = Grid1D::new(grid.x_min - y, grid.x_max - y, grid.n).unwrap();
        let cfg = StepperConfig::per_period(1.0, 64);
        let bc = BoundaryPolicy::neumann();
        let u0 = Field::from_fn(grid, 0.0, bump(h, 1.0, 3.0));
        let v0 = Field::from_fn(moved, 0.0, |x| bump(h, 1.0, 3.0)(x + y));
        let u = integrate_periods(&u0, &env, Frame::Moving { c }, &bc, cfg, 1).unwrap();
        let v = integrate_periods(&v0, &env.shifted(y), Frame::Moving { c }, &bc, cfg, 1).unwrap();
        let worst = u.values.iter().zip(&v.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-10, "covariance defect {worst}");
    }
}

#[test]
fn kpp_iteration_decreases_from_the_orbit() {
    let env = fisher();
    let alpha = Arc::new(alpha_orbit(&env).unwrap());
    for c in [-1.0, 0.5, 1.5] {
        let cfg = WaveConfig {
            grid: Grid1D::new(-60.0, 60.0, 601).unwrap(),
            stepper: StepperConfig::per_period(1.0, 128),
            ..WaveConfig::desk(1.0)
        };
        let start = vec![alpha.values[0]; cfg.grid.n];
        let mut it = PeriodIteration::kpp(&env, c, &cfg, alpha.clone(), start).unwrap();
        for _ in 0..12 {
            let s = it.next_period().unwrap();
            assert!(s.max_increase <= 1e-10, "c = {c}: period {} increased by {}", s.period, s.max_increase);
        }
    }
}

fn zero_env() -> PeriodicEnvironment {
    PeriodicEnvironment::new(
        "heat",
        1.0,
        Arc::new(|_, _, _| 0.0),
        Arc::new(|_, _| 0.0),
        Arc::new(|_, _| 0.0),
        1.0,
        1.0,
    )
}

fn heat_error(n: usize, scheme: Scheme) -> f64 {
    let grid = Grid1D::new(0.0, PI, n).unwrap();
    let u0 = Field::from_fn(grid, 0.0, f64::sin);
    let bc = BoundaryPolicy {
        left: Boundary::Zero,
        right: Boundary::Zero,
    };
    // dt proportional to dx so both errors shrink together
    let cfg = StepperConfig::per_period(1.0, 2 * (n - 1)).with_scheme(scheme);
    let u = integrate_periods(&u0, &zero_env(), Frame::Lab { c: 0.0 }, &bc, cfg, 1).unwrap();
    let decay = (-1.0f64).exp();
    u.values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - decay * grid.x(i).sin()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn heat_eigenmode_converges_at_second_order() {
    for scheme in [Scheme::Strang, Scheme::ImexCn] {
        let errs: Vec<f64> = [41, 81, 161].iter().map(|&n| heat_error(n, scheme)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "{scheme:?}: errors {errs:?}, order {order}");
        }
    }
}

#[test]
fn unfavorable_everywhere_kills_compact_data() {
    // g <= -1 + ... on the right: data started far right decays like e^{-t}
    let env = fisher_with(0.0, -1.0);
    let grid = Grid1D::new(-20.0, 60.0, 401).unwrap();
    let u0 = Field::from_fn(grid, 0.0, bump(0.5, 40.0, 2.0));
    let u = integrate_periods(
        &u0,
        &env,
        Frame::Moving { c: 0.0 },
        &BoundaryPolicy::neumann(),
        StepperConfig::per_period(1.0, 128),
        3,
    )
    .unwrap();
    let right_sup = u.values.iter().enumerate().filter(|(i, _)| grid.x(*i) > 20.0).map(|p| *p.1).fold(0.0, f64::max);
    assert!(right_sup <= 0.5 * (-3.0f64).exp() * 1.01, "{right_sup}");
}
