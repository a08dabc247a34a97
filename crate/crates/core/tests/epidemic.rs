use approx::assert_relative_eq;
use proptest::prelude::*;
use shiftwave::epi::{derive_epidemic, epidemic_environment, transmission_thresholds, HostDensity, HostWaveConfig, SeasonalEpidemic};
use shiftwave::pde::{Grid1D, StepperConfig};
use shiftwave::waves::{compute_kpp_wave, WaveConfig};

fn seasonal() -> SeasonalEpidemic {
    SeasonalEpidemic {
        b0: 2.0,
        b_amp: 0.5,
        m0: 1.0,
        m1: 0.5,
        w_amp: 0.5,
        ..Default::default()
    }
}

#[test]
fn constant_coefficients_match_closed_forms() {
    let p = SeasonalEpidemic {
        b0: 3.0,
        m0: 1.0,
        m1: 0.5,
        w0: 2.0,
        g0: 0.5,
        ..Default::default()
    };
    let d = derive_epidemic(&p.build().unwrap()).unwrap();
    // B = b0, mu = m0 + m1 N
    let n_star = (p.b0 - p.m0) / p.m1;
    assert_relative_eq!(d.n_star.mean(), n_star, max_relative = 1e-9);
    assert_relative_eq!(d.c_n, 2.0 * (p.b0 - p.m0).sqrt(), max_relative = 1e-9);
    assert_relative_eq!(d.a_bar, p.w0 * n_star - p.b0 - p.g0, max_relative = 1e-9);
    let i_star = d.i_star.as_ref().unwrap();
    assert_relative_eq!(i_star.mean(), d.a_bar / p.w0, max_relative = 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mean_infection_rate_is_affine_in_transmission(l in 0.0..3.0f64, w_amp in 0.0..0.9f64) {
        let params = SeasonalEpidemic { w_amp, ..seasonal() }.build().unwrap();
        let th = transmission_thresholds(&params).unwrap();
        let direct = derive_epidemic(&params.with_transmission_scale(l)).unwrap().a_bar;
        prop_assert!((direct - th.a_bar(l)).abs() <= 1e-9 * (1.0 + direct.abs()), "{direct} vs {}", th.a_bar(l));
        prop_assert!(th.l_low < th.l_high);
        prop_assert!(th.a_bar(th.l_low).abs() < 1e-9);
    }
}

#[test]
fn susceptibles_stay_nonnegative_along_the_infection_wave() {
    let d = derive_epidemic(&seasonal().build().unwrap()).unwrap();
    let (lo, hi) = d.wave_interval.expect("seasonal case has waves");
    let c = lo + 0.1 * (hi - lo);
    let grid = Grid1D::new(-100.0, 100.0, 1001).unwrap();
    let host_cfg = HostWaveConfig {
        grid,
        steps_per_period: 128,
        ..HostWaveConfig::desk()
    };
    let host = HostDensity::traveling_wave(&d, c, &host_cfg).unwrap();
    let hp = host.profile.clone().unwrap();
    assert!(hp.monotonicity_defect() <= 1e-8, "host defect {}", hp.monotonicity_defect());
    let env = epidemic_environment(&d, &host).unwrap();
    let cfg = WaveConfig {
        grid,
        stepper: StepperConfig::per_period(1.0, 128),
        samples_per_period: hp.t_mesh.len(),
        ..WaveConfig::desk(1.0)
    };
    let w = compute_kpp_wave(&env, c, &cfg).unwrap();
    let mut s_min = f64::INFINITY;
    for (j, &t) in w.t_mesh.iter().enumerate() {
        for (k, &i) in w.values[j].iter().enumerate() {
            s_min = s_min.min(hp.eval(t, grid.x(k)) - i);
        }
    }
    assert!(s_min >= -1e-6, "S dips to {s_min}");
}
