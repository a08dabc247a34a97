//! Small numerical kernels shared by the solvers: adaptive Gauss-Kronrod
//! quadrature, a Dormand-Prince 5(4) scalar integrator, scalar bisection and
//! a pre-factored tridiagonal (Thomas) solver.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

// Kronrod 15-point abscissae (non-negative half) and weights; every odd
// index is also a Gauss 7-point node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive G7K15 quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // Start from a handful of panels so that narrow features are not missed.
    let panels = 8;
    let w = (b - a) / panels as f64;
    let mut stack: Vec<(f64, f64, f64, u32)> = (0..panels)
        .map(|k| (a + k as f64 * w, a + (k + 1) as f64 * w, tol / panels as f64, 0))
        .collect();
    let mut total = 0.0;
    while let Some((lo, hi, local_tol, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        if err <= local_tol.max(1e-15 * val.abs()) || depth >= 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * local_tol, depth + 1));
            stack.push((mid, hi, 0.5 * local_tol, depth + 1));
        }
    }
    total
}

/// Mean of `f` over one period `[0, period]`.
pub fn period_mean<F: Fn(f64) -> f64>(f: F, period: f64, tol: f64) -> f64 {
    integrate(f, 0.0, period, tol * period) / period
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

/// Integrates the scalar ODE `u' = f(t, u)` from `t0` to `t1` with the
/// Dormand-Prince 5(4) embedded pair.
pub fn dopri5<F: Fn(f64, f64) -> f64>(
    f: F,
    t0: f64,
    t1: f64,
    u0: f64,
    opts: &OdeOptions,
) -> Result<f64, OdeError> {
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A2: [f64; 1] = [0.2];
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
    const A5: [f64; 4] = [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ];
    const A6: [f64; 5] = [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ];
    const B: [f64; 6] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ];
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];

    let span = t1 - t0;
    if span == 0.0 {
        return Ok(u0);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut u = u0;
    let mut h = dir * (span.abs() / 64.0).min(0.05 * span.abs().max(1e-3));
    let mut k1 = f(t, u);
    let h_min = 1e-14 * span.abs().max(1.0);

    for _ in 0..opts.max_steps {
        if (t1 - t) * dir <= 0.0 {
            return Ok(u);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let k2 = f(t + C[0] * h, u + h * A2[0] * k1);
        let k3 = f(t + C[1] * h, u + h * (A3[0] * k1 + A3[1] * k2));
        let k4 = f(t + C[2] * h, u + h * (A4[0] * k1 + A4[1] * k2 + A4[2] * k3));
        let k5 = f(
            t + C[3] * h,
            u + h * (A5[0] * k1 + A5[1] * k2 + A5[2] * k3 + A5[3] * k4),
        );
        let k6 = f(
            t + C[4] * h,
            u + h * (A6[0] * k1 + A6[1] * k2 + A6[2] * k3 + A6[3] * k4 + A6[4] * k5),
        );
        let u_new = u + h * (B[0] * k1 + B[2] * k3 + B[3] * k4 + B[4] * k5 + B[5] * k6);
        let k7 = f(t + h, u_new);
        let err_raw =
            h * (E[0] * k1 + E[2] * k3 + E[3] * k4 + E[4] * k5 + E[5] * k6 + E[6] * k7);
        let scale = opts.atol + opts.rtol * u.abs().max(u_new.abs());
        let err = (err_raw / scale).abs();
        if !u_new.is_finite() || !err.is_finite() {
            if h.abs() <= h_min {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            t += h;
            u = u_new;
            k1 = k7;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h.abs() < h_min {
                return Err(OdeError::StepFailure { t, h });
            }
        }
    }
    Err(OdeError::StepFailure { t, h })
}

/// Bisection for a root of a function that changes sign on `[lo, hi]`.
/// Returns `None` if the endpoints do not bracket a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Option<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= xtol || mid == lo || mid == hi {
            return Some(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// LU factors of a constant tridiagonal matrix, ready for repeated solves.
///
/// Row `i` reads `lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1]`.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl Tridiagonal {
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(lower.len() == n && upper.len() == n && n >= 1);
        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        inv_denom[0] = 1.0 / diag[0];
        c_prime[0] = upper[0] * inv_denom[0];
        for i in 1..n {
            let denom = diag[i] - lower[i] * c_prime[i - 1];
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = upper[i] * inv_denom[i];
        }
        Self {
            lower: lower.to_vec(),
            c_prime,
            inv_denom,
        }
    }

    /// Solves in place: `rhs` is overwritten by the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_of_smooth_and_kinked_integrands() {
        let v = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13);
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        let v = integrate(|x: f64| x.abs(), -1.0, 2.0, 1e-12);
        assert_relative_eq!(v, 2.5, epsilon = 1e-11);
    }

    #[test]
    fn dopri_matches_exponential_and_logistic() {
        let opts = OdeOptions::default();
        let u = dopri5(|_, u| -u, 0.0, 3.0, 1.0, &opts).unwrap();
        assert_relative_eq!(u, (-3.0f64).exp(), max_relative = 1e-9);
        let u = dopri5(|_, u| u * (1.0 - u), 0.0, 1.0, 0.5, &opts).unwrap();
        assert_relative_eq!(u, 1.0 / (1.0 + (-1.0f64).exp()), max_relative = 1e-9);
        // backwards in time
        let u = dopri5(|_, u| -u, 1.0, 0.0, 1.0, &opts).unwrap();
        assert_relative_eq!(u, 1.0f64.exp(), max_relative = 1e-9);
    }

    #[test]
    fn thomas_solve_against_dense_product() {
        let n = 7;
        let lower: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { -0.3 - 0.01 * i as f64 }).collect();
        let upper: Vec<f64> = (0..n).map(|i| if i == n - 1 { 0.0 } else { -0.2 }).collect();
        let diag = vec![1.7; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += lower[i] * x[i - 1];
            }
            if i + 1 < n {
                b[i] += upper[i] * x[i + 1];
            }
        }
        Tridiagonal::factor(&lower, &diag, &upper).solve_in_place(&mut b);
        for i in 0..n {
            assert_relative_eq!(b[i], x[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn bisection_requires_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(r, 2f64.sqrt(), epsilon = 1e-13);
    }
}
