//! Small numerical kernels shared across the crate: bracketed root finding,
//! adaptive quadrature, golden-section minimization and an embedded
//! Runge-Kutta stepper with event detection.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("no sign change on bracket [{0}, {1}]")]
    NoBracket(f64, f64),
    #[error("iteration limit reached (best residual {0:.3e})")]
    NoConvergence(f64),
    #[error("quadrature failed to reach tolerance {0:.3e}")]
    QuadratureTolerance(f64),
}

/// Bisection on `[a, b]` down to interval width `tol`, then one Newton polish
/// using a finite-difference slope. The bracket must show a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64, NumericsError> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NoBracket(a, b));
    }
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let x = 0.5 * (a + b);
    // Newton polish with a central-difference slope.
    let h = tol.max(1e-9);
    let d = (f(x + h) - f(x - h)) / (2.0 * h);
    if d != 0.0 && d.is_finite() {
        let xn = x - f(x) / d;
        if xn > a - (b - a).abs() && xn < b + (b - a).abs() && f(xn).abs() <= f(x).abs() {
            return Ok(xn);
        }
    }
    Ok(x)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)
    }
}

/// Integrate a piecewise-smooth function, splitting at the given interior
/// breakpoints so each sub-integral sees a smooth integrand.
pub fn integrate_piecewise<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut total = 0.0;
    let mut lo = a;
    for c in cuts {
        total += integrate(f, lo, c, tol);
        lo = c;
    }
    total + integrate(f, lo, b, tol)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Outcome of one adaptive step of [`rk45_step`].
pub struct RkStep {
    pub y: [f64; 4],
    pub h_used: f64,
    pub h_next: f64,
    pub err: f64,
}

/// One Dormand-Prince evaluation with a fixed step `h`: returns the 5th-order
/// solution and the embedded error estimate.  Used for event localization
/// where the caller controls `h` directly.
pub fn rk45_eval<F: Fn(&[f64; 4]) -> [f64; 4]>(f: &F, y: &[f64; 4], h: f64) -> ([f64; 4], f64) {
    // Dormand-Prince coefficients.
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let k1 = f(y);
    let k2 = f(&add(y, &[k1], &[A21], h));
    let k3 = f(&add(y, &[k1, k2], &[A31, A32], h));
    let k4 = f(&add(y, &[k1, k2, k3], &[A41, A42, A43], h));
    let k5 = f(&add(y, &[k1, k2, k3, k4], &[A51, A52, A53, A54], h));
    let k6 = f(&add(y, &[k1, k2, k3, k4, k5], &[A61, A62, A63, A64, A65], h));
    let y5 = add(y, &[k1, k3, k4, k5, k6], &[B1, B3, B4, B5, B6], h);
    let k7 = f(&y5);
    let mut err = 0.0f64;
    for i in 0..4 {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        err = err.max(e.abs());
    }
    (y5, err)
}

/// One adaptive Dormand-Prince 4(5) step for a 4-dimensional first-order
/// system.  Returns the accepted state and the suggested next step size; the
/// caller loops and handles events.
pub fn rk45_step<F: Fn(&[f64; 4]) -> [f64; 4]>(f: &F, y: &[f64; 4], mut h: f64, tol: f64) -> RkStep {
    loop {
        let (y5, err) = rk45_eval(f, y, h);
        if err <= tol || h.abs() < 1e-14 {
            let fac = if err > 0.0 {
                (tol / err).powf(0.2).clamp(0.2, 5.0) * 0.9
            } else {
                5.0
            };
            return RkStep {
                y: y5,
                h_used: h,
                h_next: h * fac,
                err,
            };
        }
        h *= (tol / err).powf(0.25).clamp(0.1, 0.9);
    }
}

fn add(y: &[f64; 4], ks: &[[f64; 4]], cs: &[f64], h: f64) -> [f64; 4] {
    let mut out = *y;
    for (k, c) in ks.iter().zip(cs) {
        for i in 0..4 {
            out[i] += h * c * k[i];
        }
    }
    out
}
