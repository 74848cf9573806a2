//! General-purpose numeric routines: adaptive quadrature and scalar root
//! finding. Both are used by the alternatives module (survival-curve L1
//! distances, expected censoring rates, censoring calibration).

use crate::error::{Error, Result};

/// Maximum bisection depth for adaptive Simpson. 2^52 subdivisions of the
/// original interval is beyond any practical resolution; hitting the limit
/// with a still-failing error estimate is reported as non-convergence.
const MAX_DEPTH: u32 = 52;

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance
/// `tol`.
///
/// The classic recursive scheme with Richardson correction: an interval is
/// accepted when the two-panel and one-panel estimates agree to `15 * eps`,
/// and the local tolerance is halved on each split so the accumulated error
/// stays below `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!("integrate: non-finite bounds [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::Numeric(format!("integrate: tolerance {tol} must be positive")));
    }
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return Ok(-integrate(f, b, a, tol)?);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut worst_residual = 0.0f64;
    let value = asr(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut worst_residual);
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "integrate: non-finite integrand encountered on [{a}, {b}]"
        )));
    }
    if worst_residual > tol {
        return Err(Error::Numeric(format!(
            "integrate: failed to reach tolerance {tol} on [{a}, {b}] (residual {worst_residual:.3e})"
        )));
    }
    Ok(value)
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn asr<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
    worst_residual: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        // Non-finite integrand: abort this branch, the caller rejects NaN.
        *worst_residual = f64::INFINITY;
        return left + right;
    }
    if delta.abs() <= 15.0 * eps || m == a || m == b {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        // Depth exhausted: accept the refined estimate but record how far
        // off this panel still is so the caller can reject the total.
        *worst_residual = worst_residual.max(delta.abs() / 15.0);
        return left + right + delta / 15.0;
    }
    let half = 0.5 * eps;
    asr(f, a, m, fa, flm, fm, left, half, depth - 1, worst_residual)
        + asr(f, m, b, fm, frm, fb, right, half, depth - 1, worst_residual)
}

/// Brent's method for a root of `f` on the bracket `[lo, hi]`.
///
/// Requires `f(lo)` and `f(hi)` to have opposite signs. Converges when the
/// bracket shrinks below `xtol` or |f| falls below `ftol`.
pub fn find_root<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    xtol: f64,
    ftol: f64,
    max_iter: u32,
) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::Numeric(format!(
            "find_root: no sign change on [{lo}, {hi}] (f(lo)={fa:.3e}, f(hi)={fb:.3e})"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.abs() > fc.abs() {
            // Make b the best estimate.
            (a, b, c) = (b, c, b);
            (fa, fb, fc) = (fb, fc, fb);
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= ftol {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Attempt inverse quadratic interpolation / secant.
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0)),
                    (q - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(Error::Numeric(format!(
        "find_root: no convergence on [{lo}, {hi}] after {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        // Simpson is exact on cubics; the adaptive wrapper must preserve that.
        let f = |x: f64| 3.0 * x * x;
        assert!((integrate(&f, 0.0, 2.0, 1e-10).unwrap() - 8.0).abs() < 1e-12);
        let g = |x: f64| x * x * x - x;
        assert!((integrate(&g, -1.0, 3.0, 1e-10).unwrap() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn integrates_smooth_transcendentals() {
        let f = |x: f64| (-x).exp();
        let got = integrate(&f, 0.0, 30.0, 1e-10).unwrap();
        assert!((got - (1.0 - (-30.0f64).exp())).abs() < 1e-9, "got {got}");
        let g = |x: f64| x.sin();
        let got = integrate(&g, 0.0, std::f64::consts::PI, 1e-10).unwrap();
        assert!((got - 2.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn integrates_kinked_absolute_difference() {
        // |e^-x - e^-2x| has a kink at ln 2; closed form of the integral on
        // [0, 20]: split at ln2. Value = 2*(1/2 - 1/4) - (1 - 1/2) ... compute
        // directly: int_0^ln2 (e^-2x - e^-x)... sign: e^-x > e^-2x for x>0.
        let f = |x: f64| ((-x).exp() - (-2.0 * x).exp()).abs();
        let got = integrate(&f, 0.0, 20.0, 1e-8).unwrap();
        let want = (1.0 - (-20.0f64).exp()) - 0.5 * (1.0 - (-40.0f64).exp());
        assert!((got - want).abs() < 1e-7, "got {got}, want {want}");
    }

    #[test]
    fn integrate_respects_orientation_and_degenerate_interval() {
        let f = |x: f64| x;
        assert_eq!(integrate(&f, 1.0, 1.0, 1e-8).unwrap(), 0.0);
        let forward = integrate(&f, 0.0, 2.0, 1e-10).unwrap();
        let backward = integrate(&f, 2.0, 0.0, 1e-10).unwrap();
        assert!((forward + backward).abs() < 1e-12);
    }

    #[test]
    fn integrate_rejects_bad_arguments() {
        let f = |x: f64| x;
        assert!(integrate(&f, 0.0, f64::INFINITY, 1e-8).is_err());
        assert!(integrate(&f, 0.0, 1.0, 0.0).is_err());
        let nan = |_: f64| f64::NAN;
        assert!(integrate(&nan, 0.0, 1.0, 1e-8).is_err());
    }

    #[test]
    fn brent_finds_simple_roots() {
        let f = |x: f64| x * x - 2.0;
        let r = find_root(&f, 0.0, 2.0, 1e-14, 0.0, 100).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12, "r={r}");

        let g = |x: f64| x.cos() - x;
        let r = find_root(&g, 0.0, 1.0, 1e-14, 0.0, 100).unwrap();
        assert!((r - 0.739_085_133_215_160_6).abs() < 1e-12, "r={r}");
    }

    #[test]
    fn brent_handles_steep_monotone_functions() {
        // Similar shape to the censoring-rate calibration objective: rapidly
        // decreasing, flat tails.
        let target = 0.3;
        let f = |s: f64| 1.0 / (1.0 + s) - target;
        let r = find_root(&f, 1e-6, 1e6, 1e-12, 1e-12, 200).unwrap();
        assert!((1.0 / (1.0 + r) - target).abs() < 1e-10, "r={r}");
    }

    #[test]
    fn brent_rejects_unbracketed_roots() {
        let f = |x: f64| x * x + 1.0;
        assert!(find_root(&f, -1.0, 1.0, 1e-12, 0.0, 100).is_err());
    }
}
