//! Adaptive Simpson quadrature on finite and semi-infinite intervals.

use crate::error::{Error, Result};

/// Absolute tolerance used by the engine wherever no closed form exists.
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("finite bounds required, got [{a}, {b}]")));
    }
    if b <= a {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut residual = 0.0;
    let value = simpson(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &mut residual);
    if residual > tol {
        return Err(Error::Quadrature { tolerance: tol, residual });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    residual: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || !(m > a && b > m) {
        if depth == 0 && delta.abs() > 15.0 * tol {
            *residual += delta.abs() / 15.0;
        }
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, residual)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, residual)
}

/// Integrates over `[a, b]` split at the given interior breakpoints, so kinks
/// of piecewise integrands never sit inside a Simpson panel.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    let inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    let pieces = inner.len() + 1;
    let mut lo = a;
    let mut sum = 0.0;
    for &x in inner.iter().chain(std::iter::once(&b)) {
        sum += integrate(&f, lo, x, tol / pieces as f64)?;
        lo = x;
    }
    Ok(sum)
}

/// Integrates `f` over `[a, inf)` with the map `u = a + x / (1 - x)`. The
/// integrand must decay to zero at infinity.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<f64> {
    let g = |x: f64| {
        if x >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - x;
        let v = f(a + x / one_minus) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// Semi-infinite integral split at breakpoints: finite pieces up to the last
/// breakpoint, then the mapped tail.
pub fn integrate_to_infinity_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    let last = breaks.iter().copied().filter(|&x| x > a).fold(a, f64::max);
    let head = if last > a { integrate_with_breaks(&f, a, last, breaks, 0.5 * tol)? } else { 0.0 };
    Ok(head + integrate_to_infinity(&f, last, 0.5 * tol)?)
}
