//! Adaptive integration on finite intervals and on the real line.

use quadrature::double_exponential;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 24;
/// Per-piece tolerance floor; below it rounding noise in the integrand dominates.
/// Pieces narrower than a relative width of 1e-9 are accepted as they stand.
const TOL_FLOOR: f64 = 1e-15;

/// Integrates `f` over `[a, b]`, bisecting until every piece meets its share
/// of the absolute tolerance.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    bisect(f, a, b, tol, MAX_DEPTH)
}

fn bisect<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let out = double_exponential::integrate(f, a, b, tol);
    let floor = TOL_FLOOR.max(1e-12 * out.integral.abs());
    if out.error_estimate <= tol.max(floor) || b - a <= 1e-9 * (1.0 + a.abs().max(b.abs())) {
        return Ok(out.integral);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "quadrature on [{a}, {b}] stalled at error {:.3e} (target {tol:.1e})",
            out.error_estimate
        )));
    }
    let mid = 0.5 * (a + b);
    Ok(bisect(f, a, mid, 0.5 * tol, depth - 1)? + bisect(f, mid, b, 0.5 * tol, depth - 1)?)
}

/// Integrates `f` over the real line. The finite range between the sorted
/// `breaks` is split at each break; each tail maps onto `[0, 1)` through
/// `x = edge +- scale t / (1 - t)`.
pub(crate) fn integrate_line<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], scale: f64, tol: f64) -> Result<f64> {
    let mut pts: Vec<f64> = breaks.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let pieces = pts.len() + 1;
    let share = tol / pieces as f64;

    let left = |t: f64| {
        let s = 1.0 - t;
        f(lo - scale * t / s) * scale / (s * s)
    };
    let right = |t: f64| {
        let s = 1.0 - t;
        f(hi + scale * t / s) * scale / (s * s)
    };
    let mut total = integrate(&left, 0.0, 1.0, share)? + integrate(&right, 0.0, 1.0, share)?;
    for w in pts.windows(2) {
        total += integrate(f, w[0], w[1], share)?;
    }
    Ok(total)
}
