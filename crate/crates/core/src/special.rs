//! Special functions not covered by `statrs`.

#[cfg(test)]
use std::f64::consts::SQRT_2;

#[cfg(test)]
use libm::erfc;

/// Trigamma, psi'(x), for x > 0: upward recurrence to x >= 10, then the
/// asymptotic expansion.
pub(crate) fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))))
}

/// Standard normal CDF.
#[cfg(test)]
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

#[cfg(test)]
pub(crate) fn normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.918_938_533_204_672_8
}
