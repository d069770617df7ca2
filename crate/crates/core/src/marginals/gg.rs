use statrs::function::gamma::{digamma, gamma_ur, ln_gamma};

use super::{check_fit_input, kurtosis, mean, FitFlags};
use crate::error::{Error, Result};
use crate::special::trigamma;

/// Shape clamp applied by [`fit_gg`].
pub const GG_BETA_RANGE: (f64, f64) = (0.05, 5.0);

const MAX_NEWTON_ITERS: usize = 100;

/// Generalized Gaussian: `beta / (2 alpha Gamma(1/beta)) exp(-(|x - mu| / alpha)^beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
}

impl GgParams {
    pub fn new(alpha: f64, beta: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) || !mu.is_finite() {
            return Err(Error::Domain(format!(
                "invalid GG parameters alpha={alpha} beta={beta} mu={mu}"
            )));
        }
        Ok(GgParams { alpha, beta, mu })
    }

    fn ln_norm(&self) -> f64 {
        (self.beta / (2.0 * self.alpha)).ln() - ln_gamma(1.0 / self.beta)
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.alpha * (ln_gamma(3.0 / self.beta) - ln_gamma(1.0 / self.beta)).exp()
    }
}

pub fn gg_ln_pdf(x: f64, p: &GgParams) -> f64 {
    p.ln_norm() - ((x - p.mu).abs() / p.alpha).powf(p.beta)
}

pub fn gg_pdf(x: f64, p: &GgParams) -> f64 {
    gg_ln_pdf(x, p).exp()
}

/// `1/2 + sign(x - mu) P(1/beta, (|x - mu|/alpha)^beta) / 2`, evaluated through the
/// upper tail so both sides keep full absolute precision.
pub fn gg_cdf(x: f64, p: &GgParams) -> f64 {
    let z = x - p.mu;
    if z == 0.0 {
        return 0.5;
    }
    let t = (z.abs() / p.alpha).powf(p.beta);
    let tail = if t.is_infinite() {
        0.0
    } else {
        0.5 * gamma_ur(1.0 / p.beta, t)
    };
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// GG kurtosis `Gamma(5/b) Gamma(1/b) / Gamma(3/b)^2`, decreasing in `b`.
fn gg_kurtosis(beta: f64) -> f64 {
    (ln_gamma(5.0 / beta) + ln_gamma(1.0 / beta) - 2.0 * ln_gamma(3.0 / beta)).exp()
}

/// Moment-matching estimate on centered data: shape from kurtosis (bisection
/// in log-shape over the clamp range), scale from the variance.
pub(crate) fn moment_estimate(centered: &[f64]) -> Result<(f64, f64)> {
    let k = kurtosis(centered)?;
    let (lo_b, hi_b) = GG_BETA_RANGE;
    let beta = if k >= gg_kurtosis(lo_b) {
        lo_b
    } else if k <= gg_kurtosis(hi_b) {
        hi_b
    } else {
        let (mut lo, mut hi) = (lo_b.ln(), hi_b.ln());
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if gg_kurtosis(mid.exp()) > k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    };
    let var = centered.iter().map(|x| x * x).sum::<f64>() / centered.len() as f64;
    let alpha = (var * (ln_gamma(1.0 / beta) - ln_gamma(3.0 / beta)).exp()).sqrt();
    Ok((alpha, beta))
}

/// Sufficient sums of the profile likelihood in the shape parameter.
struct ShapeProblem {
    /// ln|x| of the nonzero centered samples.
    logs: Vec<f64>,
    n: f64,
}

struct ShapeEval {
    /// Score equation value (zero at the ML shape).
    g: f64,
    dg: f64,
    /// `sum |x|^beta`.
    s0: f64,
}

impl ShapeProblem {
    fn eval(&self, beta: f64) -> ShapeEval {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &self.logs {
            let e = (beta * l).exp();
            s0 += e;
            s1 += e * l;
            s2 += e * l * l;
        }
        let inv_b = 1.0 / beta;
        let log_term = (beta * s0 / self.n).ln();
        let r1 = s1 / s0;
        let g = 1.0 + digamma(inv_b) * inv_b - r1 + log_term * inv_b;
        let dg = -digamma(inv_b) * inv_b * inv_b - trigamma(inv_b) * inv_b.powi(3) + inv_b * inv_b
            - s2 / s0
            + r1 * r1
            + r1 * inv_b
            - log_term * inv_b * inv_b;
        ShapeEval { g, dg, s0 }
    }

    fn alpha(&self, beta: f64, s0: f64) -> f64 {
        (beta * s0 / self.n).powf(1.0 / beta)
    }
}

/// Maximum-likelihood GG fit. The location is fixed to the sample mean; the
/// shape solves the profile score equation by safeguarded Newton-Raphson
/// started from the moment estimate, and is clamped to [`GG_BETA_RANGE`].
pub fn fit_gg(samples: &[f64]) -> Result<(GgParams, FitFlags)> {
    check_fit_input(samples)?;
    let mu = mean(samples);
    let centered: Vec<f64> = samples.iter().map(|x| x - mu).collect();
    let (alpha0, beta0) = moment_estimate(&centered)?;

    let problem = ShapeProblem {
        logs: centered
            .iter()
            .filter(|x| **x != 0.0)
            .map(|x| x.abs().ln())
            .collect(),
        n: centered.len() as f64,
    };
    let mut flags = FitFlags::default();
    let (lo_b, hi_b) = GG_BETA_RANGE;

    let at_lo = problem.eval(lo_b);
    if at_lo.g <= 0.0 {
        flags.clamped = true;
        return Ok((GgParams::new(problem.alpha(lo_b, at_lo.s0), lo_b, mu)?, flags));
    }
    let at_hi = problem.eval(hi_b);
    if at_hi.g >= 0.0 {
        flags.clamped = true;
        return Ok((GgParams::new(problem.alpha(hi_b, at_hi.s0), hi_b, mu)?, flags));
    }

    // g > 0 below the root and < 0 above it.
    let (mut lo, mut hi) = (lo_b, hi_b);
    let mut beta = beta0.clamp(lo_b, hi_b);
    for _ in 0..MAX_NEWTON_ITERS {
        let e = problem.eval(beta);
        if e.g > 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let newton = beta - e.g / e.dg;
        let next = if e.dg < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - beta).abs() <= 1e-12 * beta || hi - lo <= 1e-12 * beta {
            let e = problem.eval(next);
            return Ok((GgParams::new(problem.alpha(next, e.s0), next, mu)?, flags));
        }
        beta = next;
    }

    log::debug!("GG shape iteration did not converge; using moment estimate");
    flags.fallback = true;
    flags.clamped = beta0 <= lo_b || beta0 >= hi_b;
    Ok((GgParams::new(alpha0, beta0, mu)?, flags))
}
