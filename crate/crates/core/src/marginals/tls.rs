use std::f64::consts::PI;

use statrs::function::beta::beta_reg;
use statrs::function::gamma::{digamma, ln_gamma};

use super::{check_fit_input, kurtosis, FitFlags};
use crate::error::{Error, Result};

/// Degrees-of-freedom clamp applied by [`fit_tls`].
pub const TLS_NU_RANGE: (f64, f64) = (0.5, 100.0);

const MAX_EM_ITERS: usize = 200;
const EM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsParams {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
}

impl TlsParams {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) || !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Domain(format!(
                "invalid TLS parameters mu={mu} sigma={sigma} nu={nu}"
            )));
        }
        Ok(TlsParams { mu, sigma, nu })
    }

    /// Log of the normalizing constant `Gamma((nu+1)/2) / (sigma sqrt(nu pi) Gamma(nu/2))`.
    pub fn ln_norm(&self) -> f64 {
        ln_gamma(0.5 * (self.nu + 1.0)) - ln_gamma(0.5 * self.nu) - self.sigma.ln() - 0.5 * (self.nu * PI).ln()
    }
}

pub fn tls_ln_pdf(x: f64, p: &TlsParams) -> f64 {
    let z = (x - p.mu) / p.sigma;
    p.ln_norm() - 0.5 * (p.nu + 1.0) * (z * z / p.nu).ln_1p()
}

pub fn tls_pdf(x: f64, p: &TlsParams) -> f64 {
    tls_ln_pdf(x, p).exp()
}

/// Student-t CDF of `(x - mu) / sigma` through the regularized incomplete beta.
pub fn tls_cdf(x: f64, p: &TlsParams) -> f64 {
    let z = (x - p.mu) / p.sigma;
    if z == 0.0 {
        return 0.5;
    }
    if z.is_infinite() {
        return if z > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta_reg(0.5 * p.nu, 0.5, p.nu / (p.nu + z * z));
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

fn median(samples: &[f64]) -> f64 {
    quantile(samples, 0.5)
}

fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Mean log-likelihood and its derivative in `nu`, for squared standardized
/// residuals `d2` at fixed location and scale.
fn nu_score(nu: f64, d2: &[f64], ln_sigma: f64) -> (f64, f64) {
    let n = d2.len() as f64;
    let (mut sum_log, mut sum_ratio) = (0.0, 0.0);
    for &d in d2 {
        sum_log += (d / nu).ln_1p();
        sum_ratio += d / (nu + d);
    }
    let (mean_log, mean_ratio) = (sum_log / n, sum_ratio / n);
    let ll = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln() - ln_sigma
        - 0.5 * (nu + 1.0) * mean_log;
    let score = 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) - 0.5 / nu - 0.5 * mean_log
        + 0.5 * (nu + 1.0) * mean_ratio / nu;
    (ll, score)
}

/// Maximizes the likelihood in `nu` over the clamp range by Illinois
/// regula falsi on the score in `ln nu`. Returns (nu, clamped).
fn solve_nu(d2: &[f64], ln_sigma: f64) -> (f64, bool) {
    let (lo_nu, hi_nu) = TLS_NU_RANGE;
    let score = |ln_nu: f64| nu_score(ln_nu.exp(), d2, ln_sigma).1;
    let (mut a, mut b) = (lo_nu.ln(), hi_nu.ln());
    let (mut fa, mut fb) = (score(a), score(b));
    if fa <= 0.0 {
        return (lo_nu, true);
    }
    if fb >= 0.0 {
        return (hi_nu, true);
    }
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = score(c);
        if fc == 0.0 || (b - a).abs() < 1e-10 {
            return (c.exp(), false);
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if (b - a).abs() < 1e-10 {
            break;
        }
    }
    ((0.5 * (a + b)).exp(), false)
}

/// ML fit of the t location-scale model by ECME: the E-step weights update
/// location and scale in closed form, then `nu` maximizes the observed
/// likelihood. Starts from the median, the normal-consistent interquartile
/// scale and a kurtosis-matched `nu`.
pub fn fit_tls(samples: &[f64]) -> Result<(TlsParams, FitFlags)> {
    check_fit_input(samples)?;
    let (lo_nu, hi_nu) = TLS_NU_RANGE;
    let mut mu = median(samples);
    let iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
    let mut sigma = if iqr > 0.0 {
        iqr / 1.348_979_500_392_163_5
    } else {
        let var = samples.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / samples.len() as f64;
        var.sqrt()
    };
    if !(sigma > 0.0) {
        return Err(Error::degenerate("zero spread"));
    }
    let k = kurtosis(samples)?;
    let mut nu = if k > 3.0 { (4.0 + 6.0 / (k - 3.0)).clamp(lo_nu, hi_nu) } else { hi_nu };

    let n = samples.len() as f64;
    let mut d2 = vec![0.0; samples.len()];
    let mut flags = FitFlags::default();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;

    for _ in 0..MAX_EM_ITERS {
        // E-step weights and closed-form location/scale updates.
        let (mut sw, mut swx) = (0.0, 0.0);
        for &x in samples {
            let z = (x - mu) / sigma;
            let w = (nu + 1.0) / (nu + z * z);
            sw += w;
            swx += w * x;
        }
        let new_mu = swx / sw;
        let mut ss = 0.0;
        for &x in samples {
            let z = (x - mu) / sigma;
            let w = (nu + 1.0) / (nu + z * z);
            ss += w * (x - new_mu) * (x - new_mu);
        }
        mu = new_mu;
        sigma = (ss / n).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::degenerate("scale collapsed to zero"));
        }

        for (d, &x) in d2.iter_mut().zip(samples) {
            let z = (x - mu) / sigma;
            *d = z * z;
        }
        let (new_nu, clamped) = solve_nu(&d2, sigma.ln());
        nu = new_nu;
        flags.clamped = clamped;

        let ll = nu_score(nu, &d2, sigma.ln()).0;
        if (ll - prev_ll).abs() < EM_TOLERANCE {
            converged = true;
            break;
        }
        prev_ll = ll;
    }
    if !converged {
        log::debug!("TLS EM stopped at the iteration limit");
    }
    Ok((TlsParams::new(mu, sigma, nu)?, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, StudentT};

    fn tls_samples(p: &TlsParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = StudentT::new(p.nu).unwrap();
        (0..n).map(|_| p.mu + p.sigma * t.sample(&mut rng)).collect()
    }

    #[test]
    fn cauchy_center_and_quartile() {
        let p = TlsParams::new(0.0, 1.0, 1.0).unwrap();
        assert!((tls_pdf(0.0, &p) - 1.0 / PI).abs() < 1e-14);
        assert_eq!(tls_cdf(0.0, &p), 0.5);
        assert!((tls_cdf(1.0, &p) - 0.75).abs() < 1e-12);
        assert!((tls_cdf(-1.0, &p) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn large_nu_approaches_normal() {
        // At nu = 80 the largest gap on |x| <= 3 is 1.69e-3 (near x = 0.7).
        let gap = |nu: f64| {
            let p = TlsParams::new(0.0, 1.0, nu).unwrap();
            (-30..=30)
                .map(|i| {
                    let x = i as f64 / 10.0;
                    (tls_pdf(x, &p) - crate::special::normal_ln_pdf(x).exp()).abs()
                })
                .fold(0.0, f64::max)
        };
        let g80 = gap(80.0);
        assert!((g80 - 1.69e-3).abs() < 2e-5, "{g80}");
        assert!(gap(1000.0) < 1.5e-4);
        assert!(gap(1000.0) < gap(80.0) && gap(80.0) < gap(10.0));
    }

    #[test]
    fn cdf_is_monotone() {
        let p = TlsParams::new(0.3, 1.7, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-50.0..50.0);
            let b: f64 = rng.random_range(-50.0..50.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            assert!(tls_cdf(lo, &p) <= tls_cdf(hi, &p));
        }
    }

    #[test]
    fn cdf_derivative_is_pdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(s, nu) in &[(1.0, 1.0), (0.5, 3.0), (2.0, 30.0)] {
            let p = TlsParams::new(-0.4, s, nu).unwrap();
            for _ in 0..100 {
                let x = p.mu + rng.random_range(-4.0..4.0) * s;
                let h = 1e-6;
                let fd = (tls_cdf(x + h, &p) - tls_cdf(x - h, &p)) / (2.0 * h);
                assert!((fd - tls_pdf(x, &p)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn recovers_tls_parameters() {
        let truth = TlsParams::new(0.0, 2.0, 4.0).unwrap();
        let xs = tls_samples(&truth, 65_536, 21);
        let (fit, flags) = fit_tls(&xs).unwrap();
        assert!(!flags.clamped);
        assert!(fit.mu.abs() < 0.05 * 2.0, "{fit:?}");
        assert!((fit.sigma - 2.0).abs() < 0.1, "{fit:?}");
        assert!((fit.nu - 4.0).abs() < 0.2, "{fit:?}");
    }

    #[test]
    fn normal_data_gives_large_nu() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let xs: Vec<f64> = (0..65_536).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (fit, _) = fit_tls(&xs).unwrap();
        assert!(fit.nu >= 30.0, "{fit:?}");
    }

    #[test]
    fn degenerate_input() {
        assert!(matches!(fit_tls(&[1.0; 512]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn likelihood_does_not_decrease_from_start() {
        let truth = TlsParams::new(1.0, 0.5, 2.0).unwrap();
        let xs = tls_samples(&truth, 4096, 5);
        let (fit, _) = fit_tls(&xs).unwrap();
        let ll = |p: &TlsParams| xs.iter().map(|&x| tls_ln_pdf(x, p)).sum::<f64>();
        assert!(ll(&fit) >= ll(&truth) - 1e-6);
    }
}
