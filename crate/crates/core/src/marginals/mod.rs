//! Marginal models of subband coefficients: generalized Gaussian (GG) and
//! t location-scale (TLS) densities, distribution functions and ML fitting.

mod gg;
mod tls;

use std::fmt;
use std::str::FromStr;

pub use gg::{fit_gg, gg_cdf, gg_ln_pdf, gg_pdf, GgParams, GG_BETA_RANGE};
pub use tls::{fit_tls, tls_cdf, tls_ln_pdf, tls_pdf, TlsParams, TLS_NU_RANGE};

use crate::error::{Error, Result};

/// Fewest samples accepted by the estimators.
pub const MIN_FIT_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Gg,
    Tls,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gg => "gg",
            Family::Tls => "tls",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gg" => Ok(Family::Gg),
            "tls" => Ok(Family::Tls),
            other => Err(Error::config(format!("unknown marginal family `{other}`"))),
        }
    }
}

/// Estimator outcome flags carried alongside fitted parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FitFlags {
    /// The shape parameter hit its clamp range.
    pub clamped: bool,
    /// The iterative estimator did not converge; a moment estimate was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalModel {
    Gg(GgParams),
    Tls(TlsParams),
}

impl MarginalModel {
    pub fn family(&self) -> Family {
        match self {
            MarginalModel::Gg(_) => Family::Gg,
            MarginalModel::Tls(_) => Family::Tls,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            MarginalModel::Gg(p) => gg_pdf(x, p),
            MarginalModel::Tls(p) => tls_pdf(x, p),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            MarginalModel::Gg(p) => gg_ln_pdf(x, p),
            MarginalModel::Tls(p) => tls_ln_pdf(x, p),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalModel::Gg(p) => gg_cdf(x, p),
            MarginalModel::Tls(p) => tls_cdf(x, p),
        }
    }

    /// Location parameter (also the median for both families).
    pub fn location(&self) -> f64 {
        match self {
            MarginalModel::Gg(p) => p.mu,
            MarginalModel::Tls(p) => p.mu,
        }
    }

    /// Parameters in storage order: GG (alpha, beta, mu), TLS (mu, sigma, nu).
    pub fn to_array(&self) -> [f64; 3] {
        match self {
            MarginalModel::Gg(p) => [p.alpha, p.beta, p.mu],
            MarginalModel::Tls(p) => [p.mu, p.sigma, p.nu],
        }
    }

    pub fn from_array(family: Family, v: [f64; 3]) -> Result<Self> {
        match family {
            Family::Gg => GgParams::new(v[0], v[1], v[2]).map(MarginalModel::Gg),
            Family::Tls => TlsParams::new(v[0], v[1], v[2]).map(MarginalModel::Tls),
        }
    }
}

/// Fits `family` to `samples`. GG fits center the data on the sample mean.
pub fn fit_marginal(samples: &[f64], family: Family) -> Result<(MarginalModel, FitFlags)> {
    match family {
        Family::Gg => fit_gg(samples).map(|(p, f)| (MarginalModel::Gg(p), f)),
        Family::Tls => fit_tls(samples).map(|(p, f)| (MarginalModel::Tls(p), f)),
    }
}

pub(crate) fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Non-excess sample kurtosis `m4 / m2^2`.
pub fn kurtosis(samples: &[f64]) -> Result<f64> {
    if samples.len() < 4 {
        return Err(Error::degenerate(format!(
            "kurtosis needs at least 4 samples, got {}",
            samples.len()
        )));
    }
    let m = mean(samples);
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in samples {
        let d2 = (x - m) * (x - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    let n = samples.len() as f64;
    let (m2, m4) = (m2 / n, m4 / n);
    if !(m2 > 0.0) {
        return Err(Error::degenerate("zero variance"));
    }
    Ok(m4 / (m2 * m2))
}

pub(crate) fn check_fit_input(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::degenerate(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite sample".into()));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(Error::degenerate("constant sample"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn kurtosis_of_gaussian_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!((kurtosis(&xs).unwrap() - 3.0).abs() < 0.1);
    }

    #[test]
    fn kurtosis_of_two_point_distribution() {
        let xs: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        assert!((kurtosis(&xs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kurtosis_rejects_degenerate() {
        assert!(kurtosis(&[1.0, 1.0, 1.0, 1.0]).is_err());
        assert!(kurtosis(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn family_parse_round_trip() {
        for f in [Family::Gg, Family::Tls] {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("weibull".parse::<Family>().is_err());
    }

    #[test]
    fn model_array_round_trip() {
        let m = MarginalModel::Tls(TlsParams::new(0.1, 2.0, 4.0).unwrap());
        assert_eq!(MarginalModel::from_array(Family::Tls, m.to_array()).unwrap(), m);
        let m = MarginalModel::Gg(GgParams::new(1.5, 0.7, 0.0).unwrap());
        assert_eq!(MarginalModel::from_array(Family::Gg, m.to_array()).unwrap(), m);
    }
}
