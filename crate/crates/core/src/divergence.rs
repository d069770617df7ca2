//! Kullback-Leibler divergences between marginal models, Gaussian copulas and
//! whole signatures, the symmetric Jeffery divergence, and numeric oracles.
//! All values are in nats.

use std::f64::consts::SQRT_2;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::marginals::{GgParams, MarginalModel, TlsParams};
use crate::quad;
use crate::signatures::Signature;

/// Absolute tolerance of the quadrature oracles.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Closed-form KLD between two zero-location generalized Gaussians.
pub fn kld_gg(db: &GgParams, q: &GgParams) -> Result<f64> {
    if db.mu != 0.0 || q.mu != 0.0 {
        return Err(Error::Domain(format!(
            "closed-form GG divergence needs zero locations, got {} and {}",
            db.mu, q.mu
        )));
    }
    Ok(kld_gg_unchecked(db, q))
}

fn kld_gg_unchecked(db: &GgParams, q: &GgParams) -> f64 {
    let log_ratio = (db.beta * q.alpha).ln() + ln_gamma(1.0 / q.beta)
        - (q.beta * db.alpha).ln()
        - ln_gamma(1.0 / db.beta);
    let cross = (q.beta * (db.alpha / q.alpha).ln() + ln_gamma((q.beta + 1.0) / db.beta)
        - ln_gamma(1.0 / db.beta))
    .exp();
    log_ratio + cross - 1.0 / db.beta
}

/// TLS divergence in the closed form used by the retrieval engine: the log
/// ratio of normalizing constants plus the two digamma corrections. It does
/// not depend on the locations and is antisymmetric in its arguments, so it
/// is not the exact KLD in general; see [`kld_tls_numeric`].
pub fn kld_tls_closed(db: &TlsParams, q: &TlsParams) -> f64 {
    // Scale enters only through the normalizing constants; the remaining
    // terms are grouped so equal degrees of freedom cancel exactly.
    let shape_part = |nu: f64| ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln();
    let correction = |nu: f64| 0.5 * (nu + 1.0) * (digamma(0.5 * (nu + 1.0)) - digamma(0.5 * nu));
    (q.sigma / db.sigma).ln() + ((shape_part(db.nu) - shape_part(q.nu)) + (correction(q.nu) - correction(db.nu)))
}

fn spread(m: &MarginalModel) -> f64 {
    match m {
        MarginalModel::Gg(p) => p.alpha,
        MarginalModel::Tls(p) => p.sigma,
    }
}

/// KLD between any two marginal models by quadrature of `f ln(f / g)`.
pub fn kld_marginal_numeric(db: &MarginalModel, q: &MarginalModel) -> Result<f64> {
    let integrand = |x: f64| {
        let lf = db.ln_pdf(x);
        if lf < -740.0 {
            return 0.0;
        }
        lf.exp() * (lf - q.ln_pdf(x))
    };
    let scale = spread(db).min(spread(q));
    quad::integrate_line(&integrand, &[db.location(), q.location()], scale, QUADRATURE_TOL)
}

/// Exact TLS divergence by adaptive quadrature.
pub fn kld_tls_numeric(db: &TlsParams, q: &TlsParams) -> Result<f64> {
    kld_marginal_numeric(&MarginalModel::Tls(*db), &MarginalModel::Tls(*q))
}

/// How TLS marginal terms enter signature divergences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum TlsBackend {
    /// [`kld_tls_closed`].
    #[default]
    Closed,
    /// [`kld_tls_numeric`].
    Numeric,
}

/// Divergence between two marginal models of the same family.
pub fn kld_marginal(db: &MarginalModel, q: &MarginalModel, backend: TlsBackend) -> Result<f64> {
    match (db, q) {
        (MarginalModel::Gg(a), MarginalModel::Gg(b)) => kld_gg(a, b),
        (MarginalModel::Tls(a), MarginalModel::Tls(b)) => match backend {
            TlsBackend::Closed => Ok(kld_tls_closed(a, b)),
            TlsBackend::Numeric => kld_tls_numeric(a, b),
        },
        _ => Err(Error::Incompatible(format!(
            "{} marginal against {} marginal",
            db.family(),
            q.family()
        ))),
    }
}

/// Cholesky-derived inverse and log-determinant of one SPD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSigma {
    sigma: DMatrix<f64>,
    inverse: DMatrix<f64>,
    log_det: f64,
}

impl PreparedSigma {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::shape("correlation matrix is not square"));
        }
        let chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(PreparedSigma {
            sigma: sigma.clone(),
            inverse: chol.inverse(),
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }
}

/// `(tr(S_q^-1 S_db) + log|S_q| - log|S_db| - M) / 2` from prepared matrices.
pub fn kld_gaussian_prepared(db: &PreparedSigma, q: &PreparedSigma) -> Result<f64> {
    if db.dim() != q.dim() {
        return Err(Error::shape(format!(
            "correlation matrices of size {} and {}",
            db.dim(),
            q.dim()
        )));
    }
    // Both matrices are symmetric, so the trace of the product is the
    // elementwise inner product.
    let trace: f64 = q.inverse.iter().zip(db.sigma.iter()).map(|(a, b)| a * b).sum();
    Ok(0.5 * (trace + q.log_det - db.log_det - db.dim() as f64))
}

/// KLD between the zero-mean Gaussians (equivalently, Gaussian copulas) with
/// correlation matrices `sigma_db` and `sigma_q`.
pub fn kld_gaussian_copula(sigma_db: &DMatrix<f64>, sigma_q: &DMatrix<f64>) -> Result<f64> {
    if sigma_db.shape() != sigma_q.shape() {
        return Err(Error::shape(format!(
            "correlation matrices of shape {:?} and {:?}",
            sigma_db.shape(),
            sigma_q.shape()
        )));
    }
    kld_gaussian_prepared(&PreparedSigma::new(sigma_db)?, &PreparedSigma::new(sigma_q)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Naive,
    /// Antithetic pairs on the squared coordinates in the eigenbasis of the
    /// whitened query precision: `|w|` from `u` and its partner from `1 - u`.
    Antithetic,
}

/// Largest dimension accepted by the Monte-Carlo oracle.
pub const MC_MAX_DIM: usize = 8;

/// Monte-Carlo estimate of the Gaussian copula KLD, `E_db[log p_db - log p_q]`.
pub fn kld_copula_monte_carlo<R: Rng + ?Sized>(
    sigma_db: &DMatrix<f64>,
    sigma_q: &DMatrix<f64>,
    draws: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if sigma_db.shape() != sigma_q.shape() || !sigma_db.is_square() {
        return Err(Error::shape("correlation matrices differ in shape"));
    }
    let m = sigma_db.nrows();
    if m == 0 || m > MC_MAX_DIM {
        return Err(Error::shape(format!("Monte-Carlo oracle supports 1..={MC_MAX_DIM} dimensions")));
    }
    if draws < 2 {
        return Err(Error::config("Monte-Carlo oracle needs at least two draws"));
    }
    let chol_db = Cholesky::new(sigma_db.clone())
        .ok_or_else(|| Error::Numeric("db matrix is not positive definite".into()))?;
    let chol_q = Cholesky::new(sigma_q.clone())
        .ok_or_else(|| Error::Numeric("query matrix is not positive definite".into()))?;
    let l_db = chol_db.l();
    let ln_det = |c: &Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let (ld_db, ld_q) = (ln_det(&chol_db), ln_det(&chol_q));
    let log_ratio = |x: &DVector<f64>| {
        let mut a = x.clone();
        chol_db.l_dirty().solve_lower_triangular_mut(&mut a);
        let mut b = x.clone();
        chol_q.l_dirty().solve_lower_triangular_mut(&mut b);
        0.5 * (ld_q - ld_db) - 0.5 * a.norm_squared() + 0.5 * b.norm_squared()
    };

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let units = match sampling {
        Sampling::Naive => {
            for _ in 0..draws {
                let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
                let v = log_ratio(&(&l_db * z));
                sum += v;
                sum_sq += v * v;
            }
            draws
        }
        Sampling::Antithetic => {
            // x = L_db V w with V the eigenvectors of L_db' S_q^-1 L_db; the
            // log ratio is then a weighted sum of the squares w_k^2. For each
            // k, |w_k| = Q((1 + u) / 2) and its partner uses 1 - u.
            let prec_q = chol_q.inverse();
            let b = l_db.transpose() * prec_q * &l_db;
            let basis = &l_db * SymmetricEigen::new(b).eigenvectors;
            let pairs = draws / 2;
            let mut w = DVector::zeros(m);
            let mut w_anti = DVector::zeros(m);
            for _ in 0..pairs {
                for k in 0..m {
                    // u on the open unit interval, so u and 1 - u are both exact.
                    let u = ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
                    let sign = if rng.random::<bool>() { SQRT_2 } else { -SQRT_2 };
                    w[k] = sign * erfc_inv(1.0 - u);
                    w_anti[k] = sign * erfc_inv(u);
                }
                let v = 0.5 * (log_ratio(&(&basis * &w)) + log_ratio(&(&basis * &w_anti)));
                sum += v;
                sum_sq += v * v;
            }
            pairs
        }
    };
    let n = units as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(MonteCarloEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        draws: match sampling {
            Sampling::Naive => units,
            Sampling::Antithetic => 2 * units,
        },
    })
}

/// Antithetic Monte-Carlo oracle for [`kld_gaussian_copula`].
pub fn kld_copula_numeric<R: Rng + ?Sized>(
    sigma_db: &DMatrix<f64>,
    sigma_q: &DMatrix<f64>,
    draws: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    kld_copula_monte_carlo(sigma_db, sigma_q, draws, Sampling::Antithetic, rng)
}

/// Monte-Carlo KLD between two marginal models (sampling from `db` by inversion).
pub fn kld_marginal_monte_carlo<R: Rng + ?Sized>(
    db: &MarginalModel,
    q: &MarginalModel,
    draws: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if draws < 2 {
        return Err(Error::config("Monte-Carlo oracle needs at least two draws"));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let x = sample_marginal(db, rng);
        let v = db.ln_pdf(x) - q.ln_pdf(x);
        sum += v;
        sum_sq += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(MonteCarloEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        draws,
    })
}

fn sample_marginal<R: Rng + ?Sized>(m: &MarginalModel, rng: &mut R) -> f64 {
    match m {
        MarginalModel::Gg(p) => {
            let g = rand_distr::Gamma::new(1.0 / p.beta, 1.0).expect("valid shape");
            let r = p.alpha * g.sample(rng).powf(1.0 / p.beta);
            if rng.random::<bool>() {
                p.mu + r
            } else {
                p.mu - r
            }
        }
        MarginalModel::Tls(p) => {
            let t = rand_distr::StudentT::new(p.nu).expect("valid degrees of freedom");
            p.mu + p.sigma * t.sample(rng)
        }
    }
}

/// Signature divergence split into its copula and marginal parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceValue {
    pub value: f64,
    pub copula: f64,
    pub marginal: f64,
}

impl DivergenceValue {
    fn new(copula: f64, marginal: f64) -> Self {
        DivergenceValue {
            value: copula + marginal,
            copula,
            marginal,
        }
    }
}

/// Signature with every group matrix factored once for repeated comparisons.
#[derive(Debug, Clone)]
pub struct PreparedSignature {
    signature: Signature,
    groups: Vec<PreparedSigma>,
}

impl PreparedSignature {
    pub fn new(signature: Signature) -> Result<Self> {
        let groups = signature
            .groups
            .iter()
            .map(|g| PreparedSigma::new(&g.sigma))
            .collect::<Result<_>>()?;
        Ok(PreparedSignature { signature, groups })
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn into_signature(self) -> Signature {
        self.signature
    }

    /// `KLD(self || q)`.
    pub fn kld(&self, q: &PreparedSignature, backend: TlsBackend) -> Result<DivergenceValue> {
        self.signature.check_compatible(&q.signature)?;
        let mut copula = 0.0;
        for (a, b) in self.groups.iter().zip(&q.groups) {
            copula += kld_gaussian_prepared(a, b)?;
        }
        let mut marginal = 0.0;
        for (a, b) in self.signature.marginals.iter().zip(&q.signature.marginals) {
            marginal += kld_marginal(a, b, backend)?;
        }
        Ok(DivergenceValue::new(copula, marginal))
    }

    /// Jeffery divergence `KLD(self || other) + KLD(other || self)`.
    pub fn jeffery(&self, other: &PreparedSignature, backend: TlsBackend) -> Result<f64> {
        Ok(self.kld(other, backend)?.value + other.kld(self, backend)?.value)
    }
}

/// `KLD(db || q)` with the default TLS backend.
pub fn kld_signature(db: &Signature, q: &Signature) -> Result<DivergenceValue> {
    db.check_compatible(q)?;
    PreparedSignature::new(db.clone())?.kld(&PreparedSignature::new(q.clone())?, TlsBackend::Closed)
}

pub fn jeffery(db: &Signature, q: &Signature) -> Result<f64> {
    db.check_compatible(q)?;
    let (a, b) = (PreparedSignature::new(db.clone())?, PreparedSignature::new(q.clone())?);
    a.jeffery(&b, TlsBackend::Closed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::CopulaGroup;
    use crate::marginals::{Family, FitFlags};
    use crate::nsst::NsstConfig;
    use crate::signatures::{scheme_groups, Scheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gg(alpha: f64, beta: f64) -> GgParams {
        GgParams::new(alpha, beta, 0.0).unwrap()
    }

    fn tls(mu: f64, sigma: f64, nu: f64) -> TlsParams {
        TlsParams::new(mu, sigma, nu).unwrap()
    }

    /// Random correlation matrix from a Gram matrix with a ridge.
    fn random_correlation(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::<f64>::from_fn(m, m + 2, |_, _| StandardNormal.sample(rng));
        let g = &a * a.transpose() + DMatrix::identity(m, m) * 0.05;
        DMatrix::from_fn(m, m, |i, j| g[(i, j)] / (g[(i, i)] * g[(j, j)]).sqrt())
    }

    fn rho2(r: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0])
    }

    #[test]
    fn gg_identity_and_laplace_case() {
        for &(a, b) in &[(1.0, 1.0), (0.3, 0.5), (4.0, 3.2)] {
            assert!(kld_gg(&gg(a, b), &gg(a, b)).unwrap().abs() < 1e-12);
        }
        let v = kld_gg(&gg(1.0, 1.0), &gg(2.0, 1.0)).unwrap();
        assert!((v - (2f64.ln() + 0.5 - 1.0)).abs() < 1e-14);
        assert!((v - 0.193_147).abs() < 1e-6);
        let numeric = kld_marginal_numeric(&MarginalModel::Gg(gg(1.0, 1.0)), &MarginalModel::Gg(gg(2.0, 1.0))).unwrap();
        assert!((numeric - v).abs() < 1e-9);
    }

    #[test]
    fn gg_matches_quadrature() {
        let v = kld_gg(&gg(1.0, 2.0), &gg(2.0, 2.0)).unwrap();
        let n = kld_marginal_numeric(&MarginalModel::Gg(gg(1.0, 2.0)), &MarginalModel::Gg(gg(2.0, 2.0))).unwrap();
        assert!((v - n).abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = gg(rng.random_range(0.2..5.0), rng.random_range(0.3..4.0));
            let b = gg(rng.random_range(0.2..5.0), rng.random_range(0.3..4.0));
            let closed = kld_gg(&a, &b).unwrap();
            let numeric = kld_marginal_numeric(&MarginalModel::Gg(a), &MarginalModel::Gg(b)).unwrap();
            assert!(closed >= -1e-10);
            assert!((closed - numeric).abs() <= 1e-5 * closed.abs().max(1e-6), "{a:?} {b:?}: {closed} vs {numeric}");
        }
    }

    #[test]
    fn gg_rejects_nonzero_location() {
        let shifted = GgParams::new(1.0, 1.0, 0.1).unwrap();
        assert!(matches!(kld_gg(&shifted, &gg(1.0, 1.0)), Err(Error::Domain(_))));
        assert!(kld_gg(&gg(1.0, 1.0), &shifted).is_err());
    }

    #[test]
    fn tls_closed_special_cases() {
        let p = tls(0.3, 1.7, 4.5);
        assert!(kld_tls_closed(&p, &p).abs() < 1e-12);
        assert_eq!(kld_tls_closed(&tls(0.0, 1.0, 3.0), &tls(0.0, 2.0, 3.0)), 2f64.ln());
        let (a, b) = (tls(0.0, 1.0, 3.0), tls(0.0, 1.0, 10.0));
        let closed = kld_tls_closed(&a, &b);
        let numeric = kld_tls_numeric(&a, &b).unwrap();
        eprintln!("tls (0,1,3) vs (0,1,10): closed {closed:.9} numeric {numeric:.9}");
        assert!(numeric > 0.0);
    }

    #[test]
    fn tls_numeric_properties() {
        let p = tls(0.5, 2.0, 3.0);
        assert!(kld_tls_numeric(&p, &p).unwrap().abs() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = tls(rng.random_range(-2.0..2.0), rng.random_range(0.2..4.0), rng.random_range(0.5..100.0));
            let b = tls(rng.random_range(-2.0..2.0), rng.random_range(0.2..4.0), rng.random_range(0.5..100.0));
            assert!(kld_tls_numeric(&a, &b).unwrap() >= -1e-10, "{a:?} {b:?}");
        }
    }

    #[test]
    fn tls_numeric_agrees_with_monte_carlo() {
        let (a, b) = (tls(0.0, 1.0, 1.0), tls(0.0, 1.0, 2.0));
        let numeric = kld_tls_numeric(&a, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mc = kld_marginal_monte_carlo(&MarginalModel::Tls(a), &MarginalModel::Tls(b), 10_000_000, &mut rng).unwrap();
        assert!((numeric - mc.value).abs() < 3.0 * mc.std_error, "{numeric} vs {mc:?}");
    }

    #[test]
    fn gaussian_copula_values() {
        let s = rho2(0.5);
        assert!(kld_gaussian_copula(&s, &s).unwrap().abs() < 1e-10);
        let v = kld_gaussian_copula(&DMatrix::identity(2, 2), &s).unwrap();
        assert!((v - 0.5 * (8.0 / 3.0 + 0.75f64.ln() - 2.0)).abs() < 1e-14);
        assert!((v - 0.189_492_3).abs() < 1e-7);
        assert!(matches!(
            kld_gaussian_copula(&DMatrix::identity(3, 3), &s),
            Err(Error::Shape(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 0..100 {
            let m = 1 + k % 16;
            let (a, b) = (random_correlation(m, &mut rng), random_correlation(m, &mut rng));
            assert!(kld_gaussian_copula(&a, &b).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn monte_carlo_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eye = DMatrix::identity(3, 3);
        let same = kld_copula_numeric(&eye, &eye, 100_000, &mut rng).unwrap();
        assert!(same.value.abs() <= 3.0 * same.std_error + 1e-12);
        let mc = kld_copula_numeric(&DMatrix::identity(2, 2), &rho2(0.5), 1_000_000, &mut rng).unwrap();
        assert_eq!(mc.draws, 1_000_000);
        let exact = 0.5 * (8.0 / 3.0 + 0.75f64.ln() - 2.0);
        assert!((mc.value - exact).abs() < 3.0 * mc.std_error, "{mc:?}");
        assert!(kld_copula_numeric(&DMatrix::identity(9, 9), &DMatrix::identity(9, 9), 1000, &mut rng).is_err());
    }

    #[test]
    fn antithetic_sampling_reduces_variance() {
        let (db, q) = (DMatrix::identity(2, 2), rho2(0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ratio_num = 0.0;
        let mut ratio_den = 0.0;
        for _ in 0..20 {
            let a = kld_copula_monte_carlo(&db, &q, 20_000, Sampling::Antithetic, &mut rng).unwrap();
            let n = kld_copula_monte_carlo(&db, &q, 20_000, Sampling::Naive, &mut rng).unwrap();
            ratio_num += a.std_error.powi(2);
            ratio_den += n.std_error.powi(2);
        }
        let ratio = ratio_num / ratio_den;
        assert!(ratio < 0.6, "{ratio}");
    }

    fn toy_signature(scheme: Scheme, marginals: Vec<MarginalModel>, sigmas: Vec<DMatrix<f64>>) -> Signature {
        let config = NsstConfig::new(vec![2], 2).unwrap();
        let groups = scheme_groups(scheme, &config)
            .unwrap()
            .into_iter()
            .zip(sigmas)
            .map(|(members, s)| CopulaGroup::new(members, None, s).unwrap())
            .collect();
        let family = marginals[0].family();
        let sig = Signature {
            patch_id: "toy".into(),
            scheme,
            family,
            config,
            stride: 1,
            fit_flags: vec![FitFlags::default(); marginals.len()],
            marginals,
            groups,
        };
        sig.validate().unwrap();
        sig
    }

    fn random_gg_marginals(rng: &mut ChaCha8Rng) -> Vec<MarginalModel> {
        (0..6)
            .map(|_| MarginalModel::Gg(gg(rng.random_range(0.2..3.0), rng.random_range(0.5..2.5))))
            .collect()
    }

    #[test]
    fn signature_divergence_assembles_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (ma, mb) = (random_gg_marginals(&mut rng), random_gg_marginals(&mut rng));
        let (sa, sb) = (random_correlation(6, &mut rng), random_correlation(6, &mut rng));
        let a = toy_signature(Scheme::Scheme1, ma.clone(), vec![sa.clone()]);
        let b = toy_signature(Scheme::Scheme1, mb.clone(), vec![sb.clone()]);
        let d = kld_signature(&a, &b).unwrap();
        let mut by_hand = kld_gaussian_copula(&sa, &sb).unwrap();
        for (x, y) in ma.iter().zip(&mb) {
            let (MarginalModel::Gg(x), MarginalModel::Gg(y)) = (x, y) else { unreachable!() };
            by_hand += kld_gg(x, y).unwrap();
        }
        assert!((d.value - by_hand).abs() < 1e-12);
        assert_eq!(d.value, d.copula + d.marginal);
        assert!(kld_signature(&a, &a).unwrap().value.abs() < 1e-9);

        let jd = jeffery(&a, &b).unwrap();
        assert_eq!(jd, jeffery(&b, &a).unwrap());
        assert!(jd >= d.value.max(kld_signature(&b, &a).unwrap().value));
        assert!(jeffery(&a, &a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn independent_scheme_is_marginal_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (ma, mb) = (random_gg_marginals(&mut rng), random_gg_marginals(&mut rng));
        let a = toy_signature(Scheme::Independent, ma.clone(), vec![]);
        let b = toy_signature(Scheme::Independent, mb.clone(), vec![]);
        let d = kld_signature(&a, &b).unwrap();
        let sum: f64 = ma
            .iter()
            .zip(&mb)
            .map(|(x, y)| kld_marginal(x, y, TlsBackend::Closed).unwrap())
            .sum();
        assert_eq!(d.copula, 0.0);
        assert_eq!(d.value, sum);
    }

    #[test]
    fn block_diagonal_scheme1_equals_per_block_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let config = NsstConfig::new(vec![2, 4], 2).unwrap();
        let groups = scheme_groups(Scheme::Scheme2, &config).unwrap();
        let all = scheme_groups(Scheme::Scheme1, &config).unwrap().remove(0);
        let pos = |id| all.iter().position(|x| *x == id).unwrap();
        let blocks = |rng: &mut ChaCha8Rng| -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
            let bs: Vec<_> = groups.iter().map(|g| random_correlation(g.len(), rng)).collect();
            let mut full = DMatrix::identity(all.len(), all.len());
            for (g, b) in groups.iter().zip(&bs) {
                for (i, &x) in g.iter().enumerate() {
                    for (j, &y) in g.iter().enumerate() {
                        full[(pos(x), pos(y))] = b[(i, j)];
                    }
                }
            }
            (bs, full)
        };
        let (ba, fa) = blocks(&mut rng);
        let (bb, fb) = blocks(&mut rng);
        let per_block: f64 = ba.iter().zip(&bb).map(|(x, y)| kld_gaussian_copula(x, y).unwrap()).sum();
        assert!((kld_gaussian_copula(&fa, &fb).unwrap() - per_block).abs() < 1e-9);
    }

    #[test]
    fn permuted_ordering_leaves_divergence_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (sa, sb) = (random_correlation(6, &mut rng), random_correlation(6, &mut rng));
        let perm = [3, 0, 5, 1, 4, 2];
        let p = |s: &DMatrix<f64>| DMatrix::from_fn(6, 6, |i, j| s[(perm[i], perm[j])]);
        let a = kld_gaussian_copula(&sa, &sb).unwrap();
        let b = kld_gaussian_copula(&p(&sa), &p(&sb)).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn incompatible_signatures_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = toy_signature(Scheme::Scheme1, random_gg_marginals(&mut rng), vec![random_correlation(6, &mut rng)]);
        let b = toy_signature(Scheme::Independent, random_gg_marginals(&mut rng), vec![]);
        assert!(matches!(kld_signature(&a, &b), Err(Error::Incompatible(_))));
        let t: Vec<_> = (0..6).map(|_| MarginalModel::Tls(tls(0.0, 1.0, 5.0))).collect();
        let c = toy_signature(Scheme::Independent, t, vec![]);
        assert!(matches!(jeffery(&b, &c), Err(Error::Incompatible(_))));
        assert_eq!(c.family, Family::Tls);
    }
}
