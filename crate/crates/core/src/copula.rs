//! Gaussian copula: probability integral transform of subband coefficients
//! to Gaussian scores and correlation estimation per dependency group.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::marginals::MarginalModel;
use crate::signatures::SubbandId;

/// Marginal CDF values are clipped to this range before the quantile map.
pub const CDF_CLIP: (f64, f64) = (1e-7, 1.0 - 1e-7);

/// Weight of the identity in the shrunk correlation estimate.
pub const SHRINKAGE: f64 = 1e-3;

/// Fewest rows accepted by [`fit_sigma`].
pub const MIN_SIGMA_ROWS: usize = 256;

/// Inverse standard normal CDF on the open unit interval.
pub fn gaussian_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("quantile argument {u} outside (0, 1)")));
    }
    Ok(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * u))
}

/// Gaussian score of `x` under `model`, with the CDF clipped to [`CDF_CLIP`].
pub fn gaussian_score(x: f64, model: &MarginalModel) -> f64 {
    let u = model.cdf(x).clamp(CDF_CLIP.0, CDF_CLIP.1);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// One column of Gaussian scores per group member, all of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianizedMatrix {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl GaussianizedMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::shape("gaussianized columns differ in length"));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite Gaussian score".into()));
        }
        Ok(GaussianizedMatrix { rows, columns })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// Maps each subband through its own fitted CDF and the Gaussian quantile.
pub fn gaussianize(subbands: &[&[f64]], models: &[MarginalModel]) -> Result<GaussianizedMatrix> {
    if subbands.len() != models.len() {
        return Err(Error::shape(format!(
            "{} subbands but {} marginal models",
            subbands.len(),
            models.len()
        )));
    }
    let columns = subbands
        .iter()
        .zip(models)
        .map(|(xs, m)| xs.iter().map(|&x| gaussian_score(x, m)).collect())
        .collect();
    GaussianizedMatrix::from_columns(columns)
}

/// Sample correlation of the columns, shrunk toward the identity by [`SHRINKAGE`].
pub fn fit_sigma(y: &GaussianizedMatrix) -> Result<DMatrix<f64>> {
    let cols: Vec<&[f64]> = y.columns().iter().map(Vec::as_slice).collect();
    shrunk_correlation(&cols, false)
}

/// [`fit_sigma`] over borrowed columns. With `lenient`, a zero-variance column
/// is treated as uncorrelated with every other column instead of failing.
pub(crate) fn shrunk_correlation(cols: &[&[f64]], lenient: bool) -> Result<DMatrix<f64>> {
    let m = cols.len();
    let n = cols.first().map_or(0, |c| c.len());
    if m < 2 {
        return Err(Error::shape("correlation needs at least two columns"));
    }
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::shape("correlation columns differ in length"));
    }
    if n < MIN_SIGMA_ROWS {
        return Err(Error::degenerate(format!(
            "correlation needs at least {MIN_SIGMA_ROWS} rows, got {n}"
        )));
    }
    let mut data = DMatrix::<f64>::zeros(n, m);
    for (j, col) in cols.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        for (dst, &v) in data.column_mut(j).iter_mut().zip(col.iter()) {
            *dst = v - mean;
        }
    }
    let cov = data.tr_mul(&data);
    let mut scale = vec![0.0; m];
    for (j, s) in scale.iter_mut().enumerate() {
        let v = cov[(j, j)];
        if v > 0.0 {
            *s = 1.0 / v.sqrt();
        } else if !lenient {
            return Err(Error::degenerate(format!("column {j} has zero variance")));
        }
    }

    let mut sigma = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        for j in 0..i {
            let r = ((1.0 - SHRINKAGE) * cov[(i, j)] * scale[i] * scale[j]).clamp(-1.0, 1.0);
            sigma[(i, j)] = r;
            sigma[(j, i)] = r;
        }
    }
    if Cholesky::new(sigma.clone()).is_none() {
        return Err(Error::Numeric("shrunk correlation matrix is not positive definite".into()));
    }
    Ok(sigma)
}

fn cholesky(sigma: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::Numeric("correlation matrix is not positive definite".into()))
}

/// Log Gaussian copula density `-log|S|/2 - y'(S^-1 - I)y/2` at one row of scores.
pub fn copula_log_density(y_row: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    if !sigma.is_square() || y_row.len() != sigma.nrows() {
        return Err(Error::shape(format!(
            "score row of length {} against a {}x{} matrix",
            y_row.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let chol = cholesky(sigma)?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let y = DVector::from_column_slice(y_row);
    let mut z = y.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut z);
    Ok(-0.5 * log_det - 0.5 * (z.norm_squared() - y.norm_squared()))
}

/// Log joint density of one coefficient row: copula term plus marginal log densities.
pub fn joint_log_density(x_row: &[f64], models: &[MarginalModel], sigma: &DMatrix<f64>) -> Result<f64> {
    if x_row.len() != models.len() {
        return Err(Error::shape(format!(
            "{} coefficients but {} marginal models",
            x_row.len(),
            models.len()
        )));
    }
    let y: Vec<f64> = x_row.iter().zip(models).map(|(&x, m)| gaussian_score(x, m)).collect();
    let marginal: f64 = x_row.iter().zip(models).map(|(&x, m)| m.ln_pdf(x)).sum();
    Ok(copula_log_density(&y, sigma)? + marginal)
}

/// Correlation matrix over one ordered group of subbands. Intra-scale groups
/// pair a subband with its own shifted copy; `neighbor` holds the (dy, dx)
/// offset of that copy.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaGroup {
    pub members: Vec<SubbandId>,
    pub neighbor: Option<(i8, i8)>,
    pub sigma: DMatrix<f64>,
}

impl CopulaGroup {
    pub fn new(members: Vec<SubbandId>, neighbor: Option<(i8, i8)>, sigma: DMatrix<f64>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::shape("copula group needs at least two members"));
        }
        if sigma.nrows() != members.len() || sigma.ncols() != members.len() {
            return Err(Error::shape(format!(
                "{} members but a {}x{} correlation matrix",
                members.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        Ok(CopulaGroup { members, neighbor, sigma })
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }
}
