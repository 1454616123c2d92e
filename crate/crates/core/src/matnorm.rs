//! Matrix-variate normal kernels, Wishart samplers and covariance constructors.
//!
//! A `p × q` matrix `Y ~ MN(M, U, V)` is equivalent to
//! `vec(Y) ~ N(vec(M), V ⊗ U)`, where `U` is the `p × p` row covariance and
//! `V` is the `q × q` column covariance. Everything here works on Cholesky
//! factors of `U` and `V`; the `pq × pq` Kronecker product is never formed
//! unless a caller asks for it explicitly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Smallest admissible Cholesky pivot.
pub const MIN_PIVOT: f64 = 1e-12;

/// Relative tolerance of the symmetry check on covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A dense real matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix(DMatrix<f64>);

impl RealMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidParameter("matrix must be non-empty".into()));
        }
        if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry at column-major index {pos}"
            )));
        }
        Ok(RealMatrix(m))
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(r, c, &flat)
    }
}

impl Serialize for RealMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RealMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        RealMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Lower Cholesky factor of a symmetric matrix, rejecting pivots below
/// [`MIN_PIVOT`]. The upper triangle of the input is never read.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("cholesky failed on a {n}x{n} matrix"))
    })?;
    let l = chol.unpack();
    for i in 0..n {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot >= MIN_PIVOT) {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {pivot:e} at index {i} below {MIN_PIVOT:e}"
            )));
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub(crate) fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_unchecked_mut(&mut x);
    x
}

pub(crate) fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_unchecked_mut(&mut x);
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub(crate) fn solve_lower_transpose_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.tr_solve_lower_triangular_unchecked_mut(&mut x);
    x
}

fn log_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Symmetric positive definite matrix together with its lower Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry (relative [`SYMMETRY_TOL`]) and positive definiteness.
    /// The stored matrix is the exact symmetrization `(A + Aᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || n != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square and non-empty, got {}x{}",
                n,
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = m.amax();
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        let matrix = (&m + m.transpose()) * 0.5;
        let lower = cholesky_lower(&matrix)?;
        Ok(SpdMatrix { matrix, lower })
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix {
            matrix: DMatrix::identity(n, n),
            lower: DMatrix::identity(n, n),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(RealMatrix::from_rows(rows)?.into_inner())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular `L` with `L Lᵀ` equal to the matrix.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        log_det_from_lower(&self.lower)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let l_inv = solve_lower(&self.lower, &DMatrix::identity(self.dim(), self.dim()));
        let inv = l_inv.transpose() * l_inv;
        (&inv + inv.transpose()) * 0.5
    }

    /// `a · self` for `a > 0`; the factor is rescaled instead of recomputed.
    pub fn scaled(&self, a: f64) -> SpdMatrix {
        assert!(a > 0.0 && a.is_finite(), "scale factor must be positive");
        SpdMatrix {
            matrix: &self.matrix * a,
            lower: &self.lower * a.sqrt(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SpdMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Parameters `(M, U, V)` of a matrix normal distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixNormalParams {
    pub mean: RealMatrix,
    pub row_cov: SpdMatrix,
    pub col_cov: SpdMatrix,
}

impl MatrixNormalParams {
    pub fn new(mean: RealMatrix, row_cov: SpdMatrix, col_cov: SpdMatrix) -> Result<Self> {
        if mean.rows() != row_cov.dim() || mean.cols() != col_cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean is {}x{} but U is {}x{} and V is {}x{}",
                mean.rows(),
                mean.cols(),
                row_cov.dim(),
                row_cov.dim(),
                col_cov.dim(),
                col_cov.dim()
            )));
        }
        Ok(MatrixNormalParams {
            mean,
            row_cov,
            col_cov,
        })
    }

    pub fn p(&self) -> usize {
        self.mean.rows()
    }

    pub fn q(&self) -> usize {
        self.mean.cols()
    }
}

/// `tr[V⁻¹ Rᵀ U⁻¹ R]`, i.e. `vec(R)ᵀ (V ⊗ U)⁻¹ vec(R)`.
pub fn kron_quadratic_form(r: &DMatrix<f64>, u: &SpdMatrix, v: &SpdMatrix) -> f64 {
    let x = solve_lower(u.cholesky(), r);
    let w = solve_lower(v.cholesky(), &x.transpose());
    w.norm_squared()
}

/// Log normalizing constant `-(pq/2) log 2π - (p/2) log|V| - (q/2) log|U|`.
pub(crate) fn matnorm_log_norm(u: &SpdMatrix, v: &SpdMatrix) -> f64 {
    let p = u.dim() as f64;
    let q = v.dim() as f64;
    -0.5 * p * q * (2.0 * PI).ln() - 0.5 * p * v.log_det() - 0.5 * q * u.log_det()
}

/// Log density of `Y` under `MN(M, U, V)`.
pub fn log_density_matnorm(y: &RealMatrix, params: &MatrixNormalParams) -> Result<f64> {
    if y.shape() != params.mean.shape() {
        return Err(Error::DimensionMismatch(format!(
            "observation is {}x{}, mean is {}x{}",
            y.rows(),
            y.cols(),
            params.p(),
            params.q()
        )));
    }
    let r = y.as_matrix() - params.mean.as_matrix();
    Ok(-0.5 * kron_quadratic_form(&r, &params.row_cov, &params.col_cov)
        + matnorm_log_norm(&params.row_cov, &params.col_cov))
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Draws `M + A Z Bᵀ` with `A = chol(U)`, `B = chol(V)` and standard normal `Z`.
pub fn sample_matnorm<R: Rng + ?Sized>(params: &MatrixNormalParams, rng: &mut R) -> RealMatrix {
    let z = standard_normal_matrix(params.p(), params.q(), rng);
    let draw =
        params.mean.as_matrix() + params.row_cov.cholesky() * z * params.col_cov.cholesky().transpose();
    RealMatrix(draw)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(y: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(y.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Bartlett factor: lower triangular with `sqrt(χ²(df - i))` on the diagonal
/// and standard normals below it.
fn bartlett_factor<R: Rng + ?Sized>(df: f64, dim: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(df > dim as f64 - 1.0) || !df.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "wishart degrees of freedom {df} must exceed dim - 1 = {}",
            dim as f64 - 1.0
        )));
    }
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::InvalidParameter(format!("chi-square: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    Ok(a)
}

fn spd_from_factor(c: &DMatrix<f64>) -> Result<SpdMatrix> {
    let m = c * c.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5)
}

/// Wishart draw with mean `df · scale` via the Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(df: f64, scale: &SpdMatrix, rng: &mut R) -> Result<SpdMatrix> {
    let a = bartlett_factor(df, scale.dim(), rng)?;
    spd_from_factor(&(scale.cholesky() * a))
}

/// Inverse-Wishart draw with density proportional to
/// `|Σ|^{-(df+d+1)/2} exp(-tr(scale Σ⁻¹)/2)`, i.e. the inverse of a
/// `Wishart(df, scale⁻¹)` draw. Mean is `scale / (df - d - 1)` when finite.
pub fn sample_inv_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &SpdMatrix,
    rng: &mut R,
) -> Result<SpdMatrix> {
    let d = scale.dim();
    let a = bartlett_factor(df, d, rng)?;
    // W = L⁻ᵀ A Aᵀ L⁻¹ ~ Wishart(df, scale⁻¹), so W⁻¹ = (L A⁻ᵀ)(L A⁻ᵀ)ᵀ.
    let a_inv = solve_lower(&a, &DMatrix::identity(d, d));
    spd_from_factor(&(scale.cholesky() * a_inv.transpose()))
}

fn ln_multigamma(a: f64, d: usize) -> f64 {
    let df = d as f64;
    0.25 * df * (df - 1.0) * PI.ln() + (0..d).map(|j| ln_gamma(a - 0.5 * j as f64)).sum::<f64>()
}

/// Log density of the inverse-Wishart parameterized as in [`sample_inv_wishart`].
pub fn log_density_inv_wishart(sigma: &SpdMatrix, df: f64, scale: &SpdMatrix) -> Result<f64> {
    let d = sigma.dim();
    if scale.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "inverse-wishart scale is {}x{}, argument is {d}x{d}",
            scale.dim(),
            scale.dim()
        )));
    }
    let dd = d as f64;
    // tr(S Σ⁻¹) = ‖L_Σ⁻¹ L_S‖²
    let tr = solve_lower(sigma.cholesky(), scale.cholesky()).norm_squared();
    Ok(0.5 * df * scale.log_det()
        - 0.5 * df * dd * std::f64::consts::LN_2
        - ln_multigamma(0.5 * df, d)
        - 0.5 * (df + dd + 1.0) * sigma.log_det()
        - 0.5 * tr)
}

/// AR(1) covariance with entries `sigma2 · rho^|i-j|`.
pub fn ar1_cov(dim: usize, rho: f64, sigma2: f64) -> Result<SpdMatrix> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("AR(1) requires |rho| < 1, got {rho}")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("AR(1) requires sigma2 > 0, got {sigma2}")));
    }
    SpdMatrix::new(DMatrix::from_fn(dim, dim, |i, j| {
        sigma2 * rho.powi(i.abs_diff(j) as i32)
    }))
}

/// Rescales a covariance to unit diagonal.
pub fn cov_to_corr(s: &SpdMatrix) -> Result<SpdMatrix> {
    let m = s.matrix();
    let d = m.diagonal();
    if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(format!("non-positive diagonal entry at {i}")));
    }
    let sd: Vec<f64> = d.iter().map(|x| x.sqrt()).collect();
    let mut c = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / (sd[i] * sd[j]));
    c.fill_diagonal(1.0);
    SpdMatrix::new(c)
}

/// Moves the Kronecker scale so that `tr(V) = q`; `V ⊗ U` is unchanged.
pub fn normalize_trace(u: &SpdMatrix, v: &SpdMatrix) -> (SpdMatrix, SpdMatrix) {
    let q = v.dim() as f64;
    let tr = v.trace();
    if tr == q {
        return (u.clone(), v.clone());
    }
    (u.scaled(tr / q), v.scaled(q / tr))
}
