//! Geometry of the manifold of symmetric positive definite matrices.
//!
//! The manifold carries the affine-invariant Riemannian metric (AIRM)
//!
//! ```text
//! <V, W>_P = tr(P^{-1} V P^{-1} W)
//! d^2(A, B) = || Log(A^{-1/2} B A^{-1/2}) ||_F^2
//! ```
//!
//! and every tangent space is identified with the symmetric matrices. All
//! matrix functions go through a symmetric eigendecomposition; at the sizes
//! this crate targets (a few dozen rows) that is both exact enough and cheap.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};

/// Relative eigenvalue floor: an SPD matrix must have `lambda_min > EIG_FLOOR * lambda_max`.
pub const EIG_FLOOR: f64 = 1e-12;

/// Maximum relative asymmetry `||M - M^T||_F / ||M||_F` accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(dim_mismatch(
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    check_square(m)?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigendecomposition `M = Q diag(values) Q^T` of a symmetric matrix,
/// eigenvalues sorted ascending.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    /// `Q f(Λ) Q^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        let out = &scaled * self.vectors.transpose();
        symmetrize(&out)
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Symmetric eigendecomposition; fails on non-symmetric input.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SymEig> {
    check_symmetric(m)?;
    Ok(sym_eig_unchecked(m))
}

pub(crate) fn sym_eig_unchecked(m: &DMatrix<f64>) -> SymEig {
    let n = m.nrows();
    if n == 0 {
        return SymEig {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEig { values, vectors }
}

/// Scalar functions that can be lifted to symmetric matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFunction {
    Log,
    /// Exponential of a symmetric (not necessarily definite) matrix.
    Exp,
    Sqrt,
    InvSqrt,
    Inv,
}

impl MatrixFunction {
    fn eval(self, x: f64) -> f64 {
        match self {
            MatrixFunction::Log => x.ln(),
            MatrixFunction::Exp => x.exp(),
            MatrixFunction::Sqrt => x.sqrt(),
            MatrixFunction::InvSqrt => 1.0 / x.sqrt(),
            MatrixFunction::Inv => 1.0 / x,
        }
    }

    fn needs_definite(self) -> bool {
        !matches!(self, MatrixFunction::Exp)
    }
}

/// Lift `f` to a symmetric matrix via its eigendecomposition.
///
/// For every function except `Exp` the smallest eigenvalue must exceed
/// `EIG_FLOOR * lambda_max`; otherwise `Error::Singular` carries the offender.
pub fn matrix_function(m: &DMatrix<f64>, f: MatrixFunction) -> Result<DMatrix<f64>> {
    let eig = sym_eig(m)?;
    if f.needs_definite() && eig.values.len() > 0 {
        let floor = EIG_FLOOR * eig.max().abs();
        if eig.min() <= floor || eig.min() <= 0.0 {
            return Err(Error::Singular {
                eigenvalue: eig.min(),
            });
        }
    }
    Ok(eig.map(|x| f.eval(x)))
}

/// A validated symmetric positive definite matrix together with its
/// eigendecomposition.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    eig: SymEig,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

impl SpdMatrix {
    /// Validates symmetry and strict positive definiteness.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&mat)?;
        if mat.nrows() == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let mat = symmetrize(&mat);
        let eig = sym_eig_unchecked(&mat);
        let floor = EIG_FLOOR * eig.max().abs();
        if eig.min() <= floor || eig.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                eigenvalue: eig.min(),
                floor,
            });
        }
        Ok(SpdMatrix { mat, eig })
    }

    /// Symmetrises first; for matrices produced by products that are only
    /// symmetric up to rounding.
    pub fn from_product(mat: &DMatrix<f64>) -> Result<Self> {
        check_square(mat)?;
        Self::new(symmetrize(mat))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eig.values
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn ln_det(&self) -> f64 {
        self.eig.values.iter().map(|x| x.ln()).sum()
    }

    /// `Q f(Λ) Q^T` for the cached decomposition. Never singular because the
    /// eigenvalue floor was checked on construction.
    pub fn apply(&self, f: MatrixFunction) -> DMatrix<f64> {
        self.eig.map(|x| f.eval(x))
    }

    pub fn log(&self) -> DMatrix<f64> {
        self.apply(MatrixFunction::Log)
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        self.apply(MatrixFunction::Sqrt)
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.apply(MatrixFunction::InvSqrt)
    }

    pub fn inv(&self) -> DMatrix<f64> {
        self.apply(MatrixFunction::Inv)
    }

    /// `U^T X U`, SPD whenever `U` has full column rank.
    pub fn congruence(&self, u: &DMatrix<f64>) -> Result<SpdMatrix> {
        if u.nrows() != self.dim() {
            return Err(dim_mismatch(self.dim(), u.nrows()));
        }
        let xu = &self.mat * u;
        SpdMatrix::from_product(&(u.transpose() * xu))
    }
}

/// Exponential of a symmetric matrix (always SPD).
pub fn sym_exp(s: &DMatrix<f64>) -> Result<SpdMatrix> {
    let e = matrix_function(s, MatrixFunction::Exp)?;
    SpdMatrix::new(e)
}

/// `spd_fn`: apply one of the supported scalar functions to an SPD matrix.
pub fn spd_fn(m: &SpdMatrix, f: MatrixFunction) -> DMatrix<f64> {
    m.apply(f)
}

/// A tangent vector on the SPD manifold: a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTangent(DMatrix<f64>);

impl SymTangent {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        Ok(SymTangent(symmetrize(&m)))
    }

    /// Symmetric part of an arbitrary square matrix.
    pub fn sym_part(m: &DMatrix<f64>) -> Result<Self> {
        check_square(m)?;
        Ok(SymTangent(symmetrize(m)))
    }

    pub fn zeros(n: usize) -> Self {
        SymTangent(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scale(&self, s: f64) -> SymTangent {
        SymTangent(&self.0 * s)
    }
}

/// AIRM inner product `<V, W>_P`.
pub fn airm_inner(p: &SpdMatrix, v: &SymTangent, w: &SymTangent) -> Result<f64> {
    let n = p.dim();
    if v.dim() != n || w.dim() != n {
        return Err(dim_mismatch(n, format!("{} / {}", v.dim(), w.dim())));
    }
    Ok(airm_inner_raw(&p.inv(), v.matrix(), w.matrix()))
}

/// `tr(P^{-1} V P^{-1} W)` given `P^{-1}`.
pub(crate) fn airm_inner_raw(p_inv: &DMatrix<f64>, v: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let a = p_inv * v;
    let b = p_inv * w;
    // tr(A B) = sum_ij A_ij B_ji
    a.component_mul(&b.transpose()).sum()
}

/// Squared AIRM geodesic distance.
pub fn airm_dist_sq(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(dim_mismatch(a.dim(), b.dim()));
    }
    if a == b {
        // the sandwich below only reaches the identity up to rounding
        return Ok(0.0);
    }
    let a_is = a.inv_sqrt();
    let t = symmetrize(&(&a_is * b.matrix() * &a_is));
    let eig = sym_eig_unchecked(&t);
    let mut acc = 0.0;
    for &l in eig.values.iter() {
        if l <= 0.0 {
            return Err(Error::Singular { eigenvalue: l });
        }
        acc += l.ln().powi(2);
    }
    Ok(acc)
}

/// `d^2(A, B)` given `A^{-1/2}`, eigenvalues only.
pub(crate) fn dist_sq_only(a_inv_sqrt: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let t = symmetrize(&(a_inv_sqrt * b * a_inv_sqrt));
    let mut acc = 0.0;
    for l in t.symmetric_eigenvalues().iter().copied() {
        if l <= 0.0 {
            return Err(Error::Singular { eigenvalue: l });
        }
        acc += l.ln().powi(2);
    }
    Ok(acc)
}

/// Squared distance and both Euclidean gradients.
#[derive(Clone, Debug)]
pub struct DistGrad {
    pub dist_sq: f64,
    /// Symmetric Euclidean gradient w.r.t. the first argument.
    pub grad_first: DMatrix<f64>,
    /// Symmetric Euclidean gradient w.r.t. the second argument.
    pub grad_second: DMatrix<f64>,
}

/// `d^2(A, B)` with its gradients, given `A^{-1/2}`.
///
/// With `T = A^{-1/2} B A^{-1/2} = Q diag(t) Q^T`:
///
/// ```text
/// d^2      = sum ln^2 t_i
/// grad_A   = -2 A^{-1/2} Q diag(ln t) Q^T A^{-1/2}
/// grad_B   =  2 A^{-1/2} Q diag(ln t / t) Q^T A^{-1/2}
/// ```
pub fn dist_sq_with_grads(a_inv_sqrt: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DistGrad> {
    let t = symmetrize(&(a_inv_sqrt * b * a_inv_sqrt));
    let eig = t.symmetric_eigen();
    let mut dist_sq = 0.0;
    for &l in eig.eigenvalues.iter() {
        if l <= 0.0 {
            return Err(Error::Singular { eigenvalue: l });
        }
        dist_sq += l.ln().powi(2);
    }
    // both gradients are W diag(f) W^T with W = A^{-1/2} Q
    let w = a_inv_sqrt * &eig.eigenvectors;
    let mut w_log = w.clone();
    let mut w_log_over = w.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let ln = l.ln();
        w_log.column_mut(j).scale_mut(-2.0 * ln);
        w_log_over.column_mut(j).scale_mut(2.0 * ln / l);
    }
    let wt = w.transpose();
    Ok(DistGrad {
        dist_sq,
        grad_first: symmetrize(&(w_log * &wt)),
        grad_second: symmetrize(&(w_log_over * &wt)),
    })
}

/// Stein (Jensen–Bregman LogDet) divergence `ln det((A+B)/2) - ½ ln det(AB)`.
pub fn stein_dist_sq(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(dim_mismatch(a.dim(), b.dim()));
    }
    if a == b {
        return Ok(0.0);
    }
    let mid = (a.matrix() + b.matrix()) * 0.5;
    let chol = mid
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("midpoint not positive definite".into()))?;
    let ln_det_mid: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let v = ln_det_mid - 0.5 * (a.ln_det() + b.ln_det());
    // exact zero at A = B is lost to rounding; the divergence is nonnegative
    Ok(v.max(0.0))
}

/// Riemannian gradient under the AIRM: `D egrad D`.
pub fn egrad_to_rgrad_spd(d: &SpdMatrix, egrad: &DMatrix<f64>) -> Result<SymTangent> {
    if egrad.nrows() != d.dim() || egrad.ncols() != d.dim() {
        return Err(dim_mismatch(
            d.dim(),
            format!("{}x{}", egrad.nrows(), egrad.ncols()),
        ));
    }
    let r = d.matrix() * egrad * d.matrix();
    Ok(SymTangent(symmetrize(&r)))
}

/// `acc += a * b`, in place.
pub(crate) fn add_scaled(acc: &mut DMatrix<f64>, a: f64, b: &DMatrix<f64>) {
    acc.zip_apply(b, |x, y| *x += a * y);
}

/// Exponential map `D^{1/2} exp(t D^{-1/2} V D^{-1/2}) D^{1/2}`.
pub fn spd_retract(d: &SpdMatrix, v: &SymTangent, t: f64) -> Result<SpdMatrix> {
    if v.dim() != d.dim() {
        return Err(dim_mismatch(d.dim(), v.dim()));
    }
    if t == 0.0 || v.matrix().iter().all(|&x| x == 0.0) {
        return Ok(d.clone());
    }
    let s = d.sqrt();
    let is = d.inv_sqrt();
    let w = symmetrize(&(&is * v.matrix() * &is)) * t;
    let e = sym_eig_unchecked(&w).map(f64::exp);
    SpdMatrix::from_product(&(&s * e * &s))
}
