//! Stiefel manifold St(d, m) of column-orthonormal `m x d` matrices, with the
//! embedded (Frobenius) metric.

use nalgebra::DMatrix;

use crate::error::{dim_mismatch, Error, Result};
use crate::spd::symmetrize;

/// Orthonormality tolerance `||U^T U - I||_F`.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    u: DMatrix<f64>,
}

impl StiefelPoint {
    /// Validates `U^T U = I`. Square `U` (d = m) is accepted; the projection
    /// is then an isometry, which baselines without reduction rely on.
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        if u.ncols() > u.nrows() || u.ncols() == 0 {
            return Err(dim_mismatch(
                "m x d with 0 < d <= m",
                format!("{}x{}", u.nrows(), u.ncols()),
            ));
        }
        let dev = (u.transpose() * &u - DMatrix::identity(u.ncols(), u.ncols())).norm();
        if dev > ORTHO_TOL {
            return Err(Error::NotOrthonormal { deviation: dev });
        }
        Ok(StiefelPoint { u })
    }

    /// The first `d` columns of `I_m`.
    pub fn leading_identity(m: usize, d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(m, d))
    }

    /// Q factor of a thin QR with positive diagonal in R.
    pub fn orthonormalize(a: &DMatrix<f64>) -> Result<Self> {
        let (m, d) = a.shape();
        if d > m || d == 0 {
            return Err(dim_mismatch("m x d with 0 < d <= m", format!("{m}x{d}")));
        }
        let qr = a.clone().qr();
        let r = qr.r();
        let mut q = qr.q();
        let scale = r.diagonal().amax().max(f64::MIN_POSITIVE);
        for j in 0..d {
            let rjj = r[(j, j)];
            if rjj.abs() <= 1e-12 * scale || !rjj.is_finite() {
                return Err(Error::RankDeficient { pivot: rjj.abs() });
            }
            if rjj < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Ok(StiefelPoint { u: q })
    }

    pub fn ambient_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.u
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StiefelTangent(DMatrix<f64>);

impl StiefelTangent {
    pub fn zeros(m: usize, d: usize) -> Self {
        StiefelTangent(DMatrix::zeros(m, d))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn inner(&self, other: &StiefelTangent) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> StiefelTangent {
        StiefelTangent(&self.0 * s)
    }

    pub fn axpy(&self, a: f64, other: &StiefelTangent) -> StiefelTangent {
        StiefelTangent(&self.0 + &other.0 * a)
    }

    /// `||U^T V + V^T U||_F`; zero for a tangent vector at `U`.
    pub fn tangency_defect(&self, at: &StiefelPoint) -> f64 {
        let utv = at.matrix().transpose() * &self.0;
        (&utv + utv.transpose()).norm()
    }
}

/// Orthogonal projection `Z - U sym(U^T Z)` onto the tangent space at `U`.
pub fn project_tangent(u: &StiefelPoint, z: &DMatrix<f64>) -> Result<StiefelTangent> {
    if z.shape() != u.matrix().shape() {
        return Err(dim_mismatch(
            format!("{:?}", u.matrix().shape()),
            format!("{:?}", z.shape()),
        ));
    }
    let utz = u.matrix().transpose() * z;
    Ok(StiefelTangent(z - u.matrix() * symmetrize(&utz)))
}

/// QR retraction `qf(U + tV)` with positive-diagonal sign convention.
pub fn retract_qr(u: &StiefelPoint, v: &StiefelTangent, t: f64) -> Result<StiefelPoint> {
    if v.matrix().shape() != u.matrix().shape() {
        return Err(dim_mismatch(
            format!("{:?}", u.matrix().shape()),
            format!("{:?}", v.matrix().shape()),
        ));
    }
    if t == 0.0 || v.matrix().iter().all(|&x| x == 0.0) {
        return Ok(u.clone());
    }
    StiefelPoint::orthonormalize(&(u.matrix() + v.matrix() * t))
}

/// Projection-based vector transport onto the tangent space at `u_new`.
pub fn transport(u_new: &StiefelPoint, v: &StiefelTangent) -> Result<StiefelTangent> {
    project_tangent(u_new, v.matrix())
}
