//! Spectral projected gradient (Birgin–Martínez–Raydan) over the
//! nonnegative orthant.
//!
//! Each iteration projects a Barzilai–Borwein scaled gradient step, then runs
//! a nonmonotone Armijo search along the resulting feasible direction with
//! safeguarded quadratic backtracking.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vector with every entry `>= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonnegVector(DVector<f64>);

impl NonnegVector {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "entry {i} is not nonnegative ({x})"
            )));
        }
        Ok(NonnegVector(v))
    }

    pub fn zeros(n: usize) -> Self {
        NonnegVector(DVector::zeros(n))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

/// Euclidean projection onto the orthant: entrywise `max(x, 0)`.
pub fn project_nonneg(x: &DVector<f64>) -> NonnegVector {
    // `max` also maps NaN to 0, keeping the output feasible
    NonnegVector(x.map(|v| v.max(0.0)))
}

/// `||x - P(x - g)||_inf`.
pub fn kkt_residual(x: &DVector<f64>, g: &DVector<f64>) -> f64 {
    x.iter()
        .zip(g.iter())
        .map(|(&xi, &gi)| (xi - (xi - gi).max(0.0)).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpgOptions {
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub bb_step_min: f64,
    pub bb_step_max: f64,
    pub nonmonotone_memory: usize,
    pub sufficient_decrease: f64,
}

impl Default for SpgOptions {
    fn default() -> Self {
        SpgOptions {
            max_iters: 500,
            kkt_tol: 1e-8,
            bb_step_min: 1e-10,
            bb_step_max: 1e10,
            nonmonotone_memory: 10,
            sufficient_decrease: 1e-4,
        }
    }
}

impl SpgOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.bb_step_min > 0.0 && self.bb_step_min < self.bb_step_max) {
            return Err(Error::InvalidArgument(
                "need 0 < bb_step_min < bb_step_max".into(),
            ));
        }
        if self.nonmonotone_memory == 0 {
            return Err(Error::InvalidArgument(
                "nonmonotone_memory must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpgStatus {
    Success,
    MaxIters,
    /// No acceptable step could be found (usually a non-smooth or
    /// ill-scaled objective); the best iterate is returned.
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct SpgResult {
    pub x: NonnegVector,
    pub cost: f64,
    pub status: SpgStatus,
    pub iterations: usize,
    pub kkt: f64,
}

const MAX_BACKTRACKS: usize = 60;

/// Minimises a smooth function over `x >= 0` starting from `x0`.
///
/// The returned point is the best iterate seen, so `cost(x) <= cost(x0)`
/// holds regardless of status.
pub fn solve(
    mut cost: impl FnMut(&DVector<f64>) -> f64,
    mut grad: impl FnMut(&DVector<f64>) -> DVector<f64>,
    x0: &NonnegVector,
    opts: &SpgOptions,
) -> Result<SpgResult> {
    opts.validate()?;
    let mut x = x0.as_vector().clone();
    let mut f = cost(&x);
    if !f.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cost at the starting point is not finite ({f})"
        )));
    }
    let mut g = grad(&x);
    let mut history = vec![f];
    let mut best = (x.clone(), f, kkt_residual(&x, &g));

    let g_inf = g.amax();
    let mut lambda = if g_inf > 0.0 { 1.0 / g_inf } else { 1.0 };
    lambda = lambda.clamp(opts.bb_step_min, opts.bb_step_max);

    let mut status = SpgStatus::MaxIters;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        let kkt = kkt_residual(&x, &g);
        if kkt < opts.kkt_tol {
            status = SpgStatus::Success;
            break;
        }
        iterations = it + 1;

        let trial = project_nonneg(&(&x - &g * lambda)).into_vector();
        let d = &trial - &x;
        let gtd = g.dot(&d);
        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let xn = project_nonneg(&(&x + &d * alpha)).into_vector();
            let fnew = cost(&xn);
            if fnew.is_finite() && fnew <= f_ref + opts.sufficient_decrease * alpha * gtd {
                accepted = Some((xn, fnew));
                break;
            }
            // safeguarded quadratic interpolation of phi(alpha)
            let denom = 2.0 * (fnew - f - alpha * gtd);
            let mut next = if fnew.is_finite() && denom > 0.0 {
                -gtd * alpha * alpha / denom
            } else {
                0.5 * alpha
            };
            if !(next >= 0.1 * alpha && next <= 0.5 * alpha) {
                next = 0.5 * alpha;
            }
            alpha = next;
        }
        let Some((xn, fnew)) = accepted else {
            status = SpgStatus::LineSearchFailed;
            break;
        };

        let gn = grad(&xn);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        lambda = if sy > 0.0 { s.dot(&s) / sy } else { 1.0 };
        lambda = lambda.clamp(opts.bb_step_min, opts.bb_step_max);

        x = xn;
        f = fnew;
        g = gn;
        history.push(f);
        if history.len() > opts.nonmonotone_memory {
            history.remove(0);
        }
        if f < best.1 {
            best = (x.clone(), f, kkt_residual(&x, &g));
        }
    }

    let final_kkt = kkt_residual(&x, &g);
    if status == SpgStatus::Success || f <= best.1 {
        best = (x, f, final_kkt);
    }
    if status != SpgStatus::Success && best.2 < opts.kkt_tol {
        status = SpgStatus::Success;
    }
    Ok(SpgResult {
        x: NonnegVector(best.0),
        cost: best.1,
        status,
        iterations,
        kkt: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let p = project_nonneg(&DVector::from_column_slice(&[1.0, -2.0, 3.0]));
        assert_eq!(p.as_vector().as_slice(), &[1.0, 0.0, 3.0]);
        let v = DVector::from_column_slice(&[0.0, 2.5]);
        assert_eq!(project_nonneg(&v).as_vector(), &v);
    }

    #[test]
    fn nonneg_vector_rejects_negative_entries() {
        assert!(NonnegVector::from_slice(&[0.0, -1e-300]).is_err());
        assert!(NonnegVector::from_slice(&[0.0, f64::NAN]).is_err());
    }

    fn solve_distance(c: &[f64]) -> SpgResult {
        let c = DVector::from_column_slice(c);
        let cc = c.clone();
        solve(
            |x| 0.5 * (x - &c).norm_squared(),
            |x| x - &cc,
            &NonnegVector::zeros(c.len()),
            &SpgOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn feasible_unconstrained_optimum() {
        let r = solve_distance(&[1.0, 0.5, 3.0]);
        assert_eq!(r.status, SpgStatus::Success);
        for (a, b) in r.x.as_vector().iter().zip([1.0, 0.5, 3.0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn infeasible_optimum_is_clipped() {
        let r = solve_distance(&[1.0, -0.5, 3.0, -7.0]);
        for (a, b) in r.x.as_vector().iter().zip([1.0, 0.0, 3.0, 0.0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn max_iters_returns_best_iterate() {
        let c = DVector::from_column_slice(&[1.0, 2.0]);
        let cc = c.clone();
        let opts = SpgOptions {
            max_iters: 1,
            kkt_tol: 0.0,
            ..SpgOptions::default()
        };
        let x0 = NonnegVector::from_slice(&[5.0, 5.0]).unwrap();
        let f0 = 0.5 * (x0.as_vector() - &c).norm_squared();
        let r = solve(
            |x| 0.5 * (x - &c).norm_squared(),
            |x| x - &cc,
            &x0,
            &opts,
        )
        .unwrap();
        assert!(r.cost <= f0);
        assert!(matches!(r.status, SpgStatus::MaxIters | SpgStatus::Success));
    }
}
