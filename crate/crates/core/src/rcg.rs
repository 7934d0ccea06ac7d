//! Riemannian conjugate gradient on `St(d, m) x (S++^d)^H`.
//!
//! The product carries the sum metric: Frobenius on the Stiefel factor and
//! the AIRM on every SPD factor. Retraction is the QR map on the Stiefel
//! factor and the exponential map on SPD factors. Previous search directions
//! are carried over by projection on the Stiefel factor; SPD tangent spaces
//! are all the symmetric matrices, so SPD components are carried over as-is.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::spd::{airm_inner_raw, spd_retract, SpdMatrix, SymTangent};
use crate::stiefel::{retract_qr, transport, StiefelPoint, StiefelTangent};

#[derive(Clone, Debug, PartialEq)]
pub struct ProductPoint {
    pub stiefel: StiefelPoint,
    pub spd: Vec<SpdMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductTangent {
    pub stiefel: StiefelTangent,
    pub spd: Vec<SymTangent>,
}

impl ProductTangent {
    pub fn zeros_at(x: &ProductPoint) -> Self {
        let (m, d) = x.stiefel.matrix().shape();
        ProductTangent {
            stiefel: StiefelTangent::zeros(m, d),
            spd: x.spd.iter().map(|s| SymTangent::zeros(s.dim())).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        ProductTangent {
            stiefel: self.stiefel.scale(s),
            spd: self.spd.iter().map(|v| v.scale(s)).collect(),
        }
    }

    /// `self + a * other`.
    fn axpy(&self, a: f64, other: &ProductTangent) -> Self {
        ProductTangent {
            stiefel: self.stiefel.axpy(a, &other.stiefel),
            spd: self
                .spd
                .iter()
                .zip(&other.spd)
                .map(|(v, w)| {
                    SymTangent::sym_part(&(v.matrix() + w.matrix() * a))
                        .expect("sum of symmetric matrices")
                })
                .collect(),
        }
    }
}

/// Cached per-point data for repeated inner products.
struct MetricAt {
    spd_inv: Vec<DMatrix<f64>>,
}

impl MetricAt {
    fn new(x: &ProductPoint) -> Self {
        MetricAt {
            spd_inv: x.spd.iter().map(SpdMatrix::inv).collect(),
        }
    }

    fn inner(&self, v: &ProductTangent, w: &ProductTangent) -> f64 {
        let mut acc = v.stiefel.inner(&w.stiefel);
        for ((p_inv, a), b) in self.spd_inv.iter().zip(&v.spd).zip(&w.spd) {
            acc += airm_inner_raw(p_inv, a.matrix(), b.matrix());
        }
        acc
    }
}

/// Sum of the component inner products at `x`.
pub fn product_inner(x: &ProductPoint, v: &ProductTangent, w: &ProductTangent) -> Result<f64> {
    if v.spd.len() != x.spd.len() || w.spd.len() != x.spd.len() {
        return Err(dim_mismatch(
            x.spd.len(),
            format!("{} / {}", v.spd.len(), w.spd.len()),
        ));
    }
    Ok(MetricAt::new(x).inner(v, w))
}

pub fn product_retract(x: &ProductPoint, v: &ProductTangent, t: f64) -> Result<ProductPoint> {
    if v.spd.len() != x.spd.len() {
        return Err(dim_mismatch(x.spd.len(), v.spd.len()));
    }
    let stiefel = retract_qr(&x.stiefel, &v.stiefel, t)?;
    let spd = x
        .spd
        .iter()
        .zip(&v.spd)
        .map(|(d, w)| spd_retract(d, w, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProductPoint { stiefel, spd })
}

fn product_transport(x_new: &ProductPoint, v: &ProductTangent) -> ProductTangent {
    ProductTangent {
        stiefel: transport(&x_new.stiefel, &v.stiefel).expect("shapes fixed by the product"),
        spd: v.spd.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    FletcherReeves,
    /// Hestenes–Stiefel clamped at zero.
    HestenesStiefelPlus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcgOptions {
    pub max_iters: usize,
    pub grad_norm_tol: f64,
    pub armijo_c1: f64,
    pub armijo_shrink: f64,
    /// Trial step of the first line search. Later searches start from the
    /// quadratic-interpolation guess `2 (f_{k-1} - f_k) / -<grad, dir>`.
    pub initial_step: f64,
    pub beta_rule: BetaRule,
    pub max_backtracks: usize,
}

impl Default for RcgOptions {
    fn default() -> Self {
        RcgOptions {
            max_iters: 100,
            grad_norm_tol: 1e-6,
            armijo_c1: 1e-4,
            armijo_shrink: 0.5,
            initial_step: 1.0,
            beta_rule: BetaRule::HestenesStiefelPlus,
            max_backtracks: 50,
        }
    }
}

impl RcgOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::InvalidArgument("armijo_c1 must lie in (0, 1)".into()));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::InvalidArgument(
                "armijo_shrink must lie in (0, 1)".into(),
            ));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidArgument("initial_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcgStatus {
    Converged,
    MaxIters,
    /// The line search failed along both the CG and the steepest-descent direction.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    /// Accepted step and directional derivative that produced this iterate
    /// (zero for the starting point).
    pub step: f64,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct RcgResult {
    pub point: ProductPoint,
    pub cost: f64,
    pub status: RcgStatus,
    pub trace: Vec<TraceEntry>,
}

/// Writes `iter,cost,grad_norm` rows.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,cost,grad_norm")?;
    for e in trace {
        writeln!(out, "{},{:e},{:e}", e.iter, e.cost, e.grad_norm)?;
    }
    Ok(())
}

struct Accepted {
    point: ProductPoint,
    cost: f64,
    step: f64,
}

fn armijo_search(
    cost: &mut impl FnMut(&ProductPoint) -> f64,
    x: &ProductPoint,
    f: f64,
    dir: &ProductTangent,
    slope: f64,
    first_trial: f64,
    opts: &RcgOptions,
) -> Option<Accepted> {
    let mut t = first_trial;
    for _ in 0..opts.max_backtracks {
        if let Ok(candidate) = product_retract(x, dir, t) {
            let fc = cost(&candidate);
            if fc.is_finite() && fc <= f + opts.armijo_c1 * t * slope {
                return Some(Accepted {
                    point: candidate,
                    cost: fc,
                    step: t,
                });
            }
        }
        t *= opts.armijo_shrink;
    }
    None
}

/// Minimises `cost` from `x0`. `rgrad` must return the Riemannian gradient
/// (a valid tangent vector at its argument).
pub fn minimize(
    mut cost: impl FnMut(&ProductPoint) -> f64,
    mut rgrad: impl FnMut(&ProductPoint) -> ProductTangent,
    x0: ProductPoint,
    opts: &RcgOptions,
) -> Result<RcgResult> {
    opts.validate()?;
    let mut x = x0;
    let mut f = cost(&x);
    if !f.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cost at the starting point is not finite ({f})"
        )));
    }
    let mut metric = MetricAt::new(&x);
    let mut g = rgrad(&x);
    let mut g_sq = metric.inner(&g, &g);
    let mut trace = vec![TraceEntry {
        iter: 0,
        cost: f,
        grad_norm: g_sq.sqrt(),
        step: 0.0,
        slope: 0.0,
    }];
    let mut dir = g.scale(-1.0);
    let mut prev_decrease: Option<f64> = None;
    let mut status = RcgStatus::MaxIters;

    for iter in 1..=opts.max_iters {
        if g_sq.sqrt() < opts.grad_norm_tol {
            status = RcgStatus::Converged;
            break;
        }
        let mut slope = metric.inner(&g, &dir);
        if !(slope < 0.0) {
            dir = g.scale(-1.0);
            slope = -g_sq;
        }
        let first_trial = match prev_decrease {
            Some(dec) if dec > 0.0 => {
                let t = 2.02 * dec / -slope;
                if t.is_finite() && t > 0.0 {
                    t
                } else {
                    opts.initial_step
                }
            }
            _ => opts.initial_step,
        };

        let mut accepted = armijo_search(&mut cost, &x, f, &dir, slope, first_trial, opts);
        if accepted.is_none() && slope != -g_sq {
            // one retry along steepest descent
            dir = g.scale(-1.0);
            slope = -g_sq;
            accepted = armijo_search(&mut cost, &x, f, &dir, slope, opts.initial_step, opts);
        }
        let Some(acc) = accepted else {
            status = RcgStatus::Stalled;
            break;
        };

        let new_metric = MetricAt::new(&acc.point);
        let g_new = rgrad(&acc.point);
        let g_new_sq = new_metric.inner(&g_new, &g_new);
        let dir_t = product_transport(&acc.point, &dir);
        let beta = match opts.beta_rule {
            BetaRule::FletcherReeves => {
                if g_sq > 0.0 {
                    g_new_sq / g_sq
                } else {
                    0.0
                }
            }
            BetaRule::HestenesStiefelPlus => {
                let g_t = product_transport(&acc.point, &g);
                let y = g_new.axpy(-1.0, &g_t);
                let den = new_metric.inner(&dir_t, &y);
                let num = new_metric.inner(&g_new, &y);
                if den != 0.0 && (num / den).is_finite() {
                    (num / den).max(0.0)
                } else {
                    0.0
                }
            }
        };
        let mut dir_new = g_new.scale(-1.0).axpy(beta, &dir_t);
        if new_metric.inner(&g_new, &dir_new) >= 0.0 {
            dir_new = g_new.scale(-1.0);
        }

        prev_decrease = Some(f - acc.cost);
        trace.push(TraceEntry {
            iter,
            cost: acc.cost,
            grad_norm: g_new_sq.sqrt(),
            step: acc.step,
            slope,
        });
        x = acc.point;
        f = acc.cost;
        g = g_new;
        g_sq = g_new_sq;
        metric = new_metric;
        dir = dir_new;
    }
    if status == RcgStatus::MaxIters && g_sq.sqrt() < opts.grad_norm_tol {
        status = RcgStatus::Converged;
    }
    Ok(RcgResult {
        point: x,
        cost: f,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use crate::spd::{airm_dist_sq, dist_sq_with_grads, egrad_to_rgrad_spd};
    use crate::stiefel::project_tangent;

    #[test]
    fn inner_product_trivial_cases() {
        let mut rng = random::seeded(21);
        let x = ProductPoint {
            stiefel: random::stiefel(4, 2, &mut rng),
            spd: vec![SpdMatrix::identity(3)],
        };
        let z = ProductTangent::zeros_at(&x);
        assert_eq!(product_inner(&x, &z, &z).unwrap(), 0.0);
        let s = SymTangent::new(random::symmetric(3, &mut rng)).unwrap();
        let v = ProductTangent {
            stiefel: StiefelTangent::zeros(4, 2),
            spd: vec![s.clone()],
        };
        let got = product_inner(&x, &v, &v).unwrap();
        assert!((got - s.matrix().norm_squared()).abs() < 1e-12);
        let bad = ProductTangent {
            stiefel: StiefelTangent::zeros(4, 2),
            spd: vec![],
        };
        assert!(product_inner(&x, &bad, &v).is_err());
    }

    #[test]
    fn karcher_targets_are_recovered() {
        let mut rng = random::seeded(22);
        let targets: Vec<SpdMatrix> = (0..3).map(|_| random::spd(3, &mut rng)).collect();
        let x0 = ProductPoint {
            stiefel: StiefelPoint::leading_identity(4, 2).unwrap(),
            spd: (0..3).map(|_| random::spd(3, &mut rng)).collect(),
        };
        let cost = |x: &ProductPoint| {
            x.spd
                .iter()
                .zip(&targets)
                .map(|(d, t)| airm_dist_sq(d, t).unwrap())
                .sum::<f64>()
        };
        let rgrad = |x: &ProductPoint| ProductTangent {
            stiefel: StiefelTangent::zeros(4, 2),
            spd: x
                .spd
                .iter()
                .zip(&targets)
                .map(|(d, t)| {
                    let g = dist_sq_with_grads(&t.inv_sqrt(), d.matrix()).unwrap();
                    egrad_to_rgrad_spd(d, &g.grad_second).unwrap()
                })
                .collect(),
        };
        let opts = RcgOptions {
            grad_norm_tol: 1e-10,
            ..RcgOptions::default()
        };
        let res = minimize(cost, rgrad, x0, &opts).unwrap();
        assert!(res.cost < 1e-8, "final cost {}", res.cost);
        assert!(res.trace.windows(2).all(|w| w[1].cost <= w[0].cost));
    }

    #[test]
    fn rayleigh_type_minimum_on_stiefel() {
        let mut rng = random::seeded(23);
        let (m, d) = (6, 2);
        let b = random::gaussian_matrix(m, m, &mut rng);
        let psd = &b * b.transpose();
        let eig = crate::spd::sym_eig(&psd).unwrap();
        let optimum: f64 = eig.values.iter().take(d).map(|l| l * l).sum();

        let cost = |x: &ProductPoint| {
            let u = x.stiefel.matrix();
            (u.transpose() * &psd * u).norm_squared()
        };
        let rgrad = |x: &ProductPoint| {
            let u = x.stiefel.matrix();
            let e = &psd * u * (u.transpose() * &psd * u) * 4.0;
            ProductTangent {
                stiefel: project_tangent(&x.stiefel, &e).unwrap(),
                spd: vec![],
            }
        };
        let x0 = ProductPoint {
            stiefel: random::stiefel(m, d, &mut rng),
            spd: vec![],
        };
        let opts = RcgOptions {
            max_iters: 2000,
            grad_norm_tol: 1e-9,
            ..RcgOptions::default()
        };
        let res = minimize(cost, rgrad, x0, &opts).unwrap();
        assert!(
            (res.cost - optimum).abs() < 1e-6,
            "{} vs {optimum}",
            res.cost
        );
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let mut rng = random::seeded(24);
        let x0 = ProductPoint {
            stiefel: random::stiefel(5, 2, &mut rng),
            spd: vec![random::spd(2, &mut rng)],
        };
        let zero = ProductTangent::zeros_at(&x0);
        let res = minimize(|_| 1.5, |_| zero.clone(), x0.clone(), &RcgOptions::default()).unwrap();
        assert_eq!(res.point, x0);
        assert_eq!(res.trace.len(), 1);
        assert_eq!(res.status, RcgStatus::Converged);
    }

    #[test]
    fn rejects_bad_options() {
        let opts = RcgOptions {
            armijo_c1: 1.5,
            ..RcgOptions::default()
        };
        assert!(opts.validate().is_err());
    }

    #[test]
    fn trace_csv_has_header() {
        let trace = vec![TraceEntry {
            iter: 0,
            cost: 1.0,
            grad_norm: 0.5,
            step: 0.0,
            slope: 0.0,
        }];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,cost,grad_norm\n0,1e0,5e-1\n");
    }
}
