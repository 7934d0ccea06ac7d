use jdrdl::random::{self, SeededRng};
use jdrdl::rcg::{self, ProductPoint, ProductTangent, RcgOptions, RcgStatus};
use jdrdl::spd::{airm_dist_sq, dist_sq_with_grads, egrad_to_rgrad_spd, SpdMatrix};
use jdrdl::spg::{self, kkt_residual, project_nonneg, NonnegVector, SpgOptions, SpgStatus};
use jdrdl::stiefel::{project_tangent, StiefelPoint, StiefelTangent};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

struct Nnls {
    m: DMatrix<f64>,
    b: DVector<f64>,
}

impl Nnls {
    fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Self {
        Nnls {
            m: random::gaussian_matrix(rows, cols, rng),
            b: DVector::from_fn(rows, |_, _| random::gaussian(rng)),
        }
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.m * x - &self.b).norm_squared()
    }

    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.m.transpose() * (&self.m * x - &self.b)
    }

    /// Enumerates every free set, solves the normal equations on it and keeps
    /// the best feasible candidate.
    fn active_set_oracle(&self) -> DVector<f64> {
        let h = self.m.ncols();
        let mut best = DVector::zeros(h);
        let mut best_cost = self.cost(&best);
        for mask in 1u32..(1 << h) {
            let free: Vec<usize> = (0..h).filter(|i| mask & (1 << i) != 0).collect();
            let sub = DMatrix::from_columns(&free.iter().map(|&i| self.m.column(i)).collect::<Vec<_>>());
            let Some(xs) = (sub.transpose() * &sub).lu().solve(&(sub.transpose() * &self.b)) else {
                continue;
            };
            if xs.iter().any(|&v| v < 0.0) {
                continue;
            }
            let mut x = DVector::zeros(h);
            for (k, &i) in free.iter().enumerate() {
                x[i] = xs[k];
            }
            let c = self.cost(&x);
            if c < best_cost {
                best = x;
                best_cost = c;
            }
        }
        best
    }
}

#[test]
fn spg_matches_exhaustive_active_set() {
    let mut rng = random::seeded(20);
    let opts = SpgOptions::default();
    for _ in 0..50 {
        let p = Nnls::random(10, 6, &mut rng);
        let oracle = p.active_set_oracle();
        let res = spg::solve(|x| p.cost(x), |x| p.grad(x), &NonnegVector::zeros(6), &opts).unwrap();
        assert_eq!(res.status, SpgStatus::Success);
        assert!(res.kkt < 1e-6);
        let err = (res.x.as_vector() - &oracle).amax();
        assert!(err < 1e-6, "max deviation {err:.3e}");
    }
}

#[test]
fn spg_closed_form_cases() {
    let opts = SpgOptions::default();
    let c = DVector::from_vec(vec![0.5, 2.0, 0.0, 1.5]);
    let cost = |x: &DVector<f64>| 0.5 * (x - &c).norm_squared();
    let grad = |x: &DVector<f64>| x - &c;
    let res = spg::solve(cost, grad, &NonnegVector::zeros(4), &opts).unwrap();
    assert!((res.x.as_vector() - &c).amax() < 1e-8);

    let c = DVector::from_vec(vec![-1.0, 2.0, -3.0, 0.25]);
    let cost = |x: &DVector<f64>| 0.5 * (x - &c).norm_squared();
    let grad = |x: &DVector<f64>| x - &c;
    let x0 = NonnegVector::from_slice(&[1.0, 1.0, 1.0, 1.0]).unwrap();
    let res = spg::solve(cost, grad, &x0, &opts).unwrap();
    let expected = c.map(|v| v.max(0.0));
    assert!((res.x.as_vector() - expected).amax() < 1e-8);
}

#[test]
fn spg_reports_max_iters_with_best_iterate() {
    let mut rng = random::seeded(21);
    let p = Nnls::random(10, 6, &mut rng);
    let opts = SpgOptions {
        max_iters: 2,
        kkt_tol: 1e-14,
        ..SpgOptions::default()
    };
    let x0 = NonnegVector::from_slice(&[1.0; 6]).unwrap();
    let res = spg::solve(|x| p.cost(x), |x| p.grad(x), &x0, &opts).unwrap();
    assert_eq!(res.status, SpgStatus::MaxIters);
    assert!(res.cost <= p.cost(x0.as_vector()));
    assert!(res.x.as_vector().iter().all(|&v| v >= 0.0));
}

#[test]
fn projection_examples() {
    let p = project_nonneg(&DVector::from_vec(vec![1.0, -2.0, 3.0]));
    assert_eq!(p.as_vector().as_slice(), &[1.0, 0.0, 3.0]);
    let v = DVector::from_vec(vec![0.0, 4.0, 1e-300]);
    assert_eq!(project_nonneg(&v).as_vector(), &v);
    assert_eq!(kkt_residual(&DVector::from_vec(vec![0.0, 1.0]), &DVector::from_vec(vec![3.0, 0.0])), 0.0);
}

proptest! {
    #[test]
    fn projection_is_the_nearest_feasible_point(seed in any::<u64>()) {
        let mut rng = random::seeded(seed);
        let x = DVector::from_fn(5, |_, _| random::gaussian(&mut rng));
        let p = project_nonneg(&x);
        let d = (p.as_vector() - &x).norm();
        for _ in 0..100 {
            let y = DVector::from_fn(5, |_, _| random::gaussian(&mut rng).abs());
            prop_assert!(d <= (&y - &x).norm());
        }
        let again = project_nonneg(p.as_vector());
        prop_assert_eq!(again.as_vector(), p.as_vector());
    }

    #[test]
    fn spg_never_increases_cost_and_stays_feasible(seed in any::<u64>()) {
        let mut rng = random::seeded(seed);
        let p = Nnls::random(8, 5, &mut rng);
        let x0 = NonnegVector::new(DVector::from_fn(5, |_, _| random::gaussian(&mut rng).abs())).unwrap();
        let mut iterates = Vec::new();
        let res = spg::solve(
            |x| { iterates.push(x.clone()); p.cost(x) },
            |x| p.grad(x),
            &x0,
            &SpgOptions::default(),
        ).unwrap();
        prop_assert!(res.cost <= p.cost(x0.as_vector()));
        prop_assert!(iterates.iter().all(|x| x.iter().all(|&v| v >= 0.0)));
        if res.status == SpgStatus::Success {
            prop_assert!(kkt_residual(res.x.as_vector(), &p.grad(res.x.as_vector())) < 1e-6);
        }
    }
}

fn frozen_stiefel() -> StiefelPoint {
    StiefelPoint::leading_identity(3, 2).unwrap()
}

fn karcher_targets(rng: &mut SeededRng) -> Vec<SpdMatrix> {
    (0..3).map(|_| random::spd(3, rng)).collect()
}

#[test]
fn rcg_recovers_known_spd_minimiser() {
    let mut rng = random::seeded(30);
    let targets = karcher_targets(&mut rng);
    let cost = |x: &ProductPoint| -> f64 {
        x.spd
            .iter()
            .zip(&targets)
            .map(|(d, t)| airm_dist_sq(d, t).unwrap())
            .sum()
    };
    let rgrad = |x: &ProductPoint| ProductTangent {
        stiefel: StiefelTangent::zeros(3, 2),
        spd: x
            .spd
            .iter()
            .zip(&targets)
            .map(|(d, t)| {
                let g = dist_sq_with_grads(&d.inv_sqrt(), t.matrix()).unwrap().grad_first;
                egrad_to_rgrad_spd(d, &g).unwrap()
            })
            .collect(),
    };
    let x0 = ProductPoint {
        stiefel: frozen_stiefel(),
        spd: (0..3).map(|_| random::spd(3, &mut rng)).collect(),
    };
    let opts = RcgOptions {
        max_iters: 500,
        grad_norm_tol: 1e-10,
        ..RcgOptions::default()
    };
    let res = rcg::minimize(cost, rgrad, x0, &opts).unwrap();
    assert!(res.cost < 1e-8, "final cost {:.3e}", res.cost);
    for (d, t) in res.point.spd.iter().zip(&targets) {
        assert!((d.matrix() - t.matrix()).norm() < 1e-4 * t.matrix().norm());
    }
}

#[test]
fn rcg_matches_dense_eigendecomposition_on_stiefel() {
    // min ||U^T M U||_F² over St(2, 5) is the sum of the two smallest squared
    // eigenvalues of the SPD matrix M
    let mut rng = random::seeded(31);
    let rotation = random::stiefel(5, 5, &mut rng);
    let m = SpdMatrix::from_diagonal(&[0.3, 0.7, 1.5, 2.0, 3.1])
        .unwrap()
        .congruence(rotation.matrix())
        .unwrap();
    let mm = m.matrix().clone();
    let eig = m.eigenvalues().clone();
    let optimum = eig[0].powi(2) + eig[1].powi(2);

    let cost = |x: &ProductPoint| {
        let u = x.stiefel.matrix();
        (u.transpose() * &mm * u).norm_squared()
    };
    let rgrad = |x: &ProductPoint| {
        let u = x.stiefel.matrix();
        let egrad = &mm * u * (u.transpose() * &mm * u) * 4.0;
        ProductTangent {
            stiefel: project_tangent(&x.stiefel, &egrad).unwrap(),
            spd: Vec::new(),
        }
    };
    let x0 = ProductPoint {
        stiefel: random::stiefel(5, 2, &mut rng),
        spd: Vec::new(),
    };
    let opts = RcgOptions {
        max_iters: 1000,
        grad_norm_tol: 1e-9,
        ..RcgOptions::default()
    };
    let res = rcg::minimize(cost, rgrad, x0, &opts).unwrap();
    assert!((res.cost - optimum).abs() < 1e-6, "{} vs {}", res.cost, optimum);

    // Armijo condition along every accepted step
    for w in res.trace.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        assert!(cur.cost <= prev.cost + opts.armijo_c1 * cur.step * cur.slope + 1e-15);
        assert!(cur.slope < 0.0);
    }
}

#[test]
fn rcg_returns_stationary_start_immediately() {
    let mut rng = random::seeded(32);
    let target = random::spd(3, &mut rng);
    let x0 = ProductPoint {
        stiefel: frozen_stiefel(),
        spd: vec![target.clone()],
    };
    let cost = |x: &ProductPoint| airm_dist_sq(&x.spd[0], &target).unwrap();
    let rgrad = |x: &ProductPoint| ProductTangent::zeros_at(x);
    let res = rcg::minimize(cost, rgrad, x0.clone(), &RcgOptions::default()).unwrap();
    assert_eq!(res.status, RcgStatus::Converged);
    assert_eq!(res.trace.len(), 1);
    assert_eq!(res.point.spd[0].matrix(), x0.spd[0].matrix());
}

#[test]
fn rcg_reports_stall_on_inconsistent_gradient() {
    // the "gradient" points uphill, so no step can satisfy Armijo
    let mut rng = random::seeded(33);
    let target = random::spd(3, &mut rng);
    let x0 = ProductPoint {
        stiefel: frozen_stiefel(),
        spd: vec![random::spd(3, &mut rng)],
    };
    let cost = |x: &ProductPoint| airm_dist_sq(&x.spd[0], &target).unwrap();
    let rgrad = |x: &ProductPoint| {
        let d = &x.spd[0];
        let g = dist_sq_with_grads(&d.inv_sqrt(), target.matrix()).unwrap().grad_first;
        ProductTangent {
            stiefel: StiefelTangent::zeros(3, 2),
            spd: vec![egrad_to_rgrad_spd(d, &(-g)).unwrap()],
        }
    };
    let start = cost(&x0);
    let res = rcg::minimize(cost, rgrad, x0, &RcgOptions::default()).unwrap();
    assert_eq!(res.status, RcgStatus::Stalled);
    assert!(res.cost <= start);
}

#[test]
fn invalid_options_are_rejected() {
    let bad = RcgOptions {
        armijo_c1: 1.5,
        ..RcgOptions::default()
    };
    assert!(bad.validate().is_err());
    let bad = SpgOptions {
        bb_step_min: 1.0,
        bb_step_max: 0.5,
        ..SpgOptions::default()
    };
    assert!(bad.validate().is_err());
}
