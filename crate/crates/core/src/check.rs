//! Central finite-difference checks of every analytic gradient, run on a
//! small seeded random instance.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::features::synthetic_spd_dataset;
use crate::model::objective::{CodingObjective, DlObjective, ProjectedSamples, ScColumn};
use crate::model::{build_graphs, CoefficientMatrix, Dictionary, HyperParams};
use crate::random::{self, SeededRng};
use crate::rcg::{product_inner, product_retract, ProductPoint, ProductTangent};
use crate::spd::{egrad_to_rgrad_spd, spd_retract, SpdMatrix, SymTangent};
use crate::stiefel::{project_tangent, retract_qr, StiefelPoint};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub m: usize,
    pub d: usize,
    pub num_classes: usize,
    pub atoms_per_class: usize,
    pub samples_per_class: usize,
    pub directions: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Relative error deliberately injected into every analytic gradient.
    /// Zero for a real check; nonzero only to exercise the failure path.
    pub perturb: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seed: 0,
            m: 6,
            d: 4,
            num_classes: 2,
            atoms_per_class: 2,
            samples_per_class: 4,
            directions: 20,
            step: 1e-6,
            tolerance: 1e-5,
            perturb: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermReport {
    pub name: String,
    pub checks: usize,
    pub worst_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub terms: Vec<TermReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(|t| t.passed)
    }

    pub fn worst(&self) -> f64 {
        self.terms.iter().map(|t| t.worst_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.terms {
            writeln!(
                f,
                "{:<14} {:>3} checks  worst rel err {:.3e}  {}",
                t.name,
                t.checks,
                t.worst_rel_err,
                if t.passed { "ok" } else { "FAIL" }
            )?;
        }
        write!(f, "{}", if self.passed() { "all checks passed" } else { "gradient check FAILED" })
    }
}

/// `|fd - an| / max(|fd|, |an|)`, with an absolute floor on the scale.
pub fn relative_error(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-10)
}

struct Term {
    name: &'static str,
    errs: Vec<f64>,
}

impl Term {
    fn new(name: &'static str) -> Self {
        Term { name, errs: Vec::new() }
    }

    fn push(&mut self, fd: f64, an: f64) {
        self.errs.push(relative_error(fd, an));
    }

    fn report(self, tol: f64) -> TermReport {
        let worst = self.errs.iter().copied().fold(0.0, f64::max);
        TermReport {
            name: self.name.into(),
            checks: self.errs.len(),
            worst_rel_err: worst,
            passed: self.errs.iter().all(|e| *e < tol),
        }
    }
}

fn unit_sym(n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let s = random::symmetric(n, rng);
    let norm = s.norm();
    s / norm
}

fn positive_vector(n: usize, rng: &mut SeededRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 0.1 + random::gaussian(rng).abs())
}

/// Runs every check and returns the per-term worst relative errors.
pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = random::seeded(cfg.seed);
    let data = synthetic_spd_dataset(
        cfg.num_classes,
        cfg.samples_per_class,
        cfg.m,
        1.0,
        0.3,
        cfg.seed ^ 0x5eed,
    )?;
    let hyper = HyperParams {
        lambda_1: 0.01,
        lambda_2: 0.02,
        lambda_a: 0.1,
        lambda_u: 0.1,
        lambda_d_cross: 0.05,
        lambda_d_reg: 0.05,
        v_w: 1,
        v_b: 1,
        d: cfg.d,
        ..HyperParams::default()
    };
    let graphs = build_graphs(&data, hyper.v_w, hyper.v_b)?;
    let u = random::stiefel(cfg.m, cfg.d, &mut rng);
    let dict = Dictionary::new(
        (0..cfg.num_classes)
            .map(|_| (0..cfg.atoms_per_class).map(|_| random::spd(cfg.d, &mut rng)).collect())
            .collect(),
    )?;
    let h = dict.num_atoms();
    let n = data.len();
    let codes = CoefficientMatrix::new(DMatrix::from_fn(h, n, |_, _| {
        0.1 + random::gaussian(&mut rng).abs()
    }))?;
    let scale = 1.0 + cfg.perturb;
    let t = cfg.step;

    let dl = DlObjective::new(&data, &graphs, &codes, &hyper);
    let g = dl.gradient(u.matrix(), &dict)?;
    let f_dl = |u: &StiefelPoint, atoms: &[SpdMatrix]| -> Result<f64> {
        dl.value(u.matrix(), &dict.with_atoms(atoms.to_vec())?)
    };

    // U alone, along random tangent directions with the QR retraction
    let mut term_u = Term::new("dl_u");
    for _ in 0..cfg.directions {
        let v = project_tangent(&u, &random::gaussian_matrix(cfg.m, cfg.d, &mut rng))?;
        let v = v.scale(1.0 / v.norm());
        let fp = f_dl(&retract_qr(&u, &v, t)?, dict.atoms())?;
        let fm = f_dl(&retract_qr(&u, &v, -t)?, dict.atoms())?;
        term_u.push((fp - fm) / (2.0 * t), scale * g.egrad_u.dot(v.matrix()));
    }

    // each atom alone, along the exponential map
    let mut term_atoms = Term::new("dl_atoms");
    for hh in 0..h {
        for _ in 0..cfg.directions {
            let v = SymTangent::new(unit_sym(cfg.d, &mut rng))?;
            let mut plus = dict.atoms().to_vec();
            let mut minus = dict.atoms().to_vec();
            plus[hh] = spd_retract(&dict.atoms()[hh], &v, t)?;
            minus[hh] = spd_retract(&dict.atoms()[hh], &v, -t)?;
            let fd = (f_dl(&u, &plus)? - f_dl(&u, &minus)?) / (2.0 * t);
            term_atoms.push(fd, scale * g.egrad_atoms[hh].dot(v.matrix()));
        }
    }

    // joint directions on the product manifold through the Riemannian gradient
    let mut term_joint = Term::new("dl_product");
    let x = ProductPoint {
        stiefel: u.clone(),
        spd: dict.atoms().to_vec(),
    };
    let rgrad = ProductTangent {
        stiefel: project_tangent(&u, &g.egrad_u)?,
        spd: x
            .spd
            .iter()
            .zip(&g.egrad_atoms)
            .map(|(a, e)| egrad_to_rgrad_spd(a, e))
            .collect::<Result<Vec<_>>>()?,
    };
    for _ in 0..cfg.directions {
        let v = ProductTangent {
            stiefel: project_tangent(&u, &random::gaussian_matrix(cfg.m, cfg.d, &mut rng))?,
            spd: (0..h)
                .map(|_| SymTangent::new(unit_sym(cfg.d, &mut rng)))
                .collect::<Result<Vec<_>>>()?,
        };
        let xp = product_retract(&x, &v, t)?;
        let xm = product_retract(&x, &v, -t)?;
        let fd = (f_dl(&xp.stiefel, &xp.spd)? - f_dl(&xm.stiefel, &xm.spd)?) / (2.0 * t);
        term_joint.push(fd, scale * product_inner(&x, &rgrad, &v)?);
    }

    // per-column coding objective at random interior points
    let proj = ProjectedSamples::new(u.matrix(), &data)?;
    let mut term_sc = Term::new("sc_column");
    for i in 0..cfg.directions {
        let col = ScColumn::new(i % n, &proj, &dict, &data, &codes, &graphs, &hyper);
        let a = positive_vector(h, &mut rng);
        let dir = DVector::from_fn(h, |_, _| random::gaussian(&mut rng)).normalize();
        let fd = (col.value(&(&a + &dir * t))? - col.value(&(&a - &dir * t))?) / (2.0 * t);
        term_sc.push(fd, scale * col.gradient(&a)?.dot(&dir));
    }

    // test-time coding objective
    let mut term_code = Term::new("test_coding");
    for i in 0..cfg.directions {
        let m = data.sample(i % n).congruence(u.matrix())?;
        let obj = CodingObjective::new(m.inv_sqrt(), &dict, hyper.lambda_1);
        let a = positive_vector(h, &mut rng);
        let dir = DVector::from_fn(h, |_, _| random::gaussian(&mut rng)).normalize();
        let fd = (obj.value(&(&a + &dir * t))? - obj.value(&(&a - &dir * t))?) / (2.0 * t);
        term_code.push(fd, scale * obj.gradient(&a)?.dot(&dir));
    }

    let tol = cfg.tolerance;
    Ok(GradCheckReport {
        terms: vec![
            term_u.report(tol),
            term_atoms.report(tol),
            term_joint.report(tol),
            term_sc.report(tol),
            term_code.report(tol),
        ],
    })
}
