//! Alternating minimisation: dictionary/projection step by Riemannian CG on
//! the product manifold, coding step by per-column SPG.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::objective::{DlObjective, ProjectedSamples, ScColumn};
use crate::model::{
    build_graphs, full_objective, CoefficientMatrix, Dictionary, GraphSet, HyperParams,
    JdrdlModel, LabeledDataset, ObjectiveBreakdown, ProjectionInit,
};
use crate::random::{self, SeededRng};
use crate::rcg::{self, ProductPoint, ProductTangent, RcgStatus};
use crate::spd::{egrad_to_rgrad_spd, spd_retract, sym_eig_unchecked, symmetrize, SpdMatrix, SymTangent};
use crate::spg::{self, NonnegVector, SpgStatus};
use crate::stiefel::{project_tangent, StiefelPoint, StiefelTangent};

/// The variables being optimised.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub u: StiefelPoint,
    pub dict: Dictionary,
    pub codes: CoefficientMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfStep {
    Init,
    InitialCoding,
    Dictionary(usize),
    Coding(usize),
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Full objective after every half-step, starting from the initial state.
    pub objective: Vec<(HalfStep, ObjectiveBreakdown)>,
    pub rounds: usize,
    pub warnings: Vec<String>,
}

/// Top-`d` eigenvectors of the arithmetic mean, or a random orthonormal frame.
pub fn initial_projection(
    data: &LabeledDataset,
    d: usize,
    init: ProjectionInit,
    rng: &mut SeededRng,
) -> Result<StiefelPoint> {
    let m = data.dim();
    if d > m {
        return Err(Error::InvalidArgument(format!(
            "reduced dimension {d} exceeds ambient dimension {m}"
        )));
    }
    match init {
        ProjectionInit::Random => Ok(random::stiefel(m, d, rng)),
        ProjectionInit::Identity => StiefelPoint::leading_identity(m, d),
        ProjectionInit::MeanEigen => {
            let mut mean = DMatrix::zeros(m, m);
            for x in data.samples() {
                mean += x.matrix();
            }
            mean /= data.len() as f64;
            let eig = sym_eig_unchecked(&symmetrize(&mean));
            // eigenvalues ascend; take the last d columns, largest first
            let cols: Vec<_> = (0..d).map(|j| eig.vectors.column(m - 1 - j).into_owned()).collect();
            StiefelPoint::orthonormalize(&DMatrix::from_columns(&cols))
        }
    }
}

/// Projected class samples when there is one atom per sample, otherwise
/// exponential-map perturbations of the projected class mean.
pub fn initial_dictionary(
    data: &LabeledDataset,
    u: &StiefelPoint,
    atoms_per_class: Option<usize>,
    noise: f64,
    rng: &mut SeededRng,
) -> Result<Dictionary> {
    let mut sub_dicts = Vec::with_capacity(data.num_classes());
    for k in 0..data.num_classes() {
        let idx = data.class_indices(k);
        let projected = idx
            .iter()
            .map(|&i| data.sample(i).congruence(u.matrix()))
            .collect::<Result<Vec<_>>>()?;
        let h = atoms_per_class.unwrap_or(idx.len());
        if h == idx.len() {
            sub_dicts.push(projected);
            continue;
        }
        let dd = u.reduced_dim();
        let mut mean = DMatrix::zeros(dd, dd);
        for p in &projected {
            mean += p.matrix();
        }
        let mean = SpdMatrix::from_product(&(mean / projected.len() as f64))?;
        let root = mean.sqrt();
        let mut atoms = Vec::with_capacity(h);
        for _ in 0..h {
            let w = random::symmetric(dd, rng);
            let w = &w * (noise / w.norm().max(f64::MIN_POSITIVE));
            let v = SymTangent::sym_part(&(&root * w * &root))?;
            atoms.push(spd_retract(&mean, &v, 1.0)?);
        }
        sub_dicts.push(atoms);
    }
    Dictionary::new(sub_dicts)
}

fn initial_codes(data: &LabeledDataset, dict: &Dictionary) -> CoefficientMatrix {
    let mut a = DMatrix::zeros(dict.num_atoms(), data.len());
    for n in 0..data.len() {
        let r = dict.class_range(data.label(n));
        let w = 1.0 / r.len() as f64;
        for h in r {
            a[(h, n)] = w;
        }
    }
    CoefficientMatrix::new(a).expect("uniform codes are nonnegative")
}

/// One RCG solve over `(U, D)` with the codes fixed. Returns the new state
/// and the solver status. With `learn_projection` off, `U` is frozen.
pub fn solve_dl_subproblem(
    state: &ModelState,
    data: &LabeledDataset,
    graphs: &GraphSet,
    hyper: &HyperParams,
) -> Result<(ModelState, RcgStatus)> {
    let obj = DlObjective::new(data, graphs, &state.codes, hyper);
    let dict = &state.dict;
    let x0 = ProductPoint {
        stiefel: state.u.clone(),
        spd: dict.atoms().to_vec(),
    };
    let cost = |x: &ProductPoint| {
        dict.with_atoms(x.spd.clone())
            .and_then(|d| obj.value(x.stiefel.matrix(), &d))
            .unwrap_or(f64::INFINITY)
    };
    let rgrad = |x: &ProductPoint| -> ProductTangent {
        riemannian_dl_gradient(&obj, dict, x, hyper.learn_projection)
            .unwrap_or_else(|_| ProductTangent::zeros_at(x))
    };
    let res = rcg::minimize(cost, rgrad, x0, &hyper.rcg)?;
    let next = ModelState {
        u: res.point.stiefel,
        dict: dict.with_atoms(res.point.spd)?,
        codes: state.codes.clone(),
    };
    Ok((next, res.status))
}

fn riemannian_dl_gradient(
    obj: &DlObjective<'_>,
    template: &Dictionary,
    x: &ProductPoint,
    learn_projection: bool,
) -> Result<ProductTangent> {
    let dict = template.with_atoms(x.spd.clone())?;
    let g = obj.gradient(x.stiefel.matrix(), &dict)?;
    let stiefel = if learn_projection {
        project_tangent(&x.stiefel, &g.egrad_u)?
    } else {
        let (m, d) = x.stiefel.matrix().shape();
        StiefelTangent::zeros(m, d)
    };
    let spd = x
        .spd
        .iter()
        .zip(&g.egrad_atoms)
        .map(|(atom, e)| egrad_to_rgrad_spd(atom, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProductTangent { stiefel, spd })
}

/// Outcome counters of one coding pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScStats {
    pub max_iter_columns: usize,
    pub failed_columns: usize,
    pub worst_kkt: f64,
}

/// One pass over the columns in ascending order, each warm-started from its
/// current value and solved with the other columns held fixed.
pub fn solve_sc_subproblem(
    state: &ModelState,
    data: &LabeledDataset,
    graphs: &GraphSet,
    hyper: &HyperParams,
) -> Result<(CoefficientMatrix, ScStats)> {
    let proj = ProjectedSamples::new(state.u.matrix(), data)?;
    let mut codes = state.codes.clone();
    let mut stats = ScStats::default();
    for n in 0..data.len() {
        let col = ScColumn::new(n, &proj, &state.dict, data, &codes, graphs, hyper);
        let h = state.dict.num_atoms();
        let cost = |a: &DVector<f64>| col.value(a).unwrap_or(f64::INFINITY);
        let grad = |a: &DVector<f64>| col.gradient(a).unwrap_or_else(|_| DVector::zeros(h));
        let start = codes.column(n);
        let mut res = spg::solve(cost, grad, &start, &hyper.spg)?;
        // The floor branch has zero gradient, so a column whose own block is
        // exactly zero is a KKT point even when the objective can drop. Retry
        // from a uniform own block and keep the better of the two.
        let own = state.dict.class_range(data.label(n));
        if start.as_vector().rows(own.start, own.len()).iter().all(|&x| x == 0.0) {
            let mut alt = start.as_vector().clone();
            alt.rows_mut(own.start, own.len()).fill(1.0 / own.len() as f64);
            let retry = spg::solve(cost, grad, &NonnegVector::new(alt)?, &hyper.spg)?;
            if retry.cost < res.cost {
                res = retry;
            }
        }
        match res.status {
            SpgStatus::Success => {}
            SpgStatus::MaxIters => stats.max_iter_columns += 1,
            SpgStatus::LineSearchFailed => stats.failed_columns += 1,
        }
        stats.worst_kkt = stats.worst_kkt.max(res.kkt);
        codes.set_column(n, &res.x);
    }
    Ok((codes, stats))
}

pub fn train(data: &LabeledDataset, hyper: &HyperParams, seed: u64) -> Result<JdrdlModel> {
    train_with_report(data, hyper, seed).map(|(m, _)| m)
}

pub fn train_with_report(
    data: &LabeledDataset,
    hyper: &HyperParams,
    seed: u64,
) -> Result<(JdrdlModel, TrainReport)> {
    hyper.validate()?;
    if hyper.learn_projection && hyper.d >= data.dim() {
        return Err(Error::InvalidArgument(format!(
            "reduced dimension {} must be below the ambient dimension {}",
            hyper.d,
            data.dim()
        )));
    }
    let graphs = if hyper.lambda_a == 0.0 && hyper.lambda_u == 0.0 {
        GraphSet::empty(data.len())
    } else {
        build_graphs(data, hyper.v_w, hyper.v_b)?
    };
    let mut report = TrainReport::default();
    if let Some(w) = unbounded_coding_witness(data, &graphs, hyper) {
        report.warnings.push(w);
    }
    let mut rng = random::seeded(seed);
    let u = initial_projection(data, hyper.d, hyper.projection_init, &mut rng)?;
    let dict = initial_dictionary(
        data,
        &u,
        hyper.atoms_per_class,
        hyper.atom_init_noise,
        &mut rng,
    )?;
    let codes = initial_codes(data, &dict);
    let mut state = ModelState { u, dict, codes };
    let eval = |s: &ModelState| full_objective(s.u.matrix(), &s.dict, &s.codes, data, &graphs, hyper);

    report.objective.push((HalfStep::Init, eval(&state)?));
    let (codes, stats) = solve_sc_subproblem(&state, data, &graphs, hyper)?;
    note_sc(&mut report, 0, stats);
    state.codes = codes;
    let first = eval(&state)?;
    let mut prev = first.total;
    report.objective.push((HalfStep::InitialCoding, first));

    for round in 1..=hyper.outer_rounds {
        let (next, status) = solve_dl_subproblem(&state, data, &graphs, hyper)?;
        if status == RcgStatus::Stalled {
            report
                .warnings
                .push(format!("round {round}: dictionary step stalled"));
        }
        state = next;
        report.objective.push((HalfStep::Dictionary(round), eval(&state)?));

        let (codes, stats) = solve_sc_subproblem(&state, data, &graphs, hyper)?;
        note_sc(&mut report, round, stats);
        state.codes = codes;
        let now = eval(&state)?;
        report.objective.push((HalfStep::Coding(round), now));
        report.rounds = round;

        let change = (prev - now.total).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = now.total;
        if change < hyper.rel_tol {
            break;
        }
    }

    let class_means = (0..data.num_classes())
        .map(|k| state.codes.mean_of(&data.class_indices(k)))
        .collect();
    let model = JdrdlModel {
        u: state.u,
        dict: state.dict,
        a_train: state.codes,
        class_means,
        hyper: hyper.clone(),
    };
    Ok((model, report))
}

/// The code terms `λ_2 ||A||² + λ_a tr(A L Aᵀ)` form a quadratic in each row
/// of `A`. When it is negative along a nonnegative direction `v`, scaling
/// `v` drives the objective to minus infinity, since the reconstruction
/// term only grows like a squared logarithm. Checks the single columns and
/// the class indicators.
fn unbounded_coding_witness(data: &LabeledDataset, graphs: &GraphSet, hyper: &HyperParams) -> Option<String> {
    if hyper.lambda_a == 0.0 || graphs.is_empty() {
        return None;
    }
    let g = &graphs.g_bin;
    let n = graphs.len();
    let form = |members: &[usize]| {
        let inside = |q: usize| members.binary_search(&q).is_ok();
        // vᵀ L v for an indicator v is the weight crossing the set boundary
        let cut: f64 = members
            .iter()
            .map(|&p| (0..n).filter(|&q| !inside(q)).map(|q| g[(p, q)]).sum::<f64>())
            .sum();
        hyper.lambda_2 * members.len() as f64 + hyper.lambda_a * cut
    };
    for p in 0..n {
        if form(&[p]) < 0.0 {
            return Some(format!(
                "code graph makes the coding objective unbounded below along sample {p} \
                 (lambda_2 too small for lambda_a)"
            ));
        }
    }
    for k in 0..data.num_classes() {
        if form(&data.class_indices(k)) < 0.0 {
            return Some(format!(
                "code graph makes the coding objective unbounded below along class {k} \
                 (lambda_2 too small for lambda_a)"
            ));
        }
    }
    None
}

fn note_sc(report: &mut TrainReport, round: usize, stats: ScStats) {
    if stats.max_iter_columns > 0 {
        report.warnings.push(format!(
            "round {round}: {} coding columns hit the iteration limit (worst KKT {:.2e})",
            stats.max_iter_columns, stats.worst_kkt
        ));
    }
    if stats.failed_columns > 0 {
        report.warnings.push(format!(
            "round {round}: line search failed on {} coding columns",
            stats.failed_columns
        ));
    }
}
