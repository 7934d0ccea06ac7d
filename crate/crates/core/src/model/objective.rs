//! Objective terms of the joint model and their gradients.
//!
//! The full objective is
//!
//! ```text
//! F = J_d + λ_a J_a + λ_u J_u + λ_1 R_s + λ_2 R_r + λ_reg R_d
//! J_d = ½ Σ_n [ d²(M_n, D⊗a_n) + d²(M_n, D_k⊗a_n^k) ] + λ_cross Σ_n Σ_{j≠k} ||D_j⊗a_n^j||_F²
//! J_a = Σ_p Σ_q ½ ||a_p - a_q||² G_bin(p, q)
//! J_u = Σ_p Σ_q ½ d²(M_p, M_q) G_rd(p, q)
//! ```
//!
//! with `M_n = Uᵀ X_n U` and `k` the label of sample `n`. `R_s` is the sum
//! of the (nonnegative) codes, `R_r` their squared Frobenius norm and `R_d`
//! the total atom trace.
//!
//! Distance gradients come from [`dist_sq_with_grads`]; everything is
//! routed through the projected samples so that a single eigendecomposition
//! of each `M_n` serves all terms.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::model::{CoefficientMatrix, Dictionary, GraphSet, HyperParams, LabeledDataset};
use crate::spd::{add_scaled, dist_sq_only, dist_sq_with_grads, sym_eig_unchecked, symmetrize};

/// `M_n = Uᵀ X_n U` for every sample, with `X_n U` and `M_n^{-1/2}` cached.
#[derive(Clone, Debug)]
pub struct ProjectedSamples {
    pub xu: Vec<DMatrix<f64>>,
    pub m: Vec<DMatrix<f64>>,
    pub m_inv_sqrt: Vec<DMatrix<f64>>,
}

impl ProjectedSamples {
    pub fn new(u: &DMatrix<f64>, data: &LabeledDataset) -> Result<Self> {
        if u.nrows() != data.dim() {
            return Err(dim_mismatch(data.dim(), u.nrows()));
        }
        let n = data.len();
        let mut xu = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut m_inv_sqrt = Vec::with_capacity(n);
        for x in data.samples() {
            let p = x.matrix() * u;
            let mm = symmetrize(&(u.transpose() * &p));
            let eig = sym_eig_unchecked(&mm);
            if !(eig.min() > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    eigenvalue: eig.min(),
                    floor: 0.0,
                });
            }
            m_inv_sqrt.push(eig.map(|v| 1.0 / v.sqrt()));
            xu.push(p);
            m.push(mm);
        }
        Ok(ProjectedSamples { xu, m, m_inv_sqrt })
    }
}

/// Reconstruction part of `J_d` for one sample.
pub(crate) struct ReconTerms {
    pub value: f64,
    /// Euclidean gradient w.r.t. `M_n`.
    pub g_m: DMatrix<f64>,
    /// Gradient w.r.t. the full combination (None when degenerate).
    pub g_full: Option<DMatrix<f64>>,
    /// Gradient w.r.t. the own-class combination (None when degenerate).
    pub g_class: Option<DMatrix<f64>>,
    /// `(j, D_j ⊗ a^j)` for every foreign class with a nonzero block.
    pub cross: Vec<(usize, DMatrix<f64>)>,
}

pub(crate) fn recon_value(
    m_inv_sqrt: &DMatrix<f64>,
    dict: &Dictionary,
    a: &[f64],
    class: usize,
    lambda_cross: f64,
) -> Result<f64> {
    let full = dict.conic_raw(a, 0..dict.num_atoms());
    let own = dict.conic_raw(a, dict.class_range(class));
    let mut v = 0.5 * dist_sq_only(m_inv_sqrt, &full.matrix)?;
    v += 0.5 * dist_sq_only(m_inv_sqrt, &own.matrix)?;
    if lambda_cross != 0.0 {
        for j in (0..dict.num_classes()).filter(|&j| j != class) {
            let c = dict.weighted_sum(a, dict.class_range(j));
            v += lambda_cross * c.norm_squared();
        }
    }
    Ok(v)
}

pub(crate) fn recon_terms(
    m_inv_sqrt: &DMatrix<f64>,
    dict: &Dictionary,
    a: &[f64],
    class: usize,
    lambda_cross: f64,
) -> Result<ReconTerms> {
    let full = dict.conic_raw(a, 0..dict.num_atoms());
    let own = dict.conic_raw(a, dict.class_range(class));
    let gf = dist_sq_with_grads(m_inv_sqrt, &full.matrix)?;
    let go = dist_sq_with_grads(m_inv_sqrt, &own.matrix)?;
    let mut value = 0.5 * (gf.dist_sq + go.dist_sq);
    let g_m = (gf.grad_first + go.grad_first) * 0.5;
    let g_full = (!full.degenerate).then(|| gf.grad_second * 0.5);
    let g_class = (!own.degenerate).then(|| go.grad_second * 0.5);
    let mut cross = Vec::new();
    if lambda_cross != 0.0 {
        for j in (0..dict.num_classes()).filter(|&j| j != class) {
            let r = dict.class_range(j);
            if a[r.clone()].iter().all(|&x| x == 0.0) {
                continue;
            }
            let c = dict.weighted_sum(a, r);
            value += lambda_cross * c.norm_squared();
            cross.push((j, c));
        }
    }
    Ok(ReconTerms {
        value,
        g_m,
        g_full,
        g_class,
        cross,
    })
}

fn check_shapes(
    dict: &Dictionary,
    codes: &CoefficientMatrix,
    data: &LabeledDataset,
) -> Result<()> {
    if codes.num_atoms() != dict.num_atoms() {
        return Err(dim_mismatch(dict.num_atoms(), codes.num_atoms()));
    }
    if codes.num_samples() != data.len() {
        return Err(dim_mismatch(data.len(), codes.num_samples()));
    }
    if dict.num_classes() != data.num_classes() {
        return Err(dim_mismatch(data.num_classes(), dict.num_classes()));
    }
    Ok(())
}

/// Discriminative reconstruction error `J_d`.
pub fn obj_jd(
    u: &DMatrix<f64>,
    dict: &Dictionary,
    codes: &CoefficientMatrix,
    data: &LabeledDataset,
    lambda_cross: f64,
) -> Result<f64> {
    check_shapes(dict, codes, data)?;
    let proj = ProjectedSamples::new(u, data)?;
    jd_from_projected(&proj, dict, codes, data, lambda_cross)
}

pub(crate) fn jd_from_projected(
    proj: &ProjectedSamples,
    dict: &Dictionary,
    codes: &CoefficientMatrix,
    data: &LabeledDataset,
    lambda_cross: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..data.len() {
        total += recon_value(
            &proj.m_inv_sqrt[n],
            dict,
            codes.column_slice(n),
            data.label(n),
            lambda_cross,
        )?;
    }
    Ok(total)
}

/// Graph term on the codes, summed over ordered pairs.
pub fn obj_ja(codes: &CoefficientMatrix, graphs: &GraphSet) -> f64 {
    let a = codes.matrix();
    let n = a.ncols();
    let mut total = 0.0;
    for p in 0..n {
        for (q, w) in graphs.bin_neighbours(p) {
            total += 0.5 * w * (a.column(p) - a.column(q)).norm_squared();
        }
    }
    total
}

/// Graph term on the projected samples.
pub fn obj_ju(u: &DMatrix<f64>, data: &LabeledDataset, graphs: &GraphSet) -> Result<f64> {
    let proj = ProjectedSamples::new(u, data)?;
    ju_from_projected(&proj, graphs)
}

pub(crate) fn ju_from_projected(proj: &ProjectedSamples, graphs: &GraphSet) -> Result<f64> {
    let mut total = 0.0;
    // ordered double sum = sum over unordered pairs, d² being symmetric
    for (p, q, w) in graphs.rd_edges() {
        total += w * dist_sq_only(&proj.m_inv_sqrt[p], &proj.m[q])?;
    }
    Ok(total)
}

/// `(R_s, R_r, R_d)`.
pub fn obj_regularizers(codes: &CoefficientMatrix, dict: &Dictionary) -> (f64, f64, f64) {
    let a = codes.matrix();
    let rs = a.sum();
    let rr = a.norm_squared();
    let rd = dict.atoms().iter().map(|d| d.trace()).sum();
    (rs, rr, rd)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveBreakdown {
    pub jd: f64,
    pub ja: f64,
    pub ju: f64,
    pub rs: f64,
    pub rr: f64,
    pub rd: f64,
    pub total: f64,
}

pub fn full_objective(
    u: &DMatrix<f64>,
    dict: &Dictionary,
    codes: &CoefficientMatrix,
    data: &LabeledDataset,
    graphs: &GraphSet,
    hyper: &HyperParams,
) -> Result<ObjectiveBreakdown> {
    check_shapes(dict, codes, data)?;
    let proj = ProjectedSamples::new(u, data)?;
    let jd = jd_from_projected(&proj, dict, codes, data, hyper.lambda_d_cross)?;
    let ja = obj_ja(codes, graphs);
    let ju = if hyper.lambda_u != 0.0 {
        ju_from_projected(&proj, graphs)?
    } else {
        0.0
    };
    let (rs, rr, rd) = obj_regularizers(codes, dict);
    let total = jd
        + hyper.lambda_a * ja
        + hyper.lambda_u * ju
        + hyper.lambda_1 * rs
        + hyper.lambda_2 * rr
        + hyper.lambda_d_reg * rd;
    Ok(ObjectiveBreakdown {
        jd,
        ja,
        ju,
        rs,
        rr,
        rd,
        total,
    })
}

/// Euclidean gradients of the dictionary-learning objective
/// `f(U, D) = J_d + λ_u J_u + λ_reg R_d` with the codes held fixed.
#[derive(Clone, Debug)]
pub struct DlGradient {
    pub value: f64,
    pub egrad_u: DMatrix<f64>,
    pub egrad_atoms: Vec<DMatrix<f64>>,
}

/// Dictionary-learning sub-problem with fixed codes.
pub struct DlObjective<'a> {
    pub data: &'a LabeledDataset,
    pub graphs: &'a GraphSet,
    pub codes: &'a CoefficientMatrix,
    pub hyper: &'a HyperParams,
    rd_edges: Vec<(usize, usize, f64)>,
}

impl<'a> DlObjective<'a> {
    pub fn new(
        data: &'a LabeledDataset,
        graphs: &'a GraphSet,
        codes: &'a CoefficientMatrix,
        hyper: &'a HyperParams,
    ) -> Self {
        let rd_edges = if hyper.lambda_u != 0.0 {
            graphs.rd_edges()
        } else {
            Vec::new()
        };
        DlObjective {
            data,
            graphs,
            codes,
            hyper,
            rd_edges,
        }
    }

    pub fn value(&self, u: &DMatrix<f64>, dict: &Dictionary) -> Result<f64> {
        check_shapes(dict, self.codes, self.data)?;
        let proj = ProjectedSamples::new(u, self.data)?;
        let mut v = jd_from_projected(&proj, dict, self.codes, self.data, self.hyper.lambda_d_cross)?;
        for &(p, q, w) in &self.rd_edges {
            v += self.hyper.lambda_u * w * dist_sq_only(&proj.m_inv_sqrt[p], &proj.m[q])?;
        }
        let rd: f64 = dict.atoms().iter().map(|d| d.trace()).sum();
        Ok(v + self.hyper.lambda_d_reg * rd)
    }

    pub fn gradient(&self, u: &DMatrix<f64>, dict: &Dictionary) -> Result<DlGradient> {
        check_shapes(dict, self.codes, self.data)?;
        let data = self.data;
        let hyper = self.hyper;
        let proj = ProjectedSamples::new(u, data)?;
        let dd = dict.dim();
        let h_total = dict.num_atoms();
        let mut g_m: Vec<DMatrix<f64>> = vec![DMatrix::zeros(dd, dd); data.len()];
        let mut egrad_atoms = vec![DMatrix::identity(dd, dd) * hyper.lambda_d_reg; h_total];
        let mut value: f64 = hyper.lambda_d_reg * dict.atoms().iter().map(|d| d.trace()).sum::<f64>();

        for n in 0..data.len() {
            let a = self.codes.column_slice(n);
            let k = data.label(n);
            let t = recon_terms(&proj.m_inv_sqrt[n], dict, a, k, hyper.lambda_d_cross)?;
            value += t.value;
            g_m[n] += &t.g_m;
            if let Some(gs) = &t.g_full {
                for h in 0..h_total {
                    if a[h] != 0.0 {
                        add_scaled(&mut egrad_atoms[h], a[h], gs);
                    }
                }
            }
            if let Some(gs) = &t.g_class {
                for h in dict.class_range(k) {
                    if a[h] != 0.0 {
                        add_scaled(&mut egrad_atoms[h], a[h], gs);
                    }
                }
            }
            for (j, c) in &t.cross {
                for h in dict.class_range(*j) {
                    if a[h] != 0.0 {
                        add_scaled(&mut egrad_atoms[h], 2.0 * hyper.lambda_d_cross * a[h], c);
                    }
                }
            }
        }

        for &(p, q, w) in &self.rd_edges {
            let g = dist_sq_with_grads(&proj.m_inv_sqrt[p], &proj.m[q])?;
            let s = hyper.lambda_u * w;
            value += s * g.dist_sq;
            add_scaled(&mut g_m[p], s, &g.grad_first);
            add_scaled(&mut g_m[q], s, &g.grad_second);
        }

        // d/dU tr(G Uᵀ X U) = 2 X U G for symmetric G
        let mut egrad_u = DMatrix::zeros(u.nrows(), u.ncols());
        for n in 0..data.len() {
            egrad_u += &proj.xu[n] * &g_m[n] * 2.0;
        }
        Ok(DlGradient {
            value,
            egrad_u,
            egrad_atoms: egrad_atoms.iter().map(symmetrize).collect(),
        })
    }
}

/// Per-column sparse-coding objective: everything in the full objective that
/// depends on column `n`, with the other columns held fixed.
pub struct ScColumn<'a> {
    pub m_inv_sqrt: &'a DMatrix<f64>,
    pub dict: &'a Dictionary,
    pub class: usize,
    pub hyper: &'a HyperParams,
    /// `(a_q, G_bin(n, q))` for neighbours of `n`.
    pub neighbours: Vec<(DVector<f64>, f64)>,
}

impl<'a> ScColumn<'a> {
    pub fn new(
        n: usize,
        proj: &'a ProjectedSamples,
        dict: &'a Dictionary,
        data: &LabeledDataset,
        codes: &CoefficientMatrix,
        graphs: &GraphSet,
        hyper: &'a HyperParams,
    ) -> Self {
        let neighbours = if hyper.lambda_a != 0.0 {
            graphs
                .bin_neighbours(n)
                .into_iter()
                .filter(|&(q, _)| q != n)
                .map(|(q, w)| (codes.matrix().column(q).into_owned(), w))
                .collect()
        } else {
            Vec::new()
        };
        ScColumn {
            m_inv_sqrt: &proj.m_inv_sqrt[n],
            dict,
            class: data.label(n),
            hyper,
            neighbours,
        }
    }

    fn extra_value(&self, a: &DVector<f64>) -> f64 {
        let h = self.hyper;
        let mut v = h.lambda_1 * a.sum() + h.lambda_2 * a.norm_squared();
        for (aq, w) in &self.neighbours {
            v += h.lambda_a * w * (a - aq).norm_squared();
        }
        v
    }

    pub fn value(&self, a: &DVector<f64>) -> Result<f64> {
        let r = recon_value(
            self.m_inv_sqrt,
            self.dict,
            a.as_slice(),
            self.class,
            self.hyper.lambda_d_cross,
        )?;
        Ok(r + self.extra_value(a))
    }

    pub fn gradient(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.hyper;
        let t = recon_terms(
            self.m_inv_sqrt,
            self.dict,
            a.as_slice(),
            self.class,
            h.lambda_d_cross,
        )?;
        let atoms = self.dict.atoms();
        let mut g = DVector::from_element(a.len(), h.lambda_1);
        g.axpy(2.0 * h.lambda_2, a, 1.0);
        for (aq, w) in &self.neighbours {
            g += (a - aq) * (2.0 * h.lambda_a * w);
        }
        if let Some(gs) = &t.g_full {
            for (hh, atom) in atoms.iter().enumerate() {
                g[hh] += gs.dot(atom.matrix());
            }
        }
        if let Some(gs) = &t.g_class {
            for hh in self.dict.class_range(self.class) {
                g[hh] += gs.dot(atoms[hh].matrix());
            }
        }
        for (j, c) in &t.cross {
            for hh in self.dict.class_range(*j) {
                g[hh] += 2.0 * h.lambda_d_cross * c.dot(atoms[hh].matrix());
            }
        }
        // foreign blocks that are exactly zero still have a gradient from
        // the cross term: 2 λ <C_j, D_h> with C_j = 0, i.e. zero
        Ok(g)
    }
}

/// Test-time coding objective `½ d²(M, D⊗a) + λ_1 ||a||_1` on `a >= 0`.
pub struct CodingObjective<'a> {
    pub m_inv_sqrt: DMatrix<f64>,
    pub dict: &'a Dictionary,
    pub lambda_1: f64,
}

impl<'a> CodingObjective<'a> {
    pub fn new(m_inv_sqrt: DMatrix<f64>, dict: &'a Dictionary, lambda_1: f64) -> Self {
        CodingObjective {
            m_inv_sqrt,
            dict,
            lambda_1,
        }
    }

    pub fn value(&self, a: &DVector<f64>) -> Result<f64> {
        let s = self.dict.conic_raw(a.as_slice(), 0..self.dict.num_atoms());
        Ok(0.5 * dist_sq_only(&self.m_inv_sqrt, &s.matrix)? + self.lambda_1 * a.sum())
    }

    pub fn gradient(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let s = self.dict.conic_raw(a.as_slice(), 0..self.dict.num_atoms());
        let mut g = DVector::from_element(a.len(), self.lambda_1);
        if !s.degenerate {
            let dg = dist_sq_with_grads(&self.m_inv_sqrt, &s.matrix)?;
            for (h, atom) in self.dict.atoms().iter().enumerate() {
                g[h] += 0.5 * dg.grad_second.dot(atom.matrix());
            }
        }
        Ok(g)
    }
}
