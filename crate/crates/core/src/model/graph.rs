//! Intra-class and inter-class neighbourhood graphs over the training set.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::LabeledDataset;
use crate::spd::airm_dist_sq;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSet {
    /// Symmetric 0/1 graph of same-class nearest neighbours.
    pub g_w: DMatrix<f64>,
    /// Symmetric 0/1 graph of different-class nearest neighbours.
    pub g_b: DMatrix<f64>,
    /// `g_w - g_b`, weights the code term.
    pub g_bin: DMatrix<f64>,
    /// Affinity weighting the projection term; `g_w - g_b` as well.
    pub g_rd: DMatrix<f64>,
}

impl GraphSet {
    /// All-zero graphs over `n` samples.
    pub fn empty(n: usize) -> Self {
        let z = DMatrix::zeros(n, n);
        GraphSet {
            g_w: z.clone(),
            g_b: z.clone(),
            g_bin: z.clone(),
            g_rd: z,
        }
    }

    pub fn len(&self) -> usize {
        self.g_w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.g_w.nrows() == 0
    }

    /// Sparse view of `g_bin` row `p`: `(q, weight)` for nonzero entries.
    pub(crate) fn bin_neighbours(&self, p: usize) -> Vec<(usize, f64)> {
        nonzero_row(&self.g_bin, p)
    }

    /// Unordered pairs `p < q` with nonzero `g_rd`.
    pub(crate) fn rd_edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut edges = Vec::new();
        for q in 0..n {
            for p in 0..q {
                let w = self.g_rd[(p, q)];
                if w != 0.0 {
                    edges.push((p, q, w));
                }
            }
        }
        edges
    }
}

fn nonzero_row(g: &DMatrix<f64>, p: usize) -> Vec<(usize, f64)> {
    (0..g.ncols())
        .filter_map(|q| {
            let w = g[(p, q)];
            (w != 0.0).then_some((q, w))
        })
        .collect()
}

/// Pairwise squared AIRM distances.
pub fn pairwise_airm(data: &LabeledDataset) -> Result<DMatrix<f64>> {
    let n = data.len();
    let mut dist = DMatrix::zeros(n, n);
    for q in 0..n {
        for p in 0..q {
            let v = airm_dist_sq(data.sample(p), data.sample(q))?;
            dist[(p, q)] = v;
            dist[(q, p)] = v;
        }
    }
    Ok(dist)
}

/// Builds the neighbour graphs from precomputed distances.
///
/// `g_w(p, q) = 1` when `p` is among the `v_w` nearest same-class samples of
/// `q` or vice versa; `g_b` likewise over different-class samples. Ties go
/// to the lower index.
pub fn graphs_from_distances(
    dist: &DMatrix<f64>,
    labels: &[usize],
    v_w: usize,
    v_b: usize,
) -> Result<GraphSet> {
    let n = labels.len();
    let mut g_w = DMatrix::zeros(n, n);
    let mut g_b = DMatrix::zeros(n, n);
    for q in 0..n {
        let mut same: Vec<usize> = (0..n).filter(|&p| p != q && labels[p] == labels[q]).collect();
        let mut other: Vec<usize> = (0..n).filter(|&p| labels[p] != labels[q]).collect();
        if v_w > same.len() {
            return Err(Error::InvalidArgument(format!(
                "v_w = {v_w} exceeds the {} same-class neighbours of sample {q}",
                same.len()
            )));
        }
        if v_b > other.len() {
            return Err(Error::InvalidArgument(format!(
                "v_b = {v_b} exceeds the {} other-class neighbours of sample {q}",
                other.len()
            )));
        }
        let by_dist = |a: &usize, b: &usize| dist[(*a, q)].total_cmp(&dist[(*b, q)]).then(a.cmp(b));
        same.sort_by(by_dist);
        other.sort_by(by_dist);
        for &p in &same[..v_w] {
            g_w[(p, q)] = 1.0;
            g_w[(q, p)] = 1.0;
        }
        for &p in &other[..v_b] {
            g_b[(p, q)] = 1.0;
            g_b[(q, p)] = 1.0;
        }
    }
    let g_bin = &g_w - &g_b;
    Ok(GraphSet {
        g_w,
        g_b,
        g_rd: g_bin.clone(),
        g_bin,
    })
}

pub fn build_graphs(data: &LabeledDataset, v_w: usize, v_b: usize) -> Result<GraphSet> {
    let dist = pairwise_airm(data)?;
    graphs_from_distances(&dist, data.labels(), v_w, v_b)
}
