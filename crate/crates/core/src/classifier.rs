//! Residual-based classification with a learned model, plus the nearest
//! neighbour and sparse-representation baselines.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::model::objective::CodingObjective;
use crate::model::{Dictionary, JdrdlModel, LabeledDataset};
use crate::spd::{airm_dist_sq, dist_sq_only, stein_dist_sq, SpdMatrix};
use crate::spg::{self, NonnegVector, SpgOptions, SpgStatus};

#[derive(Clone, Debug)]
pub struct Encoding {
    pub code: NonnegVector,
    /// The code is all zero, so the reconstruction sits on the floor.
    pub degenerate: bool,
    pub kkt: f64,
    pub status: SpgStatus,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub label: usize,
    pub residuals: Vec<f64>,
    pub code: NonnegVector,
    pub degenerate: bool,
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `argmin_{a >= 0} ½ d²(M, D⊗a) + λ_1 Σ a`, started from the uniform code.
pub fn encode(m: &SpdMatrix, dict: &Dictionary, lambda_1: f64, opts: &SpgOptions) -> Result<Encoding> {
    if m.dim() != dict.dim() {
        return Err(dim_mismatch(dict.dim(), m.dim()));
    }
    let h = dict.num_atoms();
    let obj = CodingObjective::new(m.inv_sqrt(), dict, lambda_1);
    let x0 = NonnegVector::new(DVector::from_element(h, 1.0 / h as f64))?;
    let res = spg::solve(
        |a| obj.value(a).unwrap_or(f64::INFINITY),
        |a| obj.gradient(a).unwrap_or_else(|_| DVector::zeros(h)),
        &x0,
        opts,
    )?;
    Ok(Encoding {
        degenerate: res.x.is_zero(),
        code: res.x,
        kkt: res.kkt,
        status: res.status,
    })
}

/// Projects a sample into the model's reduced space.
pub fn project(model: &JdrdlModel, x: &SpdMatrix) -> Result<SpdMatrix> {
    if x.dim() != model.ambient_dim() {
        return Err(dim_mismatch(model.ambient_dim(), x.dim()));
    }
    x.congruence(model.u.matrix())
}

pub fn encode_test(model: &JdrdlModel, x: &SpdMatrix) -> Result<Encoding> {
    let m = project(model, x)?;
    encode(&m, &model.dict, model.hyper.lambda_1, &model.hyper.spg)
}

/// `e_k = d²(M, D_k⊗â^k) + σ ||â - m_k||²` for a projected sample `M`.
pub fn residual(model: &JdrdlModel, projected: &SpdMatrix, code: &NonnegVector, k: usize) -> Result<f64> {
    if k >= model.num_classes() {
        return Err(Error::InvalidArgument(format!("no class {k}")));
    }
    class_residual(
        &model.dict,
        &projected.inv_sqrt(),
        code,
        k,
        model.hyper.sigma,
        Some(&model.class_means[k]),
    )
}

fn class_residual(
    dict: &Dictionary,
    m_inv_sqrt: &nalgebra::DMatrix<f64>,
    code: &NonnegVector,
    k: usize,
    sigma: f64,
    mean: Option<&DVector<f64>>,
) -> Result<f64> {
    if code.len() != dict.num_atoms() {
        return Err(dim_mismatch(dict.num_atoms(), code.len()));
    }
    let s = dict.conic_raw(code.as_vector().as_slice(), dict.class_range(k));
    let mut e = dist_sq_only(m_inv_sqrt, &s.matrix)?;
    if let Some(mk) = mean {
        if sigma != 0.0 {
            e += sigma * (code.as_vector() - mk).norm_squared();
        }
    }
    Ok(e)
}

pub fn predict(model: &JdrdlModel, x: &SpdMatrix) -> Result<Prediction> {
    let m = project(model, x)?;
    let enc = encode(&m, &model.dict, model.hyper.lambda_1, &model.hyper.spg)?;
    let m_inv_sqrt = m.inv_sqrt();
    let residuals = (0..model.num_classes())
        .map(|k| {
            class_residual(
                &model.dict,
                &m_inv_sqrt,
                &enc.code,
                k,
                model.hyper.sigma,
                Some(&model.class_means[k]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prediction {
        label: argmin(&residuals),
        residuals,
        code: enc.code,
        degenerate: enc.degenerate,
    })
}

pub fn predict_batch(model: &JdrdlModel, xs: &[SpdMatrix]) -> Result<Vec<Prediction>> {
    xs.iter().map(|x| predict(model, x)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Airm,
    Stein,
}

/// Label of the nearest training sample; the lowest index wins ties.
pub fn nn_predict(train: &LabeledDataset, x: &SpdMatrix, metric: Metric) -> Result<usize> {
    if x.dim() != train.dim() {
        return Err(dim_mismatch(train.dim(), x.dim()));
    }
    let dists = train
        .samples()
        .iter()
        .map(|s| match metric {
            Metric::Airm => airm_dist_sq(x, s),
            Metric::Stein => stein_dist_sq(x, s),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(train.label(argmin(&dists)))
}

/// Sparse-representation classifier over the raw training samples: one joint
/// code over all samples, class residuals from the class sub-codes.
#[derive(Clone, Debug)]
pub struct SrcClassifier {
    dict: Dictionary,
    lambda_1: f64,
    spg: SpgOptions,
}

impl SrcClassifier {
    pub fn new(train: &LabeledDataset, lambda_1: f64, spg: SpgOptions) -> Result<Self> {
        let sub_dicts = (0..train.num_classes())
            .map(|k| {
                train
                    .class_indices(k)
                    .into_iter()
                    .map(|i| train.sample(i).clone())
                    .collect()
            })
            .collect();
        Ok(SrcClassifier {
            dict: Dictionary::new(sub_dicts)?,
            lambda_1,
            spg,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn residuals(&self, x: &SpdMatrix) -> Result<Vec<f64>> {
        let enc = encode(x, &self.dict, self.lambda_1, &self.spg)?;
        let x_inv_sqrt = x.inv_sqrt();
        (0..self.dict.num_classes())
            .map(|k| class_residual(&self.dict, &x_inv_sqrt, &enc.code, k, 0.0, None))
            .collect()
    }

    pub fn predict(&self, x: &SpdMatrix) -> Result<usize> {
        Ok(argmin(&self.residuals(x)?))
    }
}

pub fn src_predict(train: &LabeledDataset, x: &SpdMatrix, lambda_1: f64) -> Result<usize> {
    SrcClassifier::new(train, lambda_1, SpgOptions::default())?.predict(x)
}
