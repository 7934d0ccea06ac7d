//! The joint dimensionality-reduction / dictionary-learning model.

mod dataset;
mod dictionary;
mod graph;
pub mod io;
pub mod objective;
mod train;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rcg::RcgOptions;
use crate::spg::SpgOptions;
use crate::stiefel::StiefelPoint;

pub use dataset::LabeledDataset;
pub use dictionary::{CoefficientMatrix, Conic, Dictionary, FLOOR_REL};
pub use graph::{build_graphs, graphs_from_distances, pairwise_airm, GraphSet};
pub use objective::{full_objective, obj_ja, obj_jd, obj_ju, obj_regularizers, ObjectiveBreakdown};
pub use train::{
    initial_dictionary, initial_projection, solve_dl_subproblem, solve_sc_subproblem, train,
    train_with_report, HalfStep, ModelState, ScStats, TrainReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionInit {
    /// Top-`d` eigenvectors of the arithmetic mean of the training samples.
    MeanEigen,
    /// Random orthonormal columns drawn from the training seed.
    Random,
    /// The first `d` coordinate axes.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Weight on the sum of the codes.
    pub lambda_1: f64,
    /// Weight on the squared Frobenius norm of the codes.
    pub lambda_2: f64,
    /// Weight on the code graph term.
    pub lambda_a: f64,
    /// Weight on the projection graph term.
    pub lambda_u: f64,
    /// Weight on the cross-class suppression term inside the reconstruction error.
    pub lambda_d_cross: f64,
    /// Weight on the atom trace penalty.
    pub lambda_d_reg: f64,
    /// Weight of the code-to-class-mean distance in the classifier residual.
    pub sigma: f64,
    pub v_w: usize,
    pub v_b: usize,
    /// Reduced dimension.
    pub d: usize,
    /// Atoms per class; `None` uses one atom per training sample of the class.
    pub atoms_per_class: Option<usize>,
    pub outer_rounds: usize,
    /// Alternation stops once the relative change of the objective over a
    /// full round drops below this.
    pub rel_tol: f64,
    pub projection_init: ProjectionInit,
    /// When false, `U` stays at its initial value (dictionary learning only).
    pub learn_projection: bool,
    /// Frobenius norm of the tangent noise used to spread atoms around the
    /// class mean when there are fewer atoms than samples.
    pub atom_init_noise: f64,
    pub rcg: RcgOptions,
    pub spg: SpgOptions,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda_1: 1e-4,
            lambda_2: 1e-3,
            lambda_a: 1e-4,
            lambda_u: 1e-3,
            lambda_d_cross: 1e-3,
            lambda_d_reg: 1e-3,
            sigma: 1.0,
            v_w: 9,
            v_b: 9,
            d: 16,
            atoms_per_class: None,
            outer_rounds: 10,
            rel_tol: 1e-5,
            projection_init: ProjectionInit::MeanEigen,
            learn_projection: true,
            atom_init_noise: 0.1,
            rcg: RcgOptions::default(),
            spg: SpgOptions::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            ("lambda_1", self.lambda_1),
            ("lambda_2", self.lambda_2),
            ("lambda_a", self.lambda_a),
            ("lambda_u", self.lambda_u),
            ("lambda_d_cross", self.lambda_d_cross),
            ("lambda_d_reg", self.lambda_d_reg),
            ("sigma", self.sigma),
        ];
        for (name, v) in lambdas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be positive".into()));
        }
        if self.atoms_per_class == Some(0) {
            return Err(Error::InvalidArgument("atoms_per_class must be positive".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidArgument("rel_tol must be >= 0".into()));
        }
        self.rcg.validate()?;
        self.spg.validate()
    }
}

/// A trained model.
#[derive(Clone, Debug)]
pub struct JdrdlModel {
    pub u: StiefelPoint,
    pub dict: Dictionary,
    pub a_train: CoefficientMatrix,
    /// Mean training code of each class.
    pub class_means: Vec<DVector<f64>>,
    pub hyper: HyperParams,
}

impl JdrdlModel {
    pub fn ambient_dim(&self) -> usize {
        self.u.ambient_dim()
    }

    pub fn reduced_dim(&self) -> usize {
        self.u.reduced_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.dict.num_classes()
    }
}
