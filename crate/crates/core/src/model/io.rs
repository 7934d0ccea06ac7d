//! Model container: a JSON document with a format tag and version. Matrices
//! are stored row-major; floats survive the round trip bit-for-bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientMatrix, Dictionary, HyperParams, JdrdlModel};
use crate::spd::SpdMatrix;
use crate::stiefel::StiefelPoint;
use crate::write_atomic;

pub const MODEL_FORMAT: &str = "jdrdl-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    m: usize,
    d: usize,
    num_classes: usize,
    atoms_per_class: Vec<usize>,
    floor: f64,
    u: Vec<f64>,
    atoms: Vec<Vec<f64>>,
    num_train: usize,
    a_train: Vec<f64>,
    class_means: Vec<Vec<f64>>,
    hyper: HyperParams,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::InvalidArgument(format!(
            "{what}: expected {} entries, found {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

pub fn model_to_json(model: &JdrdlModel) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        m: model.ambient_dim(),
        d: model.reduced_dim(),
        num_classes: model.num_classes(),
        atoms_per_class: model.dict.atoms_per_class(),
        floor: model.dict.floor(),
        u: row_major(model.u.matrix()),
        atoms: model.dict.atoms().iter().map(|a| row_major(a.matrix())).collect(),
        num_train: model.a_train.num_samples(),
        a_train: row_major(model.a_train.matrix()),
        class_means: model.class_means.iter().map(|v| v.as_slice().to_vec()).collect(),
        hyper: model.hyper.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<JdrdlModel> {
    let header: Header = serde_json::from_str(text)?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Format {
            offset: 0,
            message: format!("not a model file (format tag {:?})", header.format),
        });
    }
    if header.version != MODEL_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: MODEL_VERSION,
        });
    }
    let f: ModelFile = serde_json::from_str(text)?;
    if f.atoms_per_class.len() != f.num_classes || f.class_means.len() != f.num_classes {
        return Err(Error::InvalidArgument("class count disagrees with class blocks".into()));
    }
    let u = StiefelPoint::new(from_row_major(f.m, f.d, &f.u, "u")?)?;
    let mut atoms = f.atoms.iter();
    let mut sub_dicts = Vec::with_capacity(f.num_classes);
    for &h in &f.atoms_per_class {
        let mut sd = Vec::with_capacity(h);
        for _ in 0..h {
            let raw = atoms
                .next()
                .ok_or_else(|| Error::InvalidArgument("fewer atoms than declared".into()))?;
            sd.push(SpdMatrix::new(from_row_major(f.d, f.d, raw, "atom")?)?);
        }
        sub_dicts.push(sd);
    }
    if atoms.next().is_some() {
        return Err(Error::InvalidArgument("more atoms than declared".into()));
    }
    let dict = Dictionary::with_floor(sub_dicts, f.floor)?;
    let h = dict.num_atoms();
    let a_train = CoefficientMatrix::new(from_row_major(h, f.num_train, &f.a_train, "a_train")?)?;
    let class_means = f
        .class_means
        .iter()
        .map(|v| {
            if v.len() == h {
                Ok(DVector::from_column_slice(v))
            } else {
                Err(Error::InvalidArgument("class mean length differs from atom count".into()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    f.hyper.validate()?;
    Ok(JdrdlModel {
        u,
        dict,
        a_train,
        class_means,
        hyper: f.hyper,
    })
}

pub fn save_model(model: &JdrdlModel, path: &Path) -> Result<()> {
    let text = model_to_json(model)?;
    write_atomic(path, text.as_bytes())
}

pub fn load_model(path: &Path) -> Result<JdrdlModel> {
    model_from_json(&fs::read_to_string(path)?)
}
