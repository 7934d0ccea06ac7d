//! Joint dimensionality reduction and dictionary learning for data living on
//! the manifold of symmetric positive definite matrices.
//!
//! Samples `X_n` (m x m SPD) are mapped to `U^T X_n U` by an orthonormal
//! `U` (m x d) and sparsely coded, with nonnegative codes, over a
//! class-blocked dictionary of d x d SPD atoms. `U` and the atoms are learned
//! jointly by Riemannian conjugate gradient on the product of the Stiefel
//! manifold and copies of the SPD manifold; the codes are learned column by
//! column with a spectral projected gradient solver. Classification picks
//! the class with the smallest reconstruction residual.

pub mod check;
pub mod classifier;
pub mod error;
pub mod features;
pub mod model;
pub mod random;
pub mod rcg;
pub mod spd;
pub mod spg;
pub mod stiefel;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}
