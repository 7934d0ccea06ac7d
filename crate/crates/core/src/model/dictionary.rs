use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::spd::{add_scaled, SpdMatrix};
use crate::spg::NonnegVector;

/// Relative size of the floor added to degenerate conic combinations.
pub const FLOOR_REL: f64 = 1e-10;

/// Class-blocked SPD dictionary. Atoms of class `k` occupy the contiguous
/// range `class_range(k)` of the flat atom list and of the code rows.
#[derive(Clone, Debug)]
pub struct Dictionary {
    atoms: Vec<SpdMatrix>,
    ranges: Vec<Range<usize>>,
    floor: f64,
}

/// Result of a conic combination `sum_h a_h D_h`.
#[derive(Clone, Debug)]
pub struct Conic {
    pub matrix: DMatrix<f64>,
    /// The selected coefficients were all zero; `matrix` is `floor * I`.
    pub degenerate: bool,
    /// `floor * I` was added because the smallest eigenvalue fell below it.
    pub floored: bool,
}

impl Dictionary {
    /// The floor is fixed at `FLOOR_REL` times the mean atom trace.
    pub fn new(sub_dicts: Vec<Vec<SpdMatrix>>) -> Result<Self> {
        let atoms: Vec<SpdMatrix> = sub_dicts.iter().flatten().cloned().collect();
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("dictionary has no atoms".into()));
        }
        let mean_trace = atoms.iter().map(SpdMatrix::trace).sum::<f64>() / atoms.len() as f64;
        Self::with_floor(sub_dicts, FLOOR_REL * mean_trace)
    }

    pub fn with_floor(sub_dicts: Vec<Vec<SpdMatrix>>, floor: f64) -> Result<Self> {
        let mut ranges = Vec::with_capacity(sub_dicts.len());
        let mut start = 0;
        for (k, sd) in sub_dicts.iter().enumerate() {
            if sd.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "sub-dictionary {k} has no atoms"
                )));
            }
            ranges.push(start..start + sd.len());
            start += sd.len();
        }
        let atoms: Vec<SpdMatrix> = sub_dicts.into_iter().flatten().collect();
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("dictionary has no atoms".into()));
        }
        let d = atoms[0].dim();
        if let Some(bad) = atoms.iter().find(|a| a.dim() != d) {
            return Err(dim_mismatch(d, bad.dim()));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid floor {floor}")));
        }
        Ok(Dictionary {
            atoms,
            ranges,
            floor,
        })
    }

    /// Same block structure and floor, new atoms.
    pub fn with_atoms(&self, atoms: Vec<SpdMatrix>) -> Result<Self> {
        if atoms.len() != self.atoms.len() {
            return Err(dim_mismatch(self.atoms.len(), atoms.len()));
        }
        Ok(Dictionary {
            atoms,
            ranges: self.ranges.clone(),
            floor: self.floor,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.ranges.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn atoms(&self) -> &[SpdMatrix] {
        &self.atoms
    }

    pub fn class_range(&self, k: usize) -> Range<usize> {
        self.ranges[k].clone()
    }

    pub fn atoms_per_class(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    pub fn sub_dict(&self, k: usize) -> &[SpdMatrix] {
        &self.atoms[self.class_range(k)]
    }

    /// Class owning atom `h`.
    pub fn class_of_atom(&self, h: usize) -> usize {
        self.ranges
            .iter()
            .position(|r| r.contains(&h))
            .expect("atom index in range")
    }

    /// `sum_{h in range} a_h D_h` without the floor rule; `a` is indexed over
    /// the full atom list.
    pub(crate) fn weighted_sum(&self, a: &[f64], range: Range<usize>) -> DMatrix<f64> {
        let d = self.dim();
        let mut s = DMatrix::zeros(d, d);
        for h in range {
            if a[h] != 0.0 {
                add_scaled(&mut s, a[h], self.atoms[h].matrix());
            }
        }
        s
    }

    /// Floor rule on a combination over `range`.
    pub(crate) fn conic_raw(&self, a: &[f64], range: Range<usize>) -> Conic {
        let d = self.dim();
        if a[range.clone()].iter().all(|&x| x == 0.0) {
            return Conic {
                matrix: DMatrix::identity(d, d) * self.floor,
                degenerate: true,
                floored: true,
            };
        }
        let mut s = self.weighted_sum(a, range);
        let shifted = &s - DMatrix::identity(d, d) * self.floor;
        let floored = shifted.cholesky().is_none();
        if floored {
            for i in 0..d {
                s[(i, i)] += self.floor;
            }
        }
        Conic {
            matrix: s,
            degenerate: false,
            floored,
        }
    }

    /// `D ⊗ a`, or `D_k ⊗ a^k` when `class` is given (then `a` has length `H_k`).
    pub fn conic_combine(&self, a: &NonnegVector, class: Option<usize>) -> Result<(SpdMatrix, bool)> {
        let conic = match class {
            None => {
                if a.len() != self.num_atoms() {
                    return Err(dim_mismatch(self.num_atoms(), a.len()));
                }
                self.conic_raw(a.as_vector().as_slice(), 0..self.num_atoms())
            }
            Some(k) => {
                if k >= self.num_classes() {
                    return Err(Error::InvalidArgument(format!("no class {k}")));
                }
                let r = self.class_range(k);
                if a.len() != r.len() {
                    return Err(dim_mismatch(r.len(), a.len()));
                }
                let mut full = vec![0.0; self.num_atoms()];
                full[r.clone()].copy_from_slice(a.as_vector().as_slice());
                self.conic_raw(&full, r)
            }
        };
        Ok((SpdMatrix::from_product(&conic.matrix)?, conic.degenerate))
    }
}

/// `H x N` nonnegative code matrix; column `n` codes sample `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix(DMatrix<f64>);

impl CoefficientMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidArgument(
                "coefficient matrix has negative or NaN entries".into(),
            ));
        }
        Ok(CoefficientMatrix(m))
    }

    pub fn zeros(h: usize, n: usize) -> Self {
        CoefficientMatrix(DMatrix::zeros(h, n))
    }

    pub fn num_atoms(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn column(&self, n: usize) -> NonnegVector {
        NonnegVector::new(self.0.column(n).into_owned()).expect("entries are nonnegative")
    }

    pub fn column_slice(&self, n: usize) -> &[f64] {
        let h = self.0.nrows();
        &self.0.as_slice()[n * h..(n + 1) * h]
    }

    pub fn set_column(&mut self, n: usize, a: &NonnegVector) {
        self.0.set_column(n, a.as_vector());
    }

    /// Mean code of the given samples.
    pub fn mean_of(&self, indices: &[usize]) -> DVector<f64> {
        let mut acc = DVector::zeros(self.0.nrows());
        for &i in indices {
            acc += self.0.column(i);
        }
        if !indices.is_empty() {
            acc /= indices.len() as f64;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;

    fn dict(seed: u64) -> Dictionary {
        let mut rng = random::seeded(seed);
        Dictionary::new(vec![
            (0..2).map(|_| random::spd(3, &mut rng)).collect(),
            (0..3).map(|_| random::spd(3, &mut rng)).collect(),
        ])
        .unwrap()
    }

    #[test]
    fn one_hot_returns_the_atom() {
        let d = dict(31);
        let mut a = vec![0.0; 5];
        a[3] = 1.0;
        let (s, deg) = d.conic_combine(&NonnegVector::from_slice(&a).unwrap(), None).unwrap();
        assert!(!deg);
        assert!((s.matrix() - d.atoms()[3].matrix()).norm() < 1e-15);
    }

    #[test]
    fn zero_code_hits_the_floor() {
        let d = dict(32);
        let (s, deg) = d.conic_combine(&NonnegVector::zeros(5), None).unwrap();
        assert!(deg);
        assert!((s.matrix() - DMatrix::identity(3, 3) * d.floor()).norm() < 1e-30);
        let (_, deg) = d
            .conic_combine(&NonnegVector::from_slice(&[0.0, 0.0, 0.0]).unwrap(), Some(1))
            .unwrap();
        assert!(deg);
    }

    #[test]
    fn weyl_lower_bound() {
        let d = dict(33);
        let mut rng = random::seeded(34);
        for _ in 0..50 {
            let a: Vec<f64> = (0..5).map(|_| random::gaussian(&mut rng).abs()).collect();
            let (s, _) = d.conic_combine(&NonnegVector::from_slice(&a).unwrap(), None).unwrap();
            let bound: f64 = a
                .iter()
                .zip(d.atoms())
                .map(|(w, at)| w * at.eigenvalues()[0])
                .sum();
            assert!(s.eigenvalues()[0] >= bound - 1e-12);
        }
    }

    #[test]
    fn restricted_combination_checks_length() {
        let d = dict(35);
        assert!(d
            .conic_combine(&NonnegVector::from_slice(&[1.0, 1.0]).unwrap(), Some(1))
            .is_err());
        assert_eq!(d.class_of_atom(2), 1);
        assert_eq!(d.atoms_per_class(), vec![2, 3]);
    }
}
