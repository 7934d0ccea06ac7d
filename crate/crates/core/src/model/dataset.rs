use crate::error::{dim_mismatch, Error, Result};
use crate::spd::SpdMatrix;

/// Labelled SPD samples; labels run over `0..num_classes` and every class is
/// represented.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    samples: Vec<SpdMatrix>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    /// Class count inferred as `max(label) + 1`.
    pub fn new(samples: Vec<SpdMatrix>, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self::with_classes(samples, labels, k)
    }

    pub fn with_classes(
        samples: Vec<SpdMatrix>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if samples.len() != labels.len() {
            return Err(dim_mismatch(samples.len(), labels.len()));
        }
        let m = samples[0].dim();
        if let Some(bad) = samples.iter().find(|s| s.dim() != m) {
            return Err(dim_mismatch(m, bad.dim()));
        }
        let mut counts = vec![0usize; num_classes];
        for &l in &labels {
            if l >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {l} out of range for {num_classes} classes"
                )));
            }
            counts[l] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!("class {k} has no samples")));
        }
        Ok(LabeledDataset {
            samples,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[SpdMatrix] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &SpdMatrix {
        &self.samples[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    /// Samples at `indices`, keeping the class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::with_classes(samples, labels, self.num_classes)
    }
}
