use crate::error::{Error, Result};
use crate::model::LabeledDataset;
use crate::random;
use crate::spd::{spd_retract, SymTangent};

/// `num_classes` clusters of SPD matrices. Centres are `exp(separation * G)`
/// with `||G||_F = 1`, so each lies at AIRM distance `separation` from the
/// identity; every sample lies at AIRM distance exactly `noise` from its
/// centre, in a uniformly random direction. Samples are grouped by class.
pub fn synthetic_spd_dataset(
    num_classes: usize,
    per_class: usize,
    m: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(separation > 0.0) || !(noise >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need separation > 0 and noise >= 0 (got {separation}, {noise})"
        )));
    }
    if num_classes == 0 || per_class == 0 || m == 0 {
        return Err(Error::InvalidArgument("empty synthetic dataset".into()));
    }
    let mut rng = random::seeded(seed);
    let centres: Vec<_> = (0..num_classes)
        .map(|_| random::spd_with_spread(m, separation, &mut rng))
        .collect();
    let mut samples = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (k, c) in centres.iter().enumerate() {
        let root = c.sqrt();
        for _ in 0..per_class {
            let w = random::symmetric(m, &mut rng);
            let norm = w.norm();
            let w = if norm > 0.0 { w * (noise / norm) } else { w };
            let v = SymTangent::sym_part(&(&root * w * &root))?;
            samples.push(spd_retract(c, &v, 1.0)?);
            labels.push(k);
        }
    }
    LabeledDataset::with_classes(samples, labels, num_classes)
}
