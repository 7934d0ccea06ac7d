//! Seeded per-class train/test sampling.
//!
//! A ChaCha8 generator is seeded with `seed_from_u64(seed)`. For each class in
//! ascending order, the indices of that class (in dataset order) are
//! shuffled with `rand`'s Fisher-Yates `shuffle`; the first
//! `train_per_class` become training samples and the next `test_per_class`
//! test samples. The generator is shared across classes, so a split depends
//! only on the labels, the counts and the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn per_class_split(
    labels: &[usize],
    num_classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<Split, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::with_capacity(num_classes * train_per_class),
        test: Vec::with_capacity(num_classes * test_per_class),
    };
    for k in 0..num_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if idx.len() < train_per_class + test_per_class {
            return Err(format!(
                "class {k} has {} samples, need {} for training and {} for testing",
                idx.len(),
                train_per_class,
                test_per_class
            ));
        }
        idx.shuffle(&mut rng);
        split.train.extend_from_slice(&idx[..train_per_class]);
        split
            .test
            .extend_from_slice(&idx[train_per_class..train_per_class + test_per_class]);
    }
    Ok(split)
}
