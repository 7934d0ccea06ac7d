//! Dataset loading for the commands.

use jdrdl::features::cache::DescriptorCache;
use jdrdl::features::idx::read_idx_pair;
use jdrdl::features::{mnist_rcm, synthetic_spd_dataset, CoordScaling};
use jdrdl::model::LabeledDataset;
use jdrdl::Result;

use crate::config::{DatasetSpec, ExperimentConfig};

/// Region covariance descriptors of an IDX image/label pair.
pub fn extract_descriptors(
    images: &std::path::Path,
    labels: &std::path::Path,
    coords: CoordScaling,
) -> Result<DescriptorCache> {
    let (imgs, labs) = read_idx_pair(images, labels)?;
    let descriptors = imgs
        .iter()
        .map(|img| mnist_rcm(img, coords))
        .collect::<Result<Vec<_>>>()?;
    let dim = descriptors.first().map_or(24, |d| d.dim());
    DescriptorCache::new(dim, descriptors, labs)
}

fn from_cache(cache: DescriptorCache) -> Result<LabeledDataset> {
    LabeledDataset::new(cache.descriptors, cache.labels)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    match &cfg.dataset {
        DatasetSpec::Mnist { images, labels } => {
            if let Some(p) = cfg.cache_path.as_ref().filter(|p| p.exists()) {
                return from_cache(DescriptorCache::load(p)?);
            }
            from_cache(extract_descriptors(images, labels, cfg.coords)?)
        }
        DatasetSpec::Synthetic {
            classes,
            per_class,
            dim,
            separation,
            noise,
            seed,
        } => synthetic_spd_dataset(*classes, *per_class, *dim, *separation, *noise, *seed),
        DatasetSpec::Cache { path } => from_cache(DescriptorCache::load(path)?),
    }
}
