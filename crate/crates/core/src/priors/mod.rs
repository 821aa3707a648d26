//! Anatomical partition and temporal activation prior from training statistics.

mod mean_map;
mod otsu;
mod partition;
mod temporal;

pub use mean_map::{compute_mean_pressure_map, MeanPressureMap};
pub use otsu::{otsu_threshold, ActiveMask, DEFAULT_BINS};
pub use partition::{
    build_partition_map, region_band, PartitionMap, PartitionMeta, PartitionOptions, BACKGROUND, NUM_REGIONS,
    REGION_NAMES,
};
pub use temporal::{compute_temporal_prior, normalize_activation, TemporalPrior, DEFAULT_EPSILON};

use crate::error::Result;
use crate::preprocess::StanceSample;

/// Everything derived from a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorArtifacts {
    pub mean_map: MeanPressureMap,
    pub mask: ActiveMask,
    pub partition: PartitionMap,
    pub temporal: TemporalPrior,
}

pub fn build_priors(samples: &[StanceSample], opts: &PartitionOptions) -> Result<PriorArtifacts> {
    let mean_map = compute_mean_pressure_map(samples)?;
    let mask = otsu_threshold(&mean_map, DEFAULT_BINS)?;
    let partition = build_partition_map(&mask, &mean_map, opts)?;
    let temporal = compute_temporal_prior(samples, &partition, DEFAULT_EPSILON)?;
    Ok(PriorArtifacts {
        mean_map,
        mask,
        partition,
        temporal,
    })
}
