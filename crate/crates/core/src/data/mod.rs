//! Datasets: samples, the SFMT tensor format, manifests, partitions and the
//! synthetic generator.

mod audiogram;
pub mod manifest;
pub mod partition;
mod sample;
pub mod sfmt;
pub mod synthetic;

pub use audiogram::{Audiogram, AUDIOGRAM_FREQUENCIES_HZ};
pub use partition::{make_partitions, Partition, PartitionConfig, PartitionSet, Scheme};
pub use sample::{Dataset, Sample, Split};
pub use synthetic::{generate_synthetic, SyntheticConfig};
