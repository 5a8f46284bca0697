//! Three-way train/dev/test partitioning.
//!
//! `Random` shuffles the dataset into three near-equal groups; partition `i`
//! tests on group `i` and trains on the other two, except for the dev
//! samples, which are drawn from group `i + 1`. `Tagged` follows the
//! samples' own `partition` and `split` fields and draws dev samples from the
//! next tag in sorted order.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

pub const NUM_PARTITIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Random,
    Tagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Share of the donor partition's candidates used as dev set.
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    /// When set, only samples with at least this difficulty are dev candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_dev_difficulty: Option<f64>,
}

fn default_scheme() -> Scheme {
    Scheme::Random
}

fn default_dev_fraction() -> f64 {
    0.2
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            scheme: default_scheme(),
            dev_fraction: default_dev_fraction(),
            min_dev_difficulty: None,
        }
    }
}

/// Sample indices of one partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub name: String,
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSet {
    pub partitions: Vec<Partition>,
}

impl PartitionSet {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

fn draw_dev<T: Scalar>(
    dataset: &Dataset<T>,
    candidates: &[usize],
    config: &PartitionConfig,
    rng: &mut RngStream,
) -> Vec<usize> {
    let mut pool: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| match config.min_dev_difficulty {
            Some(min) => dataset.samples[i].difficulty.is_some_and(|d| d >= min),
            None => true,
        })
        .collect();
    rng.shuffle(&mut pool);
    let n = ((pool.len() as f64 * config.dev_fraction).round() as usize).clamp(1.min(pool.len()), pool.len());
    let mut dev = pool[..n].to_vec();
    dev.sort_unstable();
    dev
}

pub fn make_partitions<T: Scalar>(
    dataset: &Dataset<T>,
    config: &PartitionConfig,
    seed: u64,
) -> Result<PartitionSet> {
    if !(config.dev_fraction > 0.0 && config.dev_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "dev_fraction {} must be in (0, 1]",
            config.dev_fraction
        )));
    }
    let set = match config.scheme {
        Scheme::Random => random_partitions(dataset, config, seed)?,
        Scheme::Tagged => tagged_partitions(dataset, config, seed)?,
    };
    for p in &set.partitions {
        if p.train.is_empty() || p.test.is_empty() || p.dev.is_empty() {
            return Err(Error::Config(format!(
                "partition {} has an empty split (train {}, dev {}, test {})",
                p.name,
                p.train.len(),
                p.dev.len(),
                p.test.len()
            )));
        }
    }
    Ok(set)
}

fn random_partitions<T: Scalar>(
    dataset: &Dataset<T>,
    config: &PartitionConfig,
    seed: u64,
) -> Result<PartitionSet> {
    let n = dataset.len();
    if n < 3 * NUM_PARTITIONS {
        return Err(Error::Config(format!(
            "{n} samples are too few to split {NUM_PARTITIONS} ways"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::substream(seed, 0).shuffle(&mut order);
    let groups: Vec<Vec<usize>> = (0..NUM_PARTITIONS)
        .map(|g| {
            let (lo, hi) = (g * n / NUM_PARTITIONS, (g + 1) * n / NUM_PARTITIONS);
            let mut group = order[lo..hi].to_vec();
            group.sort_unstable();
            group
        })
        .collect();
    let partitions = (0..NUM_PARTITIONS)
        .map(|i| {
            let donor = (i + 1) % NUM_PARTITIONS;
            let mut rng = RngStream::substream(seed, 1 + i as u64);
            let dev = draw_dev(dataset, &groups[donor], config, &mut rng);
            let held: HashSet<usize> = groups[i].iter().chain(&dev).copied().collect();
            Partition {
                name: format!("p{i}"),
                train: (0..n).filter(|j| !held.contains(j)).collect(),
                dev,
                test: groups[i].clone(),
            }
        })
        .collect();
    Ok(PartitionSet { partitions })
}

fn tagged_partitions<T: Scalar>(
    dataset: &Dataset<T>,
    config: &PartitionConfig,
    seed: u64,
) -> Result<PartitionSet> {
    let mut by_tag: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        let tag = s.partition.as_deref().ok_or_else(|| {
            Error::Config(format!("sample {} has no partition tag", s.id))
        })?;
        if s.split.is_none() {
            return Err(Error::Config(format!("sample {} has no split", s.id)));
        }
        by_tag.entry(tag).or_default().push(i);
    }
    if by_tag.len() < NUM_PARTITIONS {
        return Err(Error::Config(format!(
            "tagged partitioning needs {NUM_PARTITIONS} partition tags, found {}",
            by_tag.len()
        )));
    }
    let tags: Vec<&str> = by_tag.keys().copied().collect();
    let partitions = tags
        .iter()
        .enumerate()
        .map(|(i, tag)| {
            let own = &by_tag[tag];
            let donor = &by_tag[tags[(i + 1) % tags.len()]];
            let mut rng = RngStream::substream(seed, 1 + i as u64);
            let pick = |split| {
                own.iter()
                    .copied()
                    .filter(|&j| dataset.samples[j].split == Some(split))
                    .collect::<Vec<_>>()
            };
            Partition {
                name: tag.to_string(),
                train: pick(Split::Train),
                dev: draw_dev(dataset, donor, config, &mut rng),
                test: pick(Split::Test),
            }
        })
        .collect();
    Ok(PartitionSet { partitions })
}
