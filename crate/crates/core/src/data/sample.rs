use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::Audiogram;
use crate::error::{Error, Result};
use crate::model::BinauralInput;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One listening trial: binaural features, the listener's audiograms and the
/// measured word correctness in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    pub left: Tensor<T>,
    pub right: Tensor<T>,
    pub audiogram_left: Audiogram,
    pub audiogram_right: Audiogram,
    pub correctness: f64,
    pub scene: String,
    pub listener: String,
    pub system: String,
    pub partition: Option<String>,
    pub split: Option<Split>,
    /// Optional scene difficulty, used to filter dev candidates.
    pub difficulty: Option<f64>,
}

impl<T: Scalar> Sample<T> {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.correctness) {
            return Err(Error::Validation(format!(
                "sample {}: correctness {} outside [0, 100]",
                self.id, self.correctness
            )));
        }
        if self.left.rank() != 3 {
            return Err(Error::Validation(format!(
                "sample {}: features must be L×t×d, got {:?}",
                self.id,
                self.left.shape()
            )));
        }
        if self.left.shape() != self.right.shape() {
            return Err(Error::Validation(format!(
                "sample {}: left shape {:?} differs from right shape {:?}",
                self.id,
                self.left.shape(),
                self.right.shape()
            )));
        }
        Ok(())
    }

    pub fn input(&self) -> Result<BinauralInput<T>> {
        BinauralInput::new(
            self.left.clone(),
            self.right.clone(),
            self.audiogram_left,
            self.audiogram_right,
        )
    }

    pub fn num_layers(&self) -> usize {
        self.left.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.left.shape()[2]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset<T> {
    pub samples: Vec<Sample<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(samples: Vec<Sample<T>>) -> Result<Self> {
        let ds = Dataset { samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks every sample plus id uniqueness and a common `(L, d)`,
    /// reporting all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut seen = HashSet::new();
        let reference = self.samples.first().map(|s| (s.left.shape()[0], s.left.shape()[2]));
        for s in &self.samples {
            if let Err(e) = s.validate() {
                problems.push(e.to_string());
                continue;
            }
            if !seen.insert(s.id.as_str()) {
                problems.push(format!("sample {}: duplicate id", s.id));
            }
            if let Some((l, d)) = reference {
                if (s.num_layers(), s.feature_dim()) != (l, d) {
                    problems.push(format!(
                        "sample {}: features are {}×t×{}, dataset uses {l}×t×{d}",
                        s.id,
                        s.num_layers(),
                        s.feature_dim()
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    /// `(L, d)` shared by all samples.
    pub fn feature_dims(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| (s.num_layers(), s.feature_dim()))
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Sample<T>> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    id: s.id.clone(),
                    left: s.left.cast(),
                    right: s.right.cast(),
                    audiogram_left: s.audiogram_left,
                    audiogram_right: s.audiogram_right,
                    correctness: s.correctness,
                    scene: s.scene.clone(),
                    listener: s.listener.clone(),
                    system: s.system.clone(),
                    partition: s.partition.clone(),
                    split: s.split,
                    difficulty: s.difficulty,
                })
                .collect(),
        }
    }
}
