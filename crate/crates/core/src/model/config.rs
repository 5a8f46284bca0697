use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and regularization of the prediction head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    /// Number of backbone layers `L` in each feature tensor. Experiment
    /// configs may leave it at 0 to take it from the data.
    #[serde(default)]
    pub num_layers: usize,
    /// Backbone feature width `d` (0 in experiment configs: from the data).
    #[serde(default)]
    pub feature_dim: usize,
    #[serde(default = "defaults::proj_dim")]
    pub proj_dim: usize,
    #[serde(default = "defaults::downsample_factor")]
    pub downsample_factor: usize,
    #[serde(default = "defaults::blocks")]
    pub temporal_blocks: usize,
    #[serde(default = "defaults::blocks")]
    pub layer_blocks: usize,
    #[serde(default = "defaults::heads")]
    pub heads: usize,
    #[serde(default = "defaults::ffn_dim")]
    pub ffn_dim: usize,
    #[serde(default = "defaults::dropout_p")]
    pub dropout_p: f64,
    #[serde(default = "defaults::cross")]
    pub binaural_cross_attention: bool,
    /// Capacity of the learned temporal position table, in downsampled frames.
    #[serde(default = "defaults::max_frames")]
    pub max_frames: usize,
    #[serde(default = "defaults::layer_norm_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "defaults::init_std")]
    pub init_std: f64,
}

mod defaults {
    pub fn proj_dim() -> usize {
        384
    }
    pub fn downsample_factor() -> usize {
        20
    }
    pub fn blocks() -> usize {
        2
    }
    pub fn heads() -> usize {
        6
    }
    pub fn ffn_dim() -> usize {
        4 * proj_dim()
    }
    pub fn dropout_p() -> f64 {
        0.1
    }
    pub fn cross() -> bool {
        true
    }
    pub fn max_frames() -> usize {
        512
    }
    pub fn layer_norm_eps() -> f64 {
        1e-5
    }
    pub fn init_std() -> f64 {
        0.02
    }
}

/// Full-size head with dimensions taken from the data.
impl Default for HeadConfig {
    fn default() -> Self {
        Self::new(0, 0)
    }
}

impl HeadConfig {
    /// Full-size head for `num_layers × feature_dim` backbone features.
    pub fn new(num_layers: usize, feature_dim: usize) -> Self {
        HeadConfig {
            num_layers,
            feature_dim,
            proj_dim: defaults::proj_dim(),
            downsample_factor: defaults::downsample_factor(),
            temporal_blocks: defaults::blocks(),
            layer_blocks: defaults::blocks(),
            heads: defaults::heads(),
            ffn_dim: defaults::ffn_dim(),
            dropout_p: defaults::dropout_p(),
            binaural_cross_attention: defaults::cross(),
            max_frames: defaults::max_frames(),
            layer_norm_eps: defaults::layer_norm_eps(),
            init_std: defaults::init_std(),
        }
    }

    /// Narrow head used for CPU-scale experiments: width 32, 4 heads, one
    /// block per pooling stage.
    pub fn desk(num_layers: usize, feature_dim: usize) -> Self {
        HeadConfig {
            proj_dim: 32,
            heads: 4,
            ffn_dim: 64,
            temporal_blocks: 1,
            layer_blocks: 1,
            max_frames: 64,
            ..Self::new(num_layers, feature_dim)
        }
    }

    pub fn with_cross_attention(mut self, on: bool) -> Self {
        self.binaural_cross_attention = on;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.proj_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("feature_dim", self.feature_dim),
            ("proj_dim", self.proj_dim),
            ("downsample_factor", self.downsample_factor),
            ("temporal_blocks", self.temporal_blocks),
            ("layer_blocks", self.layer_blocks),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("max_frames", self.max_frames),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.proj_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "proj_dim {} not divisible by heads {}",
                self.proj_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0,1), got {}",
                self.dropout_p
            )));
        }
        if !(self.layer_norm_eps > 0.0) || !(self.init_std > 0.0) {
            return Err(Error::Config("layer_norm_eps and init_std must be positive".into()));
        }
        Ok(())
    }

    /// Number of downsampled frames produced from `t` input frames.
    pub fn downsampled_len(&self, t: usize) -> usize {
        t.div_ceil(self.downsample_factor)
    }

    /// Closed-form learnable parameter count.
    pub fn parameter_count(&self) -> usize {
        let p = self.proj_dim;
        let f = self.ffn_dim;
        let attention = 4 * p * p + 4 * p;
        let norm = 2 * p;
        let cross = if self.binaural_cross_attention {
            norm + attention
        } else {
            0
        };
        let block = norm + attention + cross + norm + (p * f + f + f * p + p);
        self.feature_dim * p
            + self.max_frames * p
            + p
            + self.temporal_blocks * block
            + 8 * p
            + (self.num_layers + 1) * p
            + p
            + self.layer_blocks * block
            + p
            + 1
    }

    /// Canonical single-line text form stored in checkpoints.
    pub fn canonical_text(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_canonical_text(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "head config".into(),
            msg: e.to_string(),
        })
    }
}
