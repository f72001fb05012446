use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Where Human / Object Graph Residual Blocks sit, one flag per encoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub human: [bool; 3],
    pub object: [bool; 3],
}

/// Named graph-block placements of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "h")]
    H,
    #[serde(rename = "h+o1")]
    HO1,
    #[serde(rename = "h+o2")]
    HO2,
    #[serde(rename = "h+o3")]
    HO3,
    #[serde(rename = "h+o-all")]
    HOAll,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::None, Variant::H, Variant::HO1, Variant::HO2, Variant::HO3, Variant::HOAll];

    pub fn id(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::H => "h",
            Variant::HO1 => "h+o1",
            Variant::HO2 => "h+o2",
            Variant::HO3 => "h+o3",
            Variant::HOAll => "h+o-all",
        }
    }

    pub fn placement(self) -> Placement {
        let h = self != Variant::None;
        let object = match self {
            Variant::None | Variant::H => [false; 3],
            Variant::HO1 => [true, false, false],
            Variant::HO2 => [false, true, false],
            Variant::HO3 => [false, false, true],
            Variant::HOAll => [true; 3],
        };
        Placement { human: [h; 3], object }
    }

    pub fn from_placement(p: Placement) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.placement() == p)
    }
}

impl Default for Variant {
    fn default() -> Self {
        Variant::HO2
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| ModelError::Parameter(format!("unknown variant `{s}` (none, h, h+o1, h+o2, h+o3, h+o-all)")))
    }
}

/// Sub-block used for token partitions that have no graph block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlainPath {
    /// Pre-norm two-layer GELU MLP with residual.
    #[default]
    Mlp,
    /// Tokens pass through unchanged.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dims: [usize; 3],
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub variant: Variant,
    pub plain_path: PlainPath,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { dims: [128, 64, 32], layers: 4, heads: 4, mlp_ratio: 2, variant: Variant::HO2, plain_path: PlainPath::Mlp }
    }
}

impl EncoderConfig {
    pub fn placement(&self) -> Placement {
        self.variant.placement()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dims[0] > self.dims[1] && self.dims[1] > self.dims[2] && self.dims[2] > 0) {
            return Err(ModelError::Config(format!("block dims must strictly decrease, got {:?}", self.dims)));
        }
        if self.layers == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return Err(ModelError::Config("layers, heads and mlp_ratio must be positive".into()));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d % self.heads != 0) {
            return Err(ModelError::Config(format!("block dim {d} not divisible by {} heads", self.heads)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub res: usize,
    pub in_channels: usize,
    /// Output channels of the four backbone stages; the last is the feature width C.
    pub conv_channels: [usize; 4],
    pub encoder: EncoderConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { res: 64, in_channels: 5, conv_channels: [16, 32, 64, 128], encoder: EncoderConfig::default(), seed: 1 }
    }
}

impl ModelConfig {
    pub fn feature_channels(&self) -> usize {
        self.conv_channels[3]
    }

    /// Feature grid side, `res / 8`.
    pub fn grid(&self) -> usize {
        self.res / 8
    }

    pub fn validate(&self) -> Result<()> {
        if self.res < 8 || self.res % 8 != 0 {
            return Err(ModelError::Config(format!("resolution {} must be a positive multiple of 8", self.res)));
        }
        if self.conv_channels.contains(&0) || self.in_channels == 0 {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        self.encoder.validate()
    }
}
