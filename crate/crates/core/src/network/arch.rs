//! Architecture description files (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer as written in an architecture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_features: usize,
        out_features: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default = "unit_stride")]
        stride: [usize; 2],
        #[serde(default)]
        padding: [usize; 2],
        #[serde(default = "yes")]
        bias: bool,
    },
    Relu,
    Maxpool {
        kernel: usize,
        stride: usize,
    },
    Avgpool {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgpool,
    Flatten,
    Batchnorm,
    ResidualBlock {
        main: Vec<LayerSpec>,
        /// Projection on the skip path: a conv2d or dense layer, optionally
        /// followed by a batchnorm. Absent means identity.
        #[serde(default)]
        projection: Option<Vec<LayerSpec>>,
        #[serde(default = "yes")]
        post_relu: bool,
    },
}

fn yes() -> bool {
    true
}

fn unit_stride() -> [usize; 2] {
    [1, 1]
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Maxpool { .. } => "maxpool",
            LayerSpec::Avgpool { .. } => "avgpool",
            LayerSpec::GlobalAvgpool => "global_avgpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Batchnorm => "batchnorm",
            LayerSpec::ResidualBlock { .. } => "residual_block",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMode {
    #[default]
    Bilinear,
}

/// Image preprocessing that belongs to a model: resize target and
/// per-channel normalization `(v - mean) / std` of `[0, 1]` pixel values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub height: usize,
    pub width: usize,
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    #[serde(default)]
    pub resize: ResizeMode,
}

impl PreprocessSpec {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
            resize: ResizeMode::Bilinear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::arg("preprocess target size must be positive"));
        }
        if self.mean.len() != 3 || self.std.len() != 3 {
            return Err(Error::arg(
                "preprocess mean/std need one value per RGB channel",
            ));
        }
        if self.std.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::arg("preprocess std must be strictly positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchFile {
    #[serde(default)]
    pub model_id: String,
    pub input_shape: Vec<usize>,
    pub class_count: usize,
    #[serde(default)]
    pub preprocess: Option<PreprocessSpec>,
    pub layers: Vec<LayerSpec>,
}

impl ArchFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::load(None, format!("architecture file: {e}")))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::load(None, format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture serializes")
    }
}
