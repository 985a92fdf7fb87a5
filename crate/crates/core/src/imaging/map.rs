use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Provenance of a map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapMeta {
    pub target: usize,
    pub method: String,
    pub model_id: String,
}

/// Signed per-pixel contribution scores, row-major `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub meta: MapMeta,
}

impl AttributionMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>, meta: MapMeta) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::dim(format!(
                "{} values for a {height}×{width} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attribution map".into()));
        }
        Ok(Self {
            height,
            width,
            values,
            meta,
        })
    }

    /// Reduces per-input contributions to one value per pixel by summing
    /// channels. `C×H×W` inputs sum over `C`; `H×W` inputs are taken as is;
    /// flat inputs become a single row.
    pub fn from_contributions<T: Scalar>(contrib: &Tensor<T>, meta: MapMeta) -> Result<Self> {
        let (c, h, w) = match *contrib.shape() {
            [c, h, w] => (c, h, w),
            [h, w] => (1, h, w),
            [n] => (1, 1, n),
            ref s => {
                return Err(Error::dim(format!(
                    "cannot form a pixel map from shape {s:?}"
                )))
            }
        };
        let plane = h * w;
        let d = contrib.data();
        let values = (0..plane)
            .map(|p| {
                let s: T = (0..c).map(|ch| d[ch * plane + p]).sum();
                s.as_f64() as f32
            })
            .collect();
        Self::new(h, w, values, meta)
    }

    pub fn max_abs(&self) -> f32 {
        self.values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    pub fn scaled(&self, s: f32) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}
