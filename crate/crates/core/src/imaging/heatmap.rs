use std::path::Path;

use super::image::{encode_png_rgb, resize_bilinear, to_rgb8};
use super::map::AttributionMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source image blended under a heatmap: `alpha·heat + (1 − alpha)·image`.
#[derive(Debug, Clone, Copy)]
pub struct Overlay<'a> {
    /// `3×H×W`, values in `[0, 1]`; resized to the map if needed.
    pub image: &'a Tensor<f32>,
    pub alpha: f32,
}

/// Diverging colour for a value already normalized to `[-1, 1]`: white at
/// zero, pure red at +1, pure blue at −1.
pub fn diverging_color(n: f64) -> [f64; 3] {
    let n = n.clamp(-1.0, 1.0);
    if n >= 0.0 {
        [1.0, 1.0 - n, 1.0 - n]
    } else {
        [1.0 + n, 1.0 + n, 1.0]
    }
}

/// Interleaved 8-bit RGB rendering of a map, normalized by its largest
/// absolute value.
pub fn heatmap_rgb(map: &AttributionMap, overlay: Option<Overlay<'_>>) -> Result<Vec<u8>> {
    let scale = map.max_abs() as f64;
    let plane = map.height * map.width;
    let mut rgb = vec![0.0f64; 3 * plane];
    for (p, &v) in map.values.iter().enumerate() {
        let n = if scale > 0.0 { v as f64 / scale } else { 0.0 };
        rgb[3 * p..3 * p + 3].copy_from_slice(&diverging_color(n));
    }
    if let Some(o) = overlay {
        if !(0.0..=1.0).contains(&o.alpha) {
            return Err(Error::arg("overlay alpha must lie in [0, 1]"));
        }
        let img = resize_bilinear(o.image, map.height, map.width)?;
        if img.shape()[0] != 3 {
            return Err(Error::dim("overlay image must have three channels"));
        }
        let a = o.alpha as f64;
        let d = img.data();
        for p in 0..plane {
            for c in 0..3 {
                let src = (d[c * plane + p] as f64).clamp(0.0, 1.0);
                rgb[3 * p + c] = a * rgb[3 * p + c] + (1.0 - a) * src;
            }
        }
    }
    let chw = Tensor::from_fn(&[3, map.height, map.width], |i| {
        let (c, p) = (i / plane, i % plane);
        rgb[3 * p + c]
    });
    to_rgb8(&chw)
}

pub fn heatmap_png(map: &AttributionMap, overlay: Option<Overlay<'_>>) -> Result<Vec<u8>> {
    encode_png_rgb(map.width, map.height, &heatmap_rgb(map, overlay)?)
}

pub fn render_heatmap(
    map: &AttributionMap,
    out_path: impl AsRef<Path>,
    overlay: Option<Overlay<'_>>,
) -> Result<()> {
    std::fs::write(out_path, heatmap_png(map, overlay)?)?;
    Ok(())
}
