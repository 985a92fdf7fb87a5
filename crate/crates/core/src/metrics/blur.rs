use super::MetricConfig;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Normalized taps `exp(−i²/2σ²)` for `i = −r..=r`.
pub fn gaussian_kernel(sigma: f64, half_width: usize) -> Vec<f64> {
    let r = half_width as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur of a `C×H×W` image with clamped edges.
pub fn blur_baseline<T: Scalar>(image: &Tensor<T>, cfg: &MetricConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    let [c, h, w] = *image.shape() else {
        return Err(Error::dim(format!(
            "blur expects C×H×W, got {:?}",
            image.shape()
        )));
    };
    let r = cfg.half_width() as isize;
    let k = gaussian_kernel(cfg.blur_sigma, cfg.half_width());
    let src: Vec<f64> = image.data().iter().map(|v| v.as_f64()).collect();
    let mut rows = vec![0.0; src.len()];
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    for ch in 0..c {
        for y in 0..h {
            let base = (ch * h + y) * w;
            for x in 0..w {
                rows[base + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kt)| kt * src[base + clamp(x as isize + t as isize - r, w)])
                    .sum();
            }
        }
    }
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(t, kt)| kt * rows[base + clamp(y as isize + t as isize - r, h) * w + x])
                    .sum();
                out.push(T::of(v));
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}
