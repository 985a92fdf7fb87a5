use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Stride and zero padding of a 2-D convolution, as (height, width) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            pad: (0, 0),
        }
    }
}

/// Output extent of a convolution. The stride must tile the padded input
/// exactly; a remainder is reported instead of silently truncated.
pub fn conv2d_output_hw(
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    geom: ConvGeometry,
) -> Result<(usize, usize)> {
    let axis = |n: usize, k: usize, s: usize, p: usize, name: &str| -> Result<usize> {
        let padded = n + 2 * p;
        if s == 0 {
            return Err(Error::dim("convolution stride must be positive"));
        }
        if k > padded {
            return Err(Error::dim(format!(
                "kernel {name} {k} exceeds padded input {padded}"
            )));
        }
        if !(padded - k).is_multiple_of(s) {
            return Err(Error::dim(format!(
                "non-integral output {name}: ({n} + 2*{p} - {k}) / {s}"
            )));
        }
        Ok((padded - k) / s + 1)
    };
    Ok((
        axis(h, kh, geom.stride.0, geom.pad.0, "height")?,
        axis(w, kw, geom.stride.1, geom.pad.1, "width")?,
    ))
}

struct Dims {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn dims(x_shape: &[usize], w_shape: &[usize], geom: ConvGeometry) -> Result<Dims> {
    let [cin, h, w] = *x_shape else {
        return Err(Error::dim(format!(
            "conv2d input must be C×H×W, got {x_shape:?}"
        )));
    };
    let [cout, wcin, kh, kw] = *w_shape else {
        return Err(Error::dim(format!(
            "conv2d kernel must be O×C×kh×kw, got {w_shape:?}"
        )));
    };
    if wcin != cin {
        return Err(Error::dim(format!(
            "conv2d kernel expects {wcin} input channels, input has {cin}"
        )));
    }
    let (oh, ow) = conv2d_output_hw((h, w), (kh, kw), geom)?;
    Ok(Dims {
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        oh,
        ow,
    })
}

/// Cross-correlation with zero padding.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: ConvGeometry,
) -> Result<Tensor<T>> {
    let d = dims(x.shape(), weight.shape(), geom)?;
    if let Some(b) = bias {
        if b.len() != d.cout {
            return Err(Error::dim(
                "conv2d bias length differs from output channels",
            ));
        }
    }
    let (sh, sw) = geom.stride;
    let (ph, pw) = geom.pad;
    let xd = x.data();
    let wd = weight.data();
    let plane = d.oh * d.ow;
    let mut out = vec![T::zero(); d.cout * plane];
    for o in 0..d.cout {
        let dst = &mut out[o * plane..(o + 1) * plane];
        if let Some(b) = bias {
            dst.fill(b.data()[o]);
        }
        for c in 0..d.cin {
            let src = &xd[c * d.h * d.w..(c + 1) * d.h * d.w];
            for ki in 0..d.kh {
                for kj in 0..d.kw {
                    let wv = wd[((o * d.cin + c) * d.kh + ki) * d.kw + kj];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..d.oh {
                        let iy = (oy * sh + ki) as isize - ph as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * d.w..(iy as usize + 1) * d.w];
                        let drow = &mut dst[oy * d.ow..(oy + 1) * d.ow];
                        for (ox, dv) in drow.iter_mut().enumerate() {
                            let ix = (ox * sw + kj) as isize - pw as isize;
                            if ix >= 0 && (ix as usize) < d.w {
                                *dv += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![d.cout, d.oh, d.ow], out)
}

/// Gradients of a convolution with respect to its input and bias. The input
/// gradient is the transposed (full-correlation) map of [`conv2d_forward`].
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    x_shape: &[usize],
    geom: ConvGeometry,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = dims(x_shape, weight.shape(), geom)?;
    if grad_out.shape() != [d.cout, d.oh, d.ow] {
        return Err(Error::dim(format!(
            "conv2d grad_out shape {:?}, forward output is {:?}",
            grad_out.shape(),
            [d.cout, d.oh, d.ow]
        )));
    }
    let (sh, sw) = geom.stride;
    let (ph, pw) = geom.pad;
    let gd = grad_out.data();
    let wd = weight.data();
    let plane = d.oh * d.ow;
    let mut gi = vec![T::zero(); d.cin * d.h * d.w];
    let gb: Vec<T> = (0..d.cout)
        .map(|o| gd[o * plane..(o + 1) * plane].iter().copied().sum())
        .collect();
    for o in 0..d.cout {
        let g = &gd[o * plane..(o + 1) * plane];
        for c in 0..d.cin {
            let dst = &mut gi[c * d.h * d.w..(c + 1) * d.h * d.w];
            for ki in 0..d.kh {
                for kj in 0..d.kw {
                    let wv = wd[((o * d.cin + c) * d.kh + ki) * d.kw + kj];
                    if wv == T::zero() {
                        continue;
                    }
                    for oy in 0..d.oh {
                        let iy = (oy * sh + ki) as isize - ph as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..d.ow {
                            let ix = (ox * sw + kj) as isize - pw as isize;
                            if ix >= 0 && (ix as usize) < d.w {
                                dst[iy * d.w + ix as usize] += wv * g[oy * d.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(x_shape.to_vec(), gi)?,
        Tensor::from_parts(vec![d.cout], gb)?,
    ))
}
