use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output extent of a pooling window; trailing rows/columns that do not
/// fill a window are dropped.
pub fn pool_output_hw((h, w): (usize, usize), k: usize, stride: usize) -> Result<(usize, usize)> {
    if k == 0 || stride == 0 {
        return Err(Error::dim("pool window and stride must be positive"));
    }
    if k > h || k > w {
        return Err(Error::dim(format!("pool window {k} exceeds input {h}×{w}")));
    }
    Ok(((h - k) / stride + 1, (w - k) / stride + 1))
}

fn chw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::dim(format!("pooling expects C×H×W, got {shape:?}"))),
    }
}

/// Max pooling. Returns the pooled tensor and, per output element, the flat
/// index into `x` of the selected input. Ties go to the first row-major
/// position of the window.
pub fn maxpool_forward<T: Scalar>(
    x: &Tensor<T>,
    k: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w) = chw(x.shape())?;
    let (oh, ow) = pool_output_hw((h, w), k, stride)?;
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ch * h * w + (oy * stride) * w + ox * stride;
                for ky in 0..k {
                    for kx in 0..k {
                        let i = ch * h * w + (oy * stride + ky) * w + ox * stride + kx;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                out.push(xd[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::from_parts(vec![c, oh, ow], out)?, idx))
}

/// Scatters each output gradient onto its recorded argmax, accumulating
/// where windows overlap.
pub fn maxpool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    x_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::dim(format!(
            "maxpool backward: {} gradients for {} recorded selections",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut gi = Tensor::zeros(x_shape);
    let n = gi.len();
    let gd = gi.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(argmax) {
        if i >= n {
            return Err(Error::dim("maxpool selection index out of range"));
        }
        gd[i] += g;
    }
    Ok(gi)
}

pub fn avgpool_forward<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize) -> Result<Tensor<T>> {
    let (c, h, w) = chw(x.shape())?;
    let (oh, ow) = pool_output_hw((h, w), k, stride)?;
    let inv = T::one() / T::of((k * k) as f64);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = T::zero();
                for ky in 0..k {
                    let row = ch * h * w + (oy * stride + ky) * w + ox * stride;
                    s += xd[row..row + k].iter().copied().sum::<T>();
                }
                out.push(s * inv);
            }
        }
    }
    Tensor::from_parts(vec![c, oh, ow], out)
}

pub fn avgpool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    k: usize,
    stride: usize,
    x_shape: &[usize],
) -> Result<Tensor<T>> {
    let (c, h, w) = chw(x_shape)?;
    let (oh, ow) = pool_output_hw((h, w), k, stride)?;
    if grad_out.shape() != [c, oh, ow] {
        return Err(Error::dim("avgpool backward shape mismatch"));
    }
    let inv = T::one() / T::of((k * k) as f64);
    let gd = grad_out.data();
    let mut gi = Tensor::zeros(x_shape);
    let gid = gi.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gd[(ch * oh + oy) * ow + ox] * inv;
                for ky in 0..k {
                    let row = ch * h * w + (oy * stride + ky) * w + ox * stride;
                    for v in &mut gid[row..row + k] {
                        *v += g;
                    }
                }
            }
        }
    }
    Ok(gi)
}

/// Per-channel mean, giving a length-C vector.
pub fn global_avgpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = chw(x.shape())?;
    let inv = T::one() / T::of((h * w) as f64);
    let out = x
        .data()
        .chunks(h * w)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect::<Vec<_>>();
    Tensor::from_parts(vec![c], out)
}

pub fn global_avgpool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    x_shape: &[usize],
) -> Result<Tensor<T>> {
    let (c, h, w) = chw(x_shape)?;
    if grad_out.len() != c {
        return Err(Error::dim("global avgpool backward shape mismatch"));
    }
    let inv = T::one() / T::of((h * w) as f64);
    let mut gi = Vec::with_capacity(c * h * w);
    for &g in grad_out.data() {
        gi.extend(std::iter::repeat_n(g * inv, h * w));
    }
    Tensor::from_parts(x_shape.to_vec(), gi)
}
