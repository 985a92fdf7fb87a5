//! Forward and backward kernels.
//!
//! Every kernel is a pure function of its inputs. Backward kernels take the
//! gradient with respect to the forward output and return gradients with
//! respect to the forward inputs.

mod conv;
mod pool;

pub use conv::{conv2d_backward, conv2d_forward, conv2d_output_hw, ConvGeometry};
pub use pool::{
    avgpool_backward, avgpool_forward, global_avgpool_backward, global_avgpool_forward,
    maxpool_backward, maxpool_forward, pool_output_hw,
};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Matrix product of `a` (`m×k`) and `b` (`k×n`).
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = as_matrix(a)?;
    let (k2, n) = as_matrix(b)?;
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul inner extents differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

fn as_matrix<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::dim(format!("expected a matrix, got shape {s:?}"))),
    }
}

/// `W x + b` for a weight matrix of shape `out×in` and a flat input.
pub fn dense_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (out_f, in_f) = as_matrix(w)?;
    if x.len() != in_f {
        return Err(Error::dim(format!(
            "dense layer expects {in_f} inputs, got shape {:?}",
            x.shape()
        )));
    }
    let wd = w.data();
    let xd = x.data();
    let mut y: Vec<T> = (0..out_f)
        .map(|o| {
            wd[o * in_f..(o + 1) * in_f]
                .iter()
                .zip(xd)
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect();
    if let Some(b) = b {
        if b.len() != out_f {
            return Err(Error::dim("dense bias length differs from output width"));
        }
        for (v, &bv) in y.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    Tensor::from_parts(vec![out_f], y)
}

/// Returns `Wᵀ g`, shaped like the forward input.
pub fn dense_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    w: &Tensor<T>,
    x_shape: &[usize],
) -> Result<Tensor<T>> {
    let (out_f, in_f) = as_matrix(w)?;
    if grad_out.len() != out_f || x_shape.iter().product::<usize>() != in_f {
        return Err(Error::dim("dense backward shape mismatch"));
    }
    let wd = w.data();
    let mut gi = vec![T::zero(); in_f];
    for (o, &g) in grad_out.data().iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        for (acc, &wv) in gi.iter_mut().zip(&wd[o * in_f..(o + 1) * in_f]) {
            *acc += g * wv;
        }
    }
    Tensor::from_parts(x_shape.to_vec(), gi)
}

/// ReLU output together with its Heaviside mask. The mask is 0 at exactly
/// zero so that `y == mask ⊙ x` holds with `H(0) = 0`.
pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let mask = x.map(|v| if v > T::zero() { T::one() } else { T::zero() });
    let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
    (y, mask)
}
