use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropParams {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

/// Running mean of squared gradients, one accumulator per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState<T: Scalar = f32> {
    pub acc: Vec<Tensor<T>>,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        Self {
            acc: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// `acc ← decay·acc + (1 − decay)·g²; p ← p − lr·g / (sqrt(acc) + eps)`.
/// No weight decay.
pub fn rmsprop_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut RmsPropState<T>,
    cfg: RmsPropParams,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.acc.len() {
        return Err(Error::dim(
            "rmsprop: parameter, gradient and state counts differ",
        ));
    }
    let (lr, decay, eps) = (T::of(cfg.lr), T::of(cfg.decay), T::of(cfg.eps));
    for ((p, g), acc) in params.iter_mut().zip(grads).zip(state.acc.iter_mut()) {
        p.expect_same_shape(g)?;
        p.expect_same_shape(acc)?;
        for ((pv, &gv), av) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
            *av = decay * *av + (T::one() - decay) * gv * gv;
            if gv != T::zero() {
                *pv -= lr * gv / (av.sqrt() + eps);
            }
        }
    }
    Ok(())
}
