use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Eval-mode batch-norm statistics for one layer.
#[derive(Debug, Clone)]
pub struct BatchNormParams<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
    pub eps: T,
}

impl<T: Scalar> BatchNormParams<T> {
    /// Applies the normalization per channel (dim 0) of `x`.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.gamma.len();
        if x.shape().first() != Some(&c) {
            return Err(Error::dim("batchnorm channel count mismatch"));
        }
        let per = x.len() / c;
        let mut out = x.clone();
        for (ch, chunk) in out.data_mut().chunks_mut(per).enumerate() {
            let inv = (self.var.data()[ch] + self.eps).sqrt().recip();
            for v in chunk {
                *v = self.gamma.data()[ch] * (*v - self.mean.data()[ch]) * inv
                    + self.beta.data()[ch];
            }
        }
        Ok(out)
    }
}

/// Folds batch normalization into the preceding dense or conv layer.
///
/// `weight` has output channels along dim 0 (`out×in` or `O×C×kh×kw`).
/// Returns the rescaled weight and the new bias
/// `gamma·(b − mean)/sqrt(var + eps) + beta`, with `b = 0` when the layer
/// had no bias.
pub fn fuse_batchnorm<T: Scalar>(
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    bn: &BatchNormParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = *weight
        .shape()
        .first()
        .ok_or_else(|| Error::dim("weight has no output dimension"))?;
    for (name, t) in [
        ("gamma", &bn.gamma),
        ("beta", &bn.beta),
        ("mean", &bn.mean),
        ("var", &bn.var),
    ] {
        if t.len() != c {
            return Err(Error::dim(format!(
                "batchnorm {name} has {} entries for {c} channels",
                t.len()
            )));
        }
    }
    if let Some(b) = bias {
        if b.len() != c {
            return Err(Error::dim("bias length differs from output channels"));
        }
    }
    let per = weight.len() / c;
    let mut w = weight.clone();
    let mut b = Vec::with_capacity(c);
    for ch in 0..c {
        let denom = bn.var.data()[ch] + bn.eps;
        if denom.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Numeric(format!(
                "batchnorm channel {ch}: var + eps = {denom} is not positive"
            )));
        }
        let scale = bn.gamma.data()[ch] / denom.sqrt();
        for v in &mut w.data_mut()[ch * per..(ch + 1) * per] {
            *v *= scale;
        }
        let b0 = bias.map_or(T::zero(), |b| b.data()[ch]);
        b.push(scale * (b0 - bn.mean.data()[ch]) + bn.beta.data()[ch]);
    }
    Ok((w, Tensor::from_parts(vec![c], b)?))
}
