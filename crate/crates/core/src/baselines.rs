//! Integrated gradients and SmoothGrad.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{AttributionMap, MapMeta};
use crate::linearize::masked_backward;
use crate::network::Network;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IgReference {
    Zero,
    /// Every input element set to this value.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub ig_steps: usize,
    pub ig_reference: IgReference,
    pub sg_samples: usize,
    /// Noise standard deviation as a fraction of the input's value range
    /// (`max − min`).
    pub sg_noise_fraction: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ig_steps: 50,
            ig_reference: IgReference::Zero,
            sg_samples: 25,
            sg_noise_fraction: 0.15,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ig_steps == 0 || self.sg_samples == 0 {
            return Err(Error::arg(
                "integrated-gradient steps and smoothgrad samples must be at least 1",
            ));
        }
        if !self.sg_noise_fraction.is_finite() || self.sg_noise_fraction < 0.0 {
            return Err(Error::arg(
                "smoothgrad noise must be a non-negative finite fraction",
            ));
        }
        if let IgReference::Constant(v) = self.ig_reference {
            if !v.is_finite() {
                return Err(Error::arg("integrated-gradient reference must be finite"));
            }
        }
        Ok(())
    }
}

fn gradient<T: Scalar>(net: &Network<T>, x: &Tensor<T>, target: usize) -> Result<Tensor<T>> {
    let trace = net.forward(x)?;
    Ok(masked_backward(net, &trace, target, None)?.input_grad)
}

fn meta<T: Scalar>(net: &Network<T>, target: usize, method: &str) -> MapMeta {
    MapMeta {
        target,
        method: method.into(),
        model_id: net.model_id().to_string(),
    }
}

/// `(x − ref) ⊙ mean_k ∇F(ref + ((k + ½)/steps)(x − ref))`, before the
/// channel reduction.
pub fn integrated_gradients_contributions<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    reference: &Tensor<T>,
    target: usize,
    steps: usize,
) -> Result<Tensor<T>> {
    net.select_target(target)?;
    if steps == 0 {
        return Err(Error::arg("integrated gradients needs at least one step"));
    }
    x.expect_same_shape(reference)?;
    let delta = x.sub(reference)?;
    let mut acc = Tensor::zeros(x.shape());
    for k in 0..steps {
        let alpha = T::of((k as f64 + 0.5) / steps as f64);
        let point = reference.add(&delta.scale(alpha))?;
        acc.add_assign(&gradient(net, &point, target)?)?;
    }
    acc.scale(T::one() / T::of(steps as f64)).mul(&delta)
}

pub fn integrated_gradients<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target: usize,
    cfg: &BaselineConfig,
) -> Result<AttributionMap> {
    cfg.validate()?;
    let reference = match cfg.ig_reference {
        IgReference::Zero => Tensor::zeros(x.shape()),
        IgReference::Constant(v) => Tensor::full(x.shape(), T::of(v)),
    };
    let c = integrated_gradients_contributions(net, x, &reference, target, cfg.ig_steps)?;
    AttributionMap::from_contributions(&c, meta(net, target, "ig"))
}

/// Mean of `∇F(x̃) ⊙ x̃` over noisy copies `x̃ = x + ε`, before the channel
/// reduction. Noise is drawn from one ChaCha stream seeded with `seed`,
/// sample after sample.
pub fn smoothgrad_contributions<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target: usize,
    samples: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Tensor<T>> {
    net.select_target(target)?;
    if samples == 0 {
        return Err(Error::arg("smoothgrad needs at least one sample"));
    }
    let normal = Normal::new(0.0, noise_std).map_err(|e| Error::arg(format!("noise std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Tensor::zeros(x.shape());
    for _ in 0..samples {
        let mut noisy = x.clone();
        for v in noisy.data_mut() {
            *v += T::of(normal.sample(&mut rng));
        }
        let g = gradient(net, &noisy, target)?;
        acc.add_assign(&g.mul(&noisy)?)?;
    }
    Ok(acc.scale(T::one() / T::of(samples as f64)))
}

pub fn smoothgrad<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target: usize,
    cfg: &BaselineConfig,
) -> Result<AttributionMap> {
    cfg.validate()?;
    let (lo, hi) = x
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v.as_f64()), hi.max(v.as_f64()))
        });
    let std = cfg.sg_noise_fraction * (hi - lo);
    let c = smoothgrad_contributions(net, x, target, cfg.sg_samples, std, cfg.seed)?;
    AttributionMap::from_contributions(&c, meta(net, target, "sg"))
}
