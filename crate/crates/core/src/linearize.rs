//! Masked reverse-mode engine.
//!
//! Inside the linear region fixed by an [`ActivationTrace`], a ReLU network
//! is jointly linear in its input and all of its biases, so
//! `logit = ∇ₓF·x + Σ_l ∇_{b_l}F·b_l`. The reverse sweep here computes
//! those gradients while optionally multiplying the gradient at every ReLU
//! site by a mask in `[0, 1]` on top of the Heaviside pattern. The matching
//! forward replay evaluates the same masked linear map directly.

use crate::error::{Error, Result};
use crate::imaging::{AttributionMap, MapMeta};
use crate::network::{ActivationTrace, Layer, Network, Node};
use crate::ops;
use crate::tensor::{Scalar, Tensor};

/// Input gradient and one gradient per bias slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardResult<T: Scalar = f32> {
    pub input_grad: Tensor<T>,
    pub bias_grads: Vec<Tensor<T>>,
}

/// Checks that `masks` has one tensor per ReLU site with the site's shape
/// and values in `[0, 1]`.
pub fn validate_masks<T: Scalar>(net: &Network<T>, masks: &[Tensor<T>]) -> Result<()> {
    if masks.len() != net.site_count() {
        return Err(Error::arg(format!(
            "{} masks for {} ReLU sites",
            masks.len(),
            net.site_count()
        )));
    }
    for (i, (m, shape)) in masks.iter().zip(net.site_shapes()).enumerate() {
        if m.shape() != shape.as_slice() {
            return Err(Error::arg(format!(
                "mask for site {i} has shape {:?}, site is {shape:?}",
                m.shape()
            )));
        }
        if m.data().iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::arg(format!(
                "mask for site {i} has values outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// Reverse sweep over several gradient lanes at once.
///
/// `seeds` are gradients at the logits, one per lane. At every ReLU site the
/// gate receives the site index, its Heaviside mask and the lane gradients
/// with respect to the site output, and must leave in place the gradients
/// with respect to the site input.
pub(crate) fn reverse_sweep<T: Scalar, G>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    seeds: Vec<Tensor<T>>,
    gate: &mut G,
) -> Result<Vec<BackwardResult<T>>>
where
    G: FnMut(usize, &Tensor<T>, &mut [Tensor<T>]) -> Result<()>,
{
    net.check_trace(trace)?;
    let lanes = seeds.len();
    let mut sweep = Sweep {
        trace,
        gate,
        bias_grads: vec![vec![None; net.bias_count()]; lanes],
    };
    let mut g = seeds;
    for node in net.nodes().iter().rev() {
        g = sweep.node(node, g)?;
    }
    Ok(g.into_iter()
        .zip(sweep.bias_grads)
        .map(|(input_grad, biases)| BackwardResult {
            input_grad,
            bias_grads: biases
                .into_iter()
                .map(|b| b.expect("every bias slot is visited"))
                .collect(),
        })
        .collect())
}

struct Sweep<'a, T: Scalar, G> {
    trace: &'a ActivationTrace<T>,
    gate: &'a mut G,
    bias_grads: Vec<Vec<Option<Tensor<T>>>>,
}

impl<T: Scalar, G> Sweep<'_, T, G>
where
    G: FnMut(usize, &Tensor<T>, &mut [Tensor<T>]) -> Result<()>,
{
    fn node(&mut self, node: &Node<T>, mut g: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        match &node.layer {
            Layer::Dense { weight, bias } => {
                if let Some(b) = bias {
                    for (lane, gl) in g.iter().enumerate() {
                        self.bias_grads[lane][b.slot] = Some(gl.clone());
                    }
                }
                g.iter()
                    .map(|gl| ops::dense_backward(gl, weight, &node.in_shape))
                    .collect()
            }
            Layer::Conv2d { weight, bias, geom } => {
                let mut out = Vec::with_capacity(g.len());
                for (lane, gl) in g.iter().enumerate() {
                    let (gi, gb) = ops::conv2d_backward(gl, weight, &node.in_shape, *geom)?;
                    if let Some(b) = bias {
                        self.bias_grads[lane][b.slot] = Some(gb);
                    }
                    out.push(gi);
                }
                Ok(out)
            }
            Layer::Relu { site } => {
                (self.gate)(*site, &self.trace.relu_masks[*site], &mut g)?;
                Ok(g)
            }
            Layer::MaxPool { pool, .. } => g
                .iter()
                .map(|gl| {
                    ops::maxpool_backward(gl, &self.trace.pool_selections[*pool], &node.in_shape)
                })
                .collect(),
            Layer::AvgPool { kernel, stride } => g
                .iter()
                .map(|gl| ops::avgpool_backward(gl, *kernel, *stride, &node.in_shape))
                .collect(),
            Layer::GlobalAvgPool => g
                .iter()
                .map(|gl| ops::global_avgpool_backward(gl, &node.in_shape))
                .collect(),
            Layer::Flatten => g.into_iter().map(|gl| gl.reshape(&node.in_shape)).collect(),
            Layer::Residual(block) => {
                if let Some(site) = block.post_relu {
                    (self.gate)(site, &self.trace.relu_masks[site], &mut g)?;
                }
                let mut main = g.clone();
                for inner in block.main.iter().rev() {
                    main = self.node(inner, main)?;
                }
                let skip = match &block.projection {
                    Some(p) => self.node(p, g)?,
                    None => g,
                };
                for (m, s) in main.iter_mut().zip(&skip) {
                    m.add_assign(s)?;
                }
                Ok(main)
            }
        }
    }
}

pub(crate) fn one_hot<T: Scalar>(n: usize, i: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[n]);
    t.data_mut()[i] = T::one();
    t
}

/// Gradient of the `target_class` logit with respect to the input and every
/// bias. At each ReLU site the incoming gradient is multiplied by the
/// Heaviside mask and, when given, by that site's entry of `masks`. Bias
/// gradients therefore carry every mask applied above their layer.
pub fn masked_backward<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    target_class: usize,
    masks: Option<&[Tensor<T>]>,
) -> Result<BackwardResult<T>> {
    net.select_target(target_class)?;
    if let Some(m) = masks {
        validate_masks(net, m)?;
    }
    let seed = one_hot(net.class_count(), target_class);
    let mut gate = |site: usize, heaviside: &Tensor<T>, lanes: &mut [Tensor<T>]| -> Result<()> {
        for g in lanes.iter_mut() {
            g.mul_assign(heaviside)?;
            if let Some(m) = masks {
                g.mul_assign(&m[site])?;
            }
        }
        Ok(())
    };
    Ok(reverse_sweep(net, trace, vec![seed], &mut gate)?.remove(0))
}

/// `input_grad·x + Σ_l bias_grads_l·b_l`.
pub fn reconstruct_output<T: Scalar>(
    x: &Tensor<T>,
    biases: &[&Tensor<T>],
    result: &BackwardResult<T>,
) -> Result<T> {
    if biases.len() != result.bias_grads.len() {
        return Err(Error::dim(format!(
            "{} bias tensors for {} bias gradients",
            biases.len(),
            result.bias_grads.len()
        )));
    }
    let mut y = result.input_grad.dot(x)?;
    for (b, gb) in biases.iter().zip(&result.bias_grads) {
        y += gb.dot(b)?;
    }
    Ok(y)
}

/// Forward replay through the recorded linear region: every ReLU becomes
/// `z ↦ H ⊙ mask ⊙ z` and every max pool gathers its recorded selection.
/// Returns the logits and the pre-activation `z` seen at each ReLU site.
/// Without masks the logits equal the original forward pass.
pub fn masked_forward<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    masks: Option<&[Tensor<T>]>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    net.check_trace(trace)?;
    if let Some(m) = masks {
        validate_masks(net, m)?;
    }
    let mut replay = Replay {
        trace,
        masks,
        pre: vec![Tensor::zeros(&[1]); net.site_count()],
    };
    let mut h = trace.input.clone();
    for node in net.nodes() {
        h = replay.node(node, &h)?;
    }
    Ok((h, replay.pre))
}

struct Replay<'a, T: Scalar> {
    trace: &'a ActivationTrace<T>,
    masks: Option<&'a [Tensor<T>]>,
    pre: Vec<Tensor<T>>,
}

impl<T: Scalar> Replay<'_, T> {
    fn site(&mut self, site: usize, z: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = z.mul(&self.trace.relu_masks[site])?;
        if let Some(m) = self.masks {
            y.mul_assign(&m[site])?;
        }
        self.pre[site] = z.clone();
        Ok(y)
    }

    fn node(&mut self, node: &Node<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(match &node.layer {
            Layer::Relu { site } => self.site(*site, x)?,
            Layer::MaxPool { pool, .. } => {
                let sel = &self.trace.pool_selections[*pool];
                let data = sel.iter().map(|&i| x.data()[i]).collect();
                Tensor::from_parts(node.out_shape.clone(), data)?
            }
            Layer::Residual(block) => {
                let mut h = x.clone();
                for inner in &block.main {
                    h = self.node(inner, &h)?;
                }
                let skip = match &block.projection {
                    Some(p) => self.node(p, x)?,
                    None => x.clone(),
                };
                let sum = h.add(&skip)?;
                match block.post_relu {
                    Some(site) => self.site(site, &sum)?,
                    None => sum,
                }
            }
            Layer::Dense { weight, bias } => {
                ops::dense_forward(x, weight, bias.as_ref().map(|b| &b.values))?
            }
            Layer::Conv2d { weight, bias, geom } => {
                ops::conv2d_forward(x, weight, bias.as_ref().map(|b| &b.values), *geom)?
            }
            Layer::AvgPool { kernel, stride } => ops::avgpool_forward(x, *kernel, *stride)?,
            Layer::GlobalAvgPool => ops::global_avgpool_forward(x)?,
            Layer::Flatten => x.clone().reshape(&node.out_shape)?,
        })
    }
}

/// `∇ₓF(x) ⊙ x` for the target logit, before the channel reduction.
pub fn vanilla_contributions<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    target_class: usize,
) -> Result<Tensor<T>> {
    let r = masked_backward(net, trace, target_class, None)?;
    r.input_grad.mul(&trace.input)
}

/// Gradient-times-input attribution map.
pub fn vanilla_attribution<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target_class: usize,
) -> Result<AttributionMap> {
    let trace = net.forward(x)?;
    let contrib = vanilla_contributions(net, &trace, target_class)?;
    AttributionMap::from_contributions(
        &contrib,
        MapMeta {
            target: target_class,
            method: "grad".into(),
            model_id: net.model_id().to_string(),
        },
    )
}
