use super::{Layer, Network, Node};
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Scalar, Tensor};

/// Everything a forward pass fixes about the local linear region: the
/// Heaviside pattern of each ReLU site and the selection of each max pool.
/// Valid only together with the network and input that produced it.
#[derive(Debug, Clone)]
pub struct ActivationTrace<T: Scalar = f32> {
    pub(crate) net_id: u64,
    pub input: Tensor<T>,
    /// `H(pre-activation)` per ReLU site, with `H(0) = 0`.
    pub relu_masks: Vec<Tensor<T>>,
    /// Per max pool, the flat input index chosen for each output element.
    pub pool_selections: Vec<Vec<usize>>,
    /// Output of each top-level node.
    pub activations: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
}

impl<T: Scalar> ActivationTrace<T> {
    pub fn logit(&self, class_index: usize) -> T {
        self.logits.data()[class_index]
    }

    pub fn network_id(&self) -> u64 {
        self.net_id
    }
}

impl<T: Scalar> Network<T> {
    /// Runs the network and records its activation pattern.
    pub fn forward(&self, x: &Tensor<T>) -> Result<ActivationTrace<T>> {
        if x.shape() != self.input_shape() {
            return Err(Error::dim(format!(
                "input shape {:?}, network expects {:?}",
                x.shape(),
                self.input_shape()
            )));
        }
        x.check_finite("network input")?;
        let mut trace = ActivationTrace {
            net_id: self.id(),
            input: x.clone(),
            relu_masks: vec![Tensor::zeros(&[1]); self.site_count()],
            pool_selections: vec![Vec::new(); self.pool_count()],
            activations: Vec::with_capacity(self.nodes().len()),
            logits: Tensor::zeros(&[1]),
        };
        let mut h = x.clone();
        for node in self.nodes() {
            h = run_node(node, &h, &mut trace)?;
            trace.activations.push(h.clone());
        }
        h.check_finite("logits")?;
        trace.logits = h;
        Ok(trace)
    }

    /// Logits only.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x)?.logits)
    }

    pub fn check_trace(&self, trace: &ActivationTrace<T>) -> Result<()> {
        if trace.net_id != self.id() {
            return Err(Error::arg(
                "activation trace was produced by a different network",
            ));
        }
        Ok(())
    }
}

fn run_node<T: Scalar>(
    node: &Node<T>,
    x: &Tensor<T>,
    trace: &mut ActivationTrace<T>,
) -> Result<Tensor<T>> {
    Ok(match &node.layer {
        Layer::Dense { weight, bias } => {
            ops::dense_forward(x, weight, bias.as_ref().map(|b| &b.values))?
        }
        Layer::Conv2d { weight, bias, geom } => {
            ops::conv2d_forward(x, weight, bias.as_ref().map(|b| &b.values), *geom)?
        }
        Layer::Relu { site } => {
            let (y, mask) = ops::relu_forward(x);
            trace.relu_masks[*site] = mask;
            y
        }
        Layer::MaxPool {
            kernel,
            stride,
            pool,
        } => {
            let (y, idx) = ops::maxpool_forward(x, *kernel, *stride)?;
            trace.pool_selections[*pool] = idx;
            y
        }
        Layer::AvgPool { kernel, stride } => ops::avgpool_forward(x, *kernel, *stride)?,
        Layer::GlobalAvgPool => ops::global_avgpool_forward(x)?,
        Layer::Flatten => x.clone().reshape(&node.out_shape)?,
        Layer::Residual(block) => {
            let mut h = x.clone();
            for inner in &block.main {
                h = run_node(inner, &h, trace)?;
            }
            let skip = match &block.projection {
                Some(p) => run_node(p, x, trace)?,
                None => x.clone(),
            };
            let sum = h.add(&skip)?;
            match block.post_relu {
                Some(site) => {
                    let (y, mask) = ops::relu_forward(&sum);
                    trace.relu_masks[site] = mask;
                    y
                }
                None => sum,
            }
        }
    })
}
