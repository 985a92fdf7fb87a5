//! Layer graphs, weight loading and the recorded forward pass.
//!
//! A [`Network`] is a sequence of nodes, where a node may be a residual
//! block holding a main branch and an optional projection on its skip path.
//! Batch normalization exists only in architecture files; it is folded into
//! the preceding dense or conv layer while the network is built.

pub mod arch;
mod forward;
pub mod fuse;
pub mod weights;

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

pub use arch::{ArchFile, LayerSpec, PreprocessSpec, ResizeMode};
pub use forward::ActivationTrace;
pub use fuse::{fuse_batchnorm, BatchNormParams};
pub use weights::{WeightFile, WEIGHT_MAGIC};

use crate::error::{Error, Result};
use crate::ops::{conv2d_output_hw, pool_output_hw, ConvGeometry};
use crate::tensor::{Scalar, Tensor};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Bias vector of a dense or conv layer, tagged with its position among all
/// biases of the network (forward order).
#[derive(Debug, Clone)]
pub struct Bias<T: Scalar> {
    pub slot: usize,
    pub values: Tensor<T>,
}

#[derive(Debug, Clone)]
pub enum Layer<T: Scalar> {
    Dense {
        weight: Tensor<T>,
        bias: Option<Bias<T>>,
    },
    Conv2d {
        weight: Tensor<T>,
        bias: Option<Bias<T>>,
        geom: ConvGeometry,
    },
    Relu {
        site: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        pool: usize,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    Residual(ResidualBlock<T>),
}

/// `out = post_relu(main(x) + skip(x))`, where `skip` is the identity or a
/// projection layer.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T: Scalar> {
    pub main: Vec<Node<T>>,
    pub projection: Option<Box<Node<T>>>,
    pub post_relu: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Node<T: Scalar> {
    pub layer: Layer<T>,
    /// Tensor name prefix, e.g. `layer3.main.layer0`.
    pub name: String,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

impl<T: Scalar> Node<T> {
    pub fn kind_name(&self) -> &'static str {
        match self.layer {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu { .. } => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::AvgPool { .. } => "avgpool",
            Layer::GlobalAvgPool => "global_avgpool",
            Layer::Flatten => "flatten",
            Layer::Residual(_) => "residual_block",
        }
    }

    fn param_count(&self) -> usize {
        match &self.layer {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                weight.len() + bias.as_ref().map_or(0, |b| b.values.len())
            }
            Layer::Residual(block) => {
                block.main.iter().map(Node::param_count).sum::<usize>()
                    + block.projection.as_ref().map_or(0, |p| p.param_count())
            }
            _ => 0,
        }
    }
}

/// Per-class filter of the final dense classifier.
#[derive(Debug, Clone, Copy)]
pub struct TargetFilter<'a, T: Scalar> {
    pub class_index: usize,
    pub weights: &'a [T],
    pub bias: Option<T>,
}

/// One row of the layer table printed by `inspect`: a parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub name: String,
    pub kind: &'static str,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub params: usize,
}

/// An immutable, batch-norm-fused, shape-checked network.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    id: u64,
    model_id: String,
    input_shape: Vec<usize>,
    class_count: usize,
    preprocess: Option<PreprocessSpec>,
    nodes: Vec<Node<T>>,
    site_shapes: Vec<Vec<usize>>,
    bias_count: usize,
    pool_count: usize,
    fused_batchnorms: usize,
}

struct BuildCtx<'a> {
    weights: &'a WeightFile,
    top: usize,
    sites: Vec<Vec<usize>>,
    biases: usize,
    pools: usize,
    fused: usize,
}

impl BuildCtx<'_> {
    fn tensor<T: Scalar>(&self, name: &str, shape: &[usize]) -> Result<Tensor<T>> {
        let t = self
            .weights
            .get(name)
            .ok_or_else(|| Error::load(Some(self.top), format!("missing tensor {name}")))?;
        if t.shape() != shape && !(shape.len() == 1 && t.len() == shape[0]) {
            return Err(Error::load(
                Some(self.top),
                format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                ),
            ));
        }
        t.cast::<T>().reshape(shape)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::load(Some(self.top), msg)
    }

    fn batchnorm<T: Scalar>(&mut self, name: &str, channels: usize) -> Result<BatchNormParams<T>> {
        let eps = self
            .weights
            .get(&format!("{name}.eps"))
            .and_then(|t| t.data().first().copied())
            .ok_or_else(|| self.err(format!("missing tensor {name}.eps")))?;
        self.fused += 1;
        Ok(BatchNormParams {
            gamma: self.tensor(&format!("{name}.gamma"), &[channels])?,
            beta: self.tensor(&format!("{name}.beta"), &[channels])?,
            mean: self.tensor(&format!("{name}.mean"), &[channels])?,
            var: self.tensor(&format!("{name}.var"), &[channels])?,
            eps: T::of(eps as f64),
        })
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network from an architecture and named weights, fusing every
    /// batchnorm into the layer it follows.
    pub fn build(arch: &ArchFile, weights: &WeightFile) -> Result<Self> {
        if arch.class_count == 0 {
            return Err(Error::load(None, "class_count must be positive"));
        }
        if arch.input_shape.is_empty() || arch.input_shape.contains(&0) {
            return Err(Error::load(None, "input_shape must have positive extents"));
        }
        if let Some(p) = &arch.preprocess {
            p.validate().map_err(|e| Error::load(None, e.to_string()))?;
        }
        let mut ctx = BuildCtx {
            weights,
            top: 0,
            sites: Vec::new(),
            biases: 0,
            pools: 0,
            fused: 0,
        };
        let (nodes, out_shape) =
            build_seq::<T>(&arch.layers, "", arch.input_shape.clone(), &mut ctx, true)?;
        let last = arch.layers.len().saturating_sub(1);
        match nodes.last().map(|n| &n.layer) {
            Some(Layer::Dense { .. }) if out_shape == [arch.class_count] => {}
            _ => {
                return Err(Error::load(
                    Some(last),
                    format!(
                        "the final layer must be a dense classifier with {} outputs",
                        arch.class_count
                    ),
                ))
            }
        }
        Ok(Self {
            id: fresh_id(),
            model_id: arch.model_id.clone(),
            input_shape: arch.input_shape.clone(),
            class_count: arch.class_count,
            preprocess: arch.preprocess.clone(),
            nodes,
            site_shapes: ctx.sites,
            bias_count: ctx.biases,
            pool_count: ctx.pools,
            fused_batchnorms: ctx.fused,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn preprocess(&self) -> Option<&PreprocessSpec> {
        self.preprocess.as_ref()
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    /// Output shape of every ReLU site, in forward order.
    pub fn site_shapes(&self) -> &[Vec<usize>] {
        &self.site_shapes
    }

    pub fn site_count(&self) -> usize {
        self.site_shapes.len()
    }

    pub fn bias_count(&self) -> usize {
        self.bias_count
    }

    pub fn pool_count(&self) -> usize {
        self.pool_count
    }

    pub fn fused_batchnorms(&self) -> usize {
        self.fused_batchnorms
    }

    /// All bias vectors, indexed by slot.
    pub fn biases(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<Option<&Tensor<T>>> = vec![None; self.bias_count];
        visit_nodes(&self.nodes, &mut |node| match &node.layer {
            Layer::Dense { bias: Some(b), .. } | Layer::Conv2d { bias: Some(b), .. } => {
                out[b.slot] = Some(&b.values);
            }
            _ => {}
        });
        out.into_iter()
            .map(|b| b.expect("every slot is assigned"))
            .collect()
    }

    pub fn classifier(&self) -> (&Tensor<T>, Option<&Tensor<T>>) {
        match &self.nodes.last().expect("network has a classifier").layer {
            Layer::Dense { weight, bias } => (weight, bias.as_ref().map(|b| &b.values)),
            _ => unreachable!("build checks the final layer"),
        }
    }

    /// The filter computing the pre-softmax logit of `class_index`.
    pub fn select_target(&self, class_index: usize) -> Result<TargetFilter<'_, T>> {
        if class_index >= self.class_count {
            return Err(Error::arg(format!(
                "class index {class_index} out of range for {} classes",
                self.class_count
            )));
        }
        let (w, b) = self.classifier();
        let width = w.shape()[1];
        Ok(TargetFilter {
            class_index,
            weights: &w.data()[class_index * width..(class_index + 1) * width],
            bias: b.map(|b| b.data()[class_index]),
        })
    }

    /// A copy with the classifier replaced. The bias, if given, must exist
    /// in the original too (slot layout is fixed).
    pub fn with_classifier(&self, weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        let mut net = self.clone();
        net.id = fresh_id();
        let node = net.nodes.last_mut().expect("classifier");
        match &mut node.layer {
            Layer::Dense { weight: w, bias: b } => {
                w.expect_same_shape(&weight)?;
                *w = weight;
                match (b, bias) {
                    (Some(b), Some(nb)) => {
                        b.values.expect_same_shape(&nb)?;
                        b.values = nb;
                    }
                    (None, None) => {}
                    (Some(_), None) => return Err(Error::arg("classifier bias is required")),
                    (None, Some(_)) => return Err(Error::arg("classifier has no bias slot")),
                }
            }
            _ => unreachable!(),
        }
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            id: fresh_id(),
            model_id: self.model_id.clone(),
            input_shape: self.input_shape.clone(),
            class_count: self.class_count,
            preprocess: self.preprocess.clone(),
            nodes: self.nodes.iter().map(cast_node).collect(),
            site_shapes: self.site_shapes.clone(),
            bias_count: self.bias_count,
            pool_count: self.pool_count,
            fused_batchnorms: self.fused_batchnorms,
        }
    }

    /// Parametric layers in forward order, nested ones included.
    pub fn layer_table(&self) -> Vec<LayerRow> {
        let mut rows = Vec::new();
        visit_nodes(&self.nodes, &mut |node| {
            if matches!(node.layer, Layer::Dense { .. } | Layer::Conv2d { .. }) {
                rows.push(LayerRow {
                    name: node.name.clone(),
                    kind: node.kind_name(),
                    in_shape: node.in_shape.clone(),
                    out_shape: node.out_shape.clone(),
                    params: node.param_count(),
                });
            }
        });
        rows
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(Node::param_count).sum()
    }
}

/// Loads and fuses a network from a `DMBPW001` weight file and a JSON
/// architecture file.
pub fn load_network(
    weights_path: impl AsRef<Path>,
    arch_path: impl AsRef<Path>,
) -> Result<Network<f32>> {
    let arch = ArchFile::read(arch_path)?;
    let weights = WeightFile::read(weights_path)?;
    Network::build(&arch, &weights)
}

fn cast_node<T: Scalar, U: Scalar>(node: &Node<T>) -> Node<U> {
    let cast_bias = |b: &Option<Bias<T>>| {
        b.as_ref().map(|b| Bias {
            slot: b.slot,
            values: b.values.cast(),
        })
    };
    let layer = match &node.layer {
        Layer::Dense { weight, bias } => Layer::Dense {
            weight: weight.cast(),
            bias: cast_bias(bias),
        },
        Layer::Conv2d { weight, bias, geom } => Layer::Conv2d {
            weight: weight.cast(),
            bias: cast_bias(bias),
            geom: *geom,
        },
        Layer::Relu { site } => Layer::Relu { site: *site },
        Layer::MaxPool {
            kernel,
            stride,
            pool,
        } => Layer::MaxPool {
            kernel: *kernel,
            stride: *stride,
            pool: *pool,
        },
        Layer::AvgPool { kernel, stride } => Layer::AvgPool {
            kernel: *kernel,
            stride: *stride,
        },
        Layer::GlobalAvgPool => Layer::GlobalAvgPool,
        Layer::Flatten => Layer::Flatten,
        Layer::Residual(b) => Layer::Residual(ResidualBlock {
            main: b.main.iter().map(cast_node).collect(),
            projection: b.projection.as_ref().map(|p| Box::new(cast_node(p))),
            post_relu: b.post_relu,
        }),
    };
    Node {
        layer,
        name: node.name.clone(),
        in_shape: node.in_shape.clone(),
        out_shape: node.out_shape.clone(),
    }
}

pub(crate) fn visit_nodes<'a, T: Scalar>(nodes: &'a [Node<T>], f: &mut impl FnMut(&'a Node<T>)) {
    for node in nodes {
        f(node);
        if let Layer::Residual(block) = &node.layer {
            visit_nodes(&block.main, f);
            if let Some(p) = &block.projection {
                f(p);
            }
        }
    }
}

fn build_seq<T: Scalar>(
    specs: &[LayerSpec],
    prefix: &str,
    mut shape: Vec<usize>,
    ctx: &mut BuildCtx<'_>,
    top_level: bool,
) -> Result<(Vec<Node<T>>, Vec<usize>)> {
    let mut nodes = Vec::new();
    let mut i = 0;
    while i < specs.len() {
        if top_level {
            ctx.top = i;
        }
        let name = format!("{prefix}layer{i}");
        let in_shape = shape.clone();
        let next_is_bn = matches!(specs.get(i + 1), Some(LayerSpec::Batchnorm));
        let bn_name = format!("{prefix}layer{}", i + 1);
        let layer = match &specs[i] {
            LayerSpec::Dense {
                in_features,
                out_features,
                bias,
            } => {
                if shape != [*in_features] {
                    return Err(ctx.err(format!(
                        "dense layer {name} expects input [{in_features}], got {shape:?}"
                    )));
                }
                let weight =
                    ctx.tensor::<T>(&format!("{name}.weight"), &[*out_features, *in_features])?;
                let b = if *bias {
                    Some(ctx.tensor::<T>(&format!("{name}.bias"), &[*out_features])?)
                } else {
                    None
                };
                let (weight, b) = if next_is_bn {
                    if top_level {
                        ctx.top = i + 1;
                    }
                    let bn = ctx.batchnorm::<T>(&bn_name, *out_features)?;
                    let (w, b) = fuse_batchnorm(&weight, b.as_ref(), &bn)
                        .map_err(|e| ctx.err(e.to_string()))?;
                    (w, Some(b))
                } else {
                    (weight, b)
                };
                shape = vec![*out_features];
                Layer::Dense {
                    weight,
                    bias: b.map(|values| Bias {
                        slot: take(&mut ctx.biases),
                        values,
                    }),
                }
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                bias,
            } => {
                let [c, h, w] = shape[..] else {
                    return Err(
                        ctx.err(format!("conv2d {name} expects C×H×W input, got {shape:?}"))
                    );
                };
                if c != *in_channels {
                    return Err(ctx.err(format!(
                        "conv2d {name} expects {in_channels} channels, got {c}"
                    )));
                }
                let geom = ConvGeometry {
                    stride: (stride[0], stride[1]),
                    pad: (padding[0], padding[1]),
                };
                let (oh, ow) = conv2d_output_hw((h, w), (kernel[0], kernel[1]), geom)
                    .map_err(|e| ctx.err(e.to_string()))?;
                let weight = ctx.tensor::<T>(
                    &format!("{name}.weight"),
                    &[*out_channels, *in_channels, kernel[0], kernel[1]],
                )?;
                let b = if *bias {
                    Some(ctx.tensor::<T>(&format!("{name}.bias"), &[*out_channels])?)
                } else {
                    None
                };
                let (weight, b) = if next_is_bn {
                    if top_level {
                        ctx.top = i + 1;
                    }
                    let bn = ctx.batchnorm::<T>(&bn_name, *out_channels)?;
                    let (w, b) = fuse_batchnorm(&weight, b.as_ref(), &bn)
                        .map_err(|e| ctx.err(e.to_string()))?;
                    (w, Some(b))
                } else {
                    (weight, b)
                };
                shape = vec![*out_channels, oh, ow];
                Layer::Conv2d {
                    weight,
                    bias: b.map(|values| Bias {
                        slot: take(&mut ctx.biases),
                        values,
                    }),
                    geom,
                }
            }
            LayerSpec::Relu => {
                ctx.sites.push(shape.clone());
                Layer::Relu {
                    site: ctx.sites.len() - 1,
                }
            }
            LayerSpec::Maxpool { kernel, stride } | LayerSpec::Avgpool { kernel, stride } => {
                let [c, h, w] = shape[..] else {
                    return Err(ctx.err(format!("pooling expects C×H×W input, got {shape:?}")));
                };
                let (oh, ow) =
                    pool_output_hw((h, w), *kernel, *stride).map_err(|e| ctx.err(e.to_string()))?;
                shape = vec![c, oh, ow];
                if matches!(specs[i], LayerSpec::Maxpool { .. }) {
                    Layer::MaxPool {
                        kernel: *kernel,
                        stride: *stride,
                        pool: take(&mut ctx.pools),
                    }
                } else {
                    Layer::AvgPool {
                        kernel: *kernel,
                        stride: *stride,
                    }
                }
            }
            LayerSpec::GlobalAvgpool => {
                if shape.len() != 3 {
                    return Err(
                        ctx.err(format!("global_avgpool expects C×H×W input, got {shape:?}"))
                    );
                }
                shape = vec![shape[0]];
                Layer::GlobalAvgPool
            }
            LayerSpec::Flatten => {
                shape = vec![shape.iter().product()];
                Layer::Flatten
            }
            LayerSpec::Batchnorm => {
                return Err(ctx.err(format!(
                    "batchnorm {name} must directly follow a conv2d or dense layer"
                )));
            }
            LayerSpec::ResidualBlock {
                main,
                projection,
                post_relu,
            } => {
                let (main_nodes, main_out) =
                    build_seq::<T>(main, &format!("{name}.main."), shape.clone(), ctx, false)?;
                let projection = match projection {
                    None => {
                        if main_out != shape {
                            return Err(ctx.err(format!(
                                "residual block {name}: main branch maps {shape:?} to {main_out:?}; an identity skip needs equal shapes"
                            )));
                        }
                        None
                    }
                    Some(proj) => {
                        let ok = matches!(
                            proj.as_slice(),
                            [LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. }]
                                | [
                                    LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. },
                                    LayerSpec::Batchnorm
                                ]
                        );
                        if !ok {
                            return Err(ctx.err(format!(
                                "residual block {name}: projection must be one conv2d/dense layer with an optional batchnorm"
                            )));
                        }
                        let (mut p, p_out) = build_seq::<T>(
                            proj,
                            &format!("{name}.proj."),
                            shape.clone(),
                            ctx,
                            false,
                        )?;
                        if p_out != main_out {
                            return Err(ctx.err(format!(
                                "residual block {name}: projection output {p_out:?} differs from main output {main_out:?}"
                            )));
                        }
                        Some(Box::new(p.remove(0)))
                    }
                };
                shape = main_out;
                let post_relu = if *post_relu {
                    ctx.sites.push(shape.clone());
                    Some(ctx.sites.len() - 1)
                } else {
                    None
                };
                Layer::Residual(ResidualBlock {
                    main: main_nodes,
                    projection,
                    post_relu,
                })
            }
        };
        nodes.push(Node {
            layer,
            name,
            in_shape,
            out_shape: shape.clone(),
        });
        i += if next_is_bn && matches!(specs[i], LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
        {
            2
        } else {
            1
        };
    }
    Ok((nodes, shape))
}

fn take(counter: &mut usize) -> usize {
    *counter += 1;
    *counter - 1
}
