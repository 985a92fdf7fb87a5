//! Small random networks for tests, demos and benchmarks.
//!
//! Weights are drawn with He scaling from a seeded ChaCha stream, so a
//! `(family, seed, options)` triple always yields the same model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::network::{ArchFile, LayerSpec, Network, WeightFile};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthFamily {
    /// Dense layers only.
    Mlp,
    /// Convolutions, pooling and a dense head.
    Conv,
    /// A stem convolution, an identity block, a projected block and global
    /// average pooling.
    Residual,
}

impl SynthFamily {
    pub const ALL: [SynthFamily; 3] = [SynthFamily::Mlp, SynthFamily::Conv, SynthFamily::Residual];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    /// Biases on hidden layers.
    pub biases: bool,
    /// Bias on the classifier.
    pub classifier_bias: bool,
    /// Batchnorm after some hidden layers (fused at build time).
    pub batchnorm: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            biases: true,
            classifier_bias: true,
            batchnorm: true,
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    weights: WeightFile,
    opts: SynthOptions,
}

impl Gen {
    fn normal(&mut self, shape: &[usize], std: f64) -> Tensor<f32> {
        let d = Normal::new(0.0, std).expect("positive std");
        Tensor::from_fn(shape, |_| d.sample(&mut self.rng) as f32)
    }

    fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f32> {
        Tensor::from_fn(shape, |_| self.rng.random_range(lo..hi) as f32)
    }

    fn dense(
        &mut self,
        specs: &mut Vec<LayerSpec>,
        prefix: &str,
        inf: usize,
        outf: usize,
        bias: bool,
    ) {
        let name = format!("{prefix}layer{}", specs.len());
        let w = self.normal(&[outf, inf], (2.0 / inf as f64).sqrt());
        self.weights.insert(format!("{name}.weight"), w);
        if bias {
            let b = self.normal(&[outf], 0.1);
            self.weights.insert(format!("{name}.bias"), b);
        }
        specs.push(LayerSpec::Dense {
            in_features: inf,
            out_features: outf,
            bias,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        specs: &mut Vec<LayerSpec>,
        prefix: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) {
        let name = format!("{prefix}layer{}", specs.len());
        let w = self.normal(&[cout, cin, k, k], (2.0 / (cin * k * k) as f64).sqrt());
        self.weights.insert(format!("{name}.weight"), w);
        let bias = self.opts.biases;
        if bias {
            let b = self.normal(&[cout], 0.1);
            self.weights.insert(format!("{name}.bias"), b);
        }
        specs.push(LayerSpec::Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel: [k, k],
            stride: [stride, stride],
            padding: [pad, pad],
            bias,
        });
    }

    fn maybe_bn(&mut self, specs: &mut Vec<LayerSpec>, prefix: &str, channels: usize) {
        if !self.opts.batchnorm || !self.rng.random_bool(0.5) {
            return;
        }
        let name = format!("{prefix}layer{}", specs.len());
        let gamma = self.uniform(&[channels], 0.5, 1.5);
        let beta = self.normal(&[channels], 0.1);
        let mean = self.normal(&[channels], 0.1);
        let var = self.uniform(&[channels], 0.5, 1.5);
        self.weights.insert(format!("{name}.gamma"), gamma);
        self.weights.insert(format!("{name}.beta"), beta);
        self.weights.insert(format!("{name}.mean"), mean);
        self.weights.insert(format!("{name}.var"), var);
        self.weights
            .insert(format!("{name}.eps"), Tensor::from_vec(vec![1e-5]));
        specs.push(LayerSpec::Batchnorm);
    }
}

/// Architecture and weights of a random model.
pub fn random_model(family: SynthFamily, seed: u64, opts: SynthOptions) -> (ArchFile, WeightFile) {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        weights: WeightFile::default(),
        opts,
    };
    let classes = g.rng.random_range(2..=4);
    let mut layers = Vec::new();
    let input_shape = match family {
        SynthFamily::Mlp => {
            let d = g.rng.random_range(3..=8);
            let mut width = d;
            for _ in 0..g.rng.random_range(1..=3) {
                let next = g.rng.random_range(3..=8);
                g.dense(&mut layers, "", width, next, opts.biases);
                g.maybe_bn(&mut layers, "", next);
                layers.push(LayerSpec::Relu);
                width = next;
            }
            g.dense(&mut layers, "", width, classes, opts.classifier_bias);
            vec![d]
        }
        SynthFamily::Conv => {
            let c = g.rng.random_range(1..=3);
            let side = g.rng.random_range(6..=9);
            let c1 = g.rng.random_range(2..=4);
            g.conv(&mut layers, "", c, c1, 3, 1, 1);
            g.maybe_bn(&mut layers, "", c1);
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::Maxpool {
                kernel: 2,
                stride: 2,
            });
            let mut s = side / 2;
            let c2 = g.rng.random_range(2..=4);
            if s % 2 == 1 && g.rng.random_bool(0.5) {
                g.conv(&mut layers, "", c1, c2, 3, 2, 1);
                s = (s - 1) / 2 + 1;
            } else {
                g.conv(&mut layers, "", c1, c2, 3, 1, 1);
            }
            layers.push(LayerSpec::Relu);
            if s >= 2 && g.rng.random_bool(0.5) {
                layers.push(LayerSpec::Avgpool {
                    kernel: 2,
                    stride: 1,
                });
                s -= 1;
            }
            layers.push(LayerSpec::Flatten);
            let flat = c2 * s * s;
            let hidden = g.rng.random_range(3..=6);
            g.dense(&mut layers, "", flat, hidden, opts.biases);
            layers.push(LayerSpec::Relu);
            g.dense(&mut layers, "", hidden, classes, opts.classifier_bias);
            vec![c, side, side]
        }
        SynthFamily::Residual => {
            let c = g.rng.random_range(1..=3);
            let side = 7;
            let c1 = g.rng.random_range(2..=3);
            g.conv(&mut layers, "", c, c1, 3, 1, 1);
            layers.push(LayerSpec::Relu);

            let prefix = format!("layer{}.main.", layers.len());
            let mut main = Vec::new();
            g.conv(&mut main, &prefix, c1, c1, 3, 1, 1);
            g.maybe_bn(&mut main, &prefix, c1);
            main.push(LayerSpec::Relu);
            g.conv(&mut main, &prefix, c1, c1, 3, 1, 1);
            layers.push(LayerSpec::ResidualBlock {
                main,
                projection: None,
                post_relu: true,
            });

            let c2 = g.rng.random_range(2..=4);
            let top = layers.len();
            let (mprefix, pprefix) = (format!("layer{top}.main."), format!("layer{top}.proj."));
            let mut main = Vec::new();
            g.conv(&mut main, &mprefix, c1, c2, 3, 2, 1);
            main.push(LayerSpec::Relu);
            g.conv(&mut main, &mprefix, c2, c2, 3, 1, 1);
            let mut proj = Vec::new();
            g.conv(&mut proj, &pprefix, c1, c2, 1, 2, 0);
            g.maybe_bn(&mut proj, &pprefix, c2);
            let post_relu = g.rng.random_bool(0.75);
            layers.push(LayerSpec::ResidualBlock {
                main,
                projection: Some(proj),
                post_relu,
            });
            layers.push(LayerSpec::GlobalAvgpool);
            g.dense(&mut layers, "", c2, classes, opts.classifier_bias);
            vec![c, side, side]
        }
    };
    let arch = ArchFile {
        model_id: format!("synth-{family:?}-{seed}").to_lowercase(),
        input_shape,
        class_count: classes,
        preprocess: None,
        layers,
    };
    (arch, g.weights)
}

pub fn random_network<T: Scalar>(
    family: SynthFamily,
    seed: u64,
    opts: SynthOptions,
) -> Result<Network<T>> {
    let (arch, weights) = random_model(family, seed, opts);
    Network::build(&arch, &weights)
}

/// Uniform input in `[-1, 1)`.
pub fn random_input<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-1.0..1.0)))
}
