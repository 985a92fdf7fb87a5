#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dmbp::dmbp::{decompose, MaskLogits};
use dmbp::linearize::{masked_backward, masked_forward, reconstruct_output};
use dmbp::network::{load_network, ArchFile, Layer, LayerSpec, Network, Node, WeightFile};
use dmbp::synth::{random_input, random_model, SynthFamily, SynthOptions};
use dmbp::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

mod gradcheck;
mod laws;

#[allow(unused_imports)]
pub use gradcheck::*;
#[allow(unused_imports)]
pub use laws::*;

pub fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_network(name: &str) -> Network<f32> {
    let dir = fixtures_root().join(name);
    load_network(dir.join("model.dmbpw"), dir.join("arch.json")).unwrap()
}

pub fn fixture_model(name: &str) -> (ArchFile, WeightFile) {
    let dir = fixtures_root().join(name);
    (
        ArchFile::read(dir.join("arch.json")).unwrap(),
        WeightFile::read(dir.join("model.dmbpw")).unwrap(),
    )
}

#[derive(Debug, Deserialize)]
pub struct Export {
    pub source_model_id: String,
    pub mapping: Vec<MappingRow>,
    pub reference: Reference,
    pub layers: Vec<ExportLayer>,
}

#[derive(Debug, Deserialize)]
pub struct MappingRow {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Deserialize)]
pub struct Reference {
    pub input_shape: Vec<usize>,
    pub input: Vec<f32>,
    pub logits: Vec<f32>,
}

#[derive(Debug, Deserialize)]
pub struct ExportLayer {
    pub name: String,
    pub kind: String,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub params: usize,
}

pub fn read_export(name: &str) -> Export {
    let text = std::fs::read_to_string(fixtures_root().join(name).join("export.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub const EXPORTED: [&str; 6] = ["toy_a", "toy_b", "vgg", "resnet", "uniform", "mlp2"];

pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn as_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

/// Smallest |pre-activation| over all ReLU sites.
pub fn relu_margin<T: Scalar>(net: &Network<T>, x: &Tensor<T>) -> f64 {
    let trace = net.forward(x).unwrap();
    let (_, pre) = masked_forward(net, &trace, None).unwrap();
    pre.iter()
        .flat_map(|t| t.data().iter().map(|v| v.as_f64().abs()))
        .fold(f64::INFINITY, f64::min)
}

/// A random input in `[-1, 1)` whose pre-activations all sit at least
/// `margin` away from zero, redrawn until one does.
pub fn nudged_input<T: Scalar>(net: &Network<T>, seed: u64, margin: f64) -> Tensor<T> {
    (0..1000)
        .map(|k| random_input::<T>(net.input_shape(), seed * 1000 + k))
        .find(|x| relu_margin(net, x) >= margin)
        .expect("an input away from every ReLU boundary")
}

/// Activation pattern: every ReLU mask and max-pool selection.
pub fn same_region<T: Scalar>(net: &Network<T>, a: &Tensor<T>, b: &Tensor<T>) -> bool {
    let (ta, tb) = (net.forward(a).unwrap(), net.forward(b).unwrap());
    ta.relu_masks == tb.relu_masks && ta.pool_selections == tb.pool_selections
}

pub struct LinearizationReport {
    pub networks: usize,
    /// max |recon − logit| / max(1, |logit|) in 32-bit.
    pub worst_f32: f64,
    /// max |recon − logit| in 64-bit.
    pub worst_f64: f64,
}

/// `∇ₓF·x + Σ ∇_bF·b` against the forward logit of every class, on
/// `count` random networks cycling through every family, with and
/// without batchnorm.
pub fn linearization_sweep(count: usize) -> LinearizationReport {
    let mut worst_f32: f64 = 0.0;
    let mut worst_f64: f64 = 0.0;
    for i in 0..count {
        let family = SynthFamily::ALL[i % 3];
        let opts = SynthOptions {
            batchnorm: i % 2 == 0,
            ..Default::default()
        };
        let (arch, weights) = random_model(family, 500 + i as u64, opts);
        let n64 = Network::<f64>::build(&arch, &weights).unwrap();
        let n32 = Network::<f32>::build(&arch, &weights).unwrap();
        let x64 = nudged_input(&n64, i as u64, 1e-6);
        let x32 = x64.cast::<f32>();
        assert!(
            relu_margin(&n32, &x32) >= 1e-6,
            "32-bit input too close to a ReLU boundary"
        );
        for class in 0..n64.class_count() {
            let t = n64.forward(&x64).unwrap();
            let r = masked_backward(&n64, &t, class, None).unwrap();
            let y = reconstruct_output(&t.input, &n64.biases(), &r).unwrap();
            worst_f64 = worst_f64.max((y - t.logit(class)).abs());

            let t = n32.forward(&x32).unwrap();
            let r = masked_backward(&n32, &t, class, None).unwrap();
            let y = reconstruct_output(&t.input, &n32.biases(), &r).unwrap();
            let l = t.logit(class) as f64;
            worst_f32 = worst_f32.max((y as f64 - l).abs() / l.abs().max(1.0));
        }
    }
    LinearizationReport {
        networks: count,
        worst_f32,
        worst_f64,
    }
}

// ---------------------------------------------------------------------------
// Plain matrices for hand-expanded oracles.

pub type Mat = Vec<Vec<f64>>;

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub fn matvec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn diag(d: &[f64]) -> Mat {
    (0..d.len())
        .map(|i| {
            (0..d.len())
                .map(|j| if i == j { d[i] } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn heaviside(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&z| if z > 0.0 { 1.0 } else { 0.0 }).collect()
}

fn flat(m: &Mat) -> Vec<f32> {
    m.iter().flatten().map(|&v| v as f32).collect()
}

fn dense_spec(inf: usize, outf: usize, bias: bool) -> LayerSpec {
    LayerSpec::Dense {
        in_features: inf,
        out_features: outf,
        bias,
    }
}

/// Dense ReLU stack with the given weights; every hidden layer is followed
/// by a ReLU and the last matrix is the classifier.
pub fn dense_stack(weights: &[Mat], biases: &[Option<Vec<f64>>]) -> Network<f64> {
    let mut layers = Vec::new();
    let mut w = WeightFile::default();
    for (l, (m, b)) in weights.iter().zip(biases).enumerate() {
        let name = format!("layer{}", layers.len());
        w.insert(
            format!("{name}.weight"),
            Tensor::new(vec![m.len(), m[0].len()], flat(m)).unwrap(),
        );
        if let Some(b) = b {
            w.insert(
                format!("{name}.bias"),
                Tensor::from_vec(b.iter().map(|&v| v as f32).collect()),
            );
        }
        layers.push(dense_spec(m[0].len(), m.len(), b.is_some()));
        if l + 1 < weights.len() {
            layers.push(LayerSpec::Relu);
        }
    }
    let arch = ArchFile {
        model_id: "dense-stack".into(),
        input_shape: vec![weights[0][0].len()],
        class_count: weights.last().unwrap().len(),
        preprocess: None,
        layers,
    };
    Network::build(&arch, &w).unwrap()
}

/// Three hidden layers: the first two with biases, the third without, and
/// a bias-free two-class classifier. Every entry is a short binary
/// fraction so the f32 weight file stores it exactly.
pub struct AppendixA {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
    pub classifier: Mat,
    pub x: Vec<f64>,
}

impl AppendixA {
    pub fn new() -> Self {
        Self {
            w1: vec![
                vec![0.5, -1.0, 0.25],
                vec![-0.75, 0.5, 1.0],
                vec![1.0, 1.0, -0.5],
                vec![-0.5, -0.25, -1.0],
            ],
            b1: vec![0.25, -0.5, 0.125, 0.5],
            w2: vec![
                vec![1.0, -0.5, 0.75, 0.25],
                vec![-1.0, 0.5, 0.5, -0.25],
                vec![0.25, 1.25, -0.75, 0.5],
                vec![0.5, -1.5, 0.25, 1.0],
            ],
            b2: vec![-0.25, 0.375, 0.125, -0.5],
            w3: vec![
                vec![0.75, -0.5, 1.0, -0.25],
                vec![-0.5, 1.0, 0.25, 0.5],
                vec![1.25, 0.25, -1.0, 0.75],
            ],
            classifier: vec![vec![1.0, -0.75, 0.5], vec![-0.5, 1.25, 0.25]],
            x: vec![1.0, -0.5, 2.0],
        }
    }

    pub fn network(&self) -> Network<f64> {
        dense_stack(
            &[
                self.w1.clone(),
                self.w2.clone(),
                self.w3.clone(),
                self.classifier.clone(),
            ],
            &[Some(self.b1.clone()), Some(self.b2.clone()), None, None],
        )
    }

    /// Heaviside patterns of the three hidden layers at `x`.
    pub fn patterns(&self) -> [Vec<f64>; 3] {
        let add = |a: Vec<f64>, b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let relu = |v: &[f64]| v.iter().map(|z| z.max(0.0)).collect::<Vec<_>>();
        let z1 = add(matvec(&self.w1, &self.x), &self.b1);
        let z2 = add(matvec(&self.w2, &relu(&z1)), &self.b2);
        let z3 = matvec(&self.w3, &relu(&z2));
        [heaviside(&z1), heaviside(&z2), heaviside(&z3)]
    }

    /// `ŵᵀŴ₃Ŵ₂Ŵ₁x + ŵᵀŴ₃Ŵ₂b̂₁ + ŵᵀŴ₃b̂₂` with `Ŵₗ = Hₗ Wₗ` and
    /// `b̂ₗ = Hₗ bₗ`, expanded as explicit matrix products.
    pub fn expression(&self, class: usize) -> f64 {
        let [h1, h2, h3] = self.patterns();
        let wt = vec![self.classifier[class].clone()];
        let w1h = matmul(&diag(&h1), &self.w1);
        let w2h = matmul(&diag(&h2), &self.w2);
        let w3h = matmul(&diag(&h3), &self.w3);
        let top = matmul(&wt, &w3h);
        let input_path = matmul(&matmul(&top, &w2h), &w1h);
        let b1_path = matmul(&top, &w2h);
        let b1h = matvec(&diag(&h1), &self.b1);
        let b2h = matvec(&diag(&h2), &self.b2);
        matvec(&input_path, &self.x)[0] + matvec(&b1_path, &b1h)[0] + matvec(&top, &b2h)[0]
    }
}

impl Default for AppendixA {
    fn default() -> Self {
        Self::new()
    }
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub struct CrossTermReport {
    pub cases: usize,
    pub worst: f64,
}

/// Two hidden-layer, bias-free dense nets with binary masks: `y~` against
/// `wᵀ(Σ₂Ŵ₂(I−Σ₁)Ŵ₁ + (I−Σ₂)Ŵ₂Σ₁Ŵ₁)x`.
pub fn two_layer_cross_terms(cases: usize) -> CrossTermReport {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (n, m1, m2) = (
            rng.random_range(2..6),
            rng.random_range(2..6),
            rng.random_range(2..6),
        );
        let w1 = random_mat(&mut rng, m1, n);
        let w2 = random_mat(&mut rng, m2, m1);
        let wc = random_mat(&mut rng, 1, m2);
        let x = random_vec(&mut rng, n);
        let s1: Vec<f64> = (0..m1).map(|_| rng.random_range(0..2) as f64).collect();
        let s2: Vec<f64> = (0..m2).map(|_| rng.random_range(0..2) as f64).collect();
        let net = dense_stack(&[w1.clone(), w2.clone(), wc.clone()], &[None, None, None]);
        // Weights pass through f32 in the weight file.
        let round = |m: &Mat| -> Mat {
            m.iter()
                .map(|r| r.iter().map(|&v| v as f32 as f64).collect())
                .collect()
        };
        let (w1, w2, wc) = (round(&w1), round(&w2), round(&wc));

        let h1 = heaviside(&matvec(&w1, &x));
        let relu1: Vec<f64> = matvec(&w1, &x).iter().map(|z| z.max(0.0)).collect();
        let h2 = heaviside(&matvec(&w2, &relu1));
        let w1h = matmul(&diag(&h1), &w1);
        let w2h = matmul(&diag(&h2), &w2);
        let comp = |s: &[f64]| s.iter().map(|v| 1.0 - v).collect::<Vec<_>>();
        let a = matmul(&matmul(&diag(&s2), &w2h), &matmul(&diag(&comp(&s1)), &w1h));
        let b = matmul(&matmul(&diag(&comp(&s2)), &w2h), &matmul(&diag(&s1), &w1h));
        let cross: Mat = a
            .iter()
            .zip(&b)
            .map(|(r, q)| r.iter().zip(q).map(|(u, v)| u + v).collect())
            .collect();
        let expected = matvec(&matmul(&wc, &cross), &x)[0];

        let saturate = |s: &[f64]| {
            Tensor::from_vec(
                s.iter()
                    .map(|&v| if v > 0.5 { 40.0 } else { -40.0 })
                    .collect(),
            )
        };
        let logits = MaskLogits {
            sites: vec![saturate(&s1), saturate(&s2)],
        };
        let trace = net.forward(&Tensor::from_vec(x.clone())).unwrap();
        let d = decompose(&net, &trace, 0, &logits).unwrap();
        worst = worst.max((d.y_nui - expected).abs());
    }
    CrossTermReport { cases, worst }
}

// ---------------------------------------------------------------------------
// Unfused reference interpreter over the architecture and weight files.

#[derive(Clone)]
struct Value {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn tensor(w: &WeightFile, name: &str) -> Vec<f64> {
    w.get(name)
        .unwrap_or_else(|| panic!("missing tensor {name}"))
        .data()
        .iter()
        .map(|&v| v as f64)
        .collect()
}

fn reference_layers(specs: &[LayerSpec], prefix: &str, w: &WeightFile, mut v: Value) -> Value {
    for (i, spec) in specs.iter().enumerate() {
        let name = format!("{prefix}layer{i}");
        v = reference_layer(spec, &name, w, v);
    }
    v
}

fn reference_layer(spec: &LayerSpec, name: &str, w: &WeightFile, v: Value) -> Value {
    match spec {
        LayerSpec::Dense {
            in_features,
            out_features,
            bias,
        } => {
            let wt = tensor(w, &format!("{name}.weight"));
            let b = bias.then(|| tensor(w, &format!("{name}.bias")));
            let data = (0..*out_features)
                .map(|o| {
                    let s: f64 = (0..*in_features)
                        .map(|i| wt[o * in_features + i] * v.data[i])
                        .sum();
                    s + b.as_ref().map_or(0.0, |b| b[o])
                })
                .collect();
            Value {
                shape: vec![*out_features],
                data,
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
            let wt = tensor(w, &format!("{name}.weight"));
            let b = bias.then(|| tensor(w, &format!("{name}.bias")));
            let (h, wd) = (v.shape[1] as isize, v.shape[2] as isize);
            let oh = (v.shape[1] + 2 * padding[0] - kernel[0]) / stride[0] + 1;
            let ow = (v.shape[2] + 2 * padding[1] - kernel[1]) / stride[1] + 1;
            let mut data = vec![0.0; out_channels * oh * ow];
            for o in 0..*out_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut s = b.as_ref().map_or(0.0, |b| b[o]);
                        for c in 0..*in_channels {
                            for ki in 0..kernel[0] {
                                for kj in 0..kernel[1] {
                                    let iy = (y * stride[0] + ki) as isize - padding[0] as isize;
                                    let ix = (x * stride[1] + kj) as isize - padding[1] as isize;
                                    if iy < 0 || ix < 0 || iy >= h || ix >= wd {
                                        continue;
                                    }
                                    let xv = v.data[(c * h as usize + iy as usize) * wd as usize
                                        + ix as usize];
                                    s += wt
                                        [((o * in_channels + c) * kernel[0] + ki) * kernel[1] + kj]
                                        * xv;
                                }
                            }
                        }
                        data[(o * oh + y) * ow + x] = s;
                    }
                }
            }
            Value {
                shape: vec![*out_channels, oh, ow],
                data,
            }
        }
        LayerSpec::Batchnorm => {
            let g = tensor(w, &format!("{name}.gamma"));
            let beta = tensor(w, &format!("{name}.beta"));
            let mean = tensor(w, &format!("{name}.mean"));
            let var = tensor(w, &format!("{name}.var"));
            let eps = tensor(w, &format!("{name}.eps"))[0];
            let c = v.shape[0];
            let plane = v.data.len() / c;
            let data = v
                .data
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let ch = i / plane;
                    (x - mean[ch]) / (var[ch] + eps).sqrt() * g[ch] + beta[ch]
                })
                .collect();
            Value {
                shape: v.shape,
                data,
            }
        }
        LayerSpec::Relu => Value {
            data: v.data.iter().map(|x| x.max(0.0)).collect(),
            shape: v.shape,
        },
        LayerSpec::Maxpool { kernel, stride } | LayerSpec::Avgpool { kernel, stride } => {
            let is_max = matches!(spec, LayerSpec::Maxpool { .. });
            let (c, h, wd) = (v.shape[0], v.shape[1], v.shape[2]);
            let (oh, ow) = ((h - kernel) / stride + 1, (wd - kernel) / stride + 1);
            let mut data = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for y in 0..oh {
                    for x in 0..ow {
                        let window = (0..*kernel).flat_map(|i| (0..*kernel).map(move |j| (i, j)));
                        let vals = window
                            .map(|(i, j)| v.data[(ch * h + y * stride + i) * wd + x * stride + j]);
                        data.push(if is_max {
                            vals.fold(f64::NEG_INFINITY, f64::max)
                        } else {
                            vals.sum::<f64>() / (kernel * kernel) as f64
                        });
                    }
                }
            }
            Value {
                shape: vec![c, oh, ow],
                data,
            }
        }
        LayerSpec::GlobalAvgpool => {
            let c = v.shape[0];
            let plane = v.data.len() / c;
            Value {
                shape: vec![c],
                data: v
                    .data
                    .chunks(plane)
                    .map(|p| p.iter().sum::<f64>() / plane as f64)
                    .collect(),
            }
        }
        LayerSpec::Flatten => Value {
            shape: vec![v.data.len()],
            data: v.data,
        },
        LayerSpec::ResidualBlock {
            main,
            projection,
            post_relu,
        } => {
            let m = reference_layers(main, &format!("{name}.main."), w, v.clone());
            let skip = match projection {
                Some(p) => reference_layers(p, &format!("{name}.proj."), w, v),
                None => v,
            };
            let data = m
                .data
                .iter()
                .zip(&skip.data)
                .map(|(a, b)| if *post_relu { (a + b).max(0.0) } else { a + b })
                .collect();
            Value {
                shape: m.shape,
                data,
            }
        }
    }
}

/// Logits computed straight from the files, batchnorm applied unfused.
pub fn reference_logits(arch: &ArchFile, weights: &WeightFile, x: &[f64]) -> Vec<f64> {
    let v = Value {
        shape: arch.input_shape.clone(),
        data: x.to_vec(),
    };
    reference_layers(&arch.layers, "", weights, v).data
}

/// `(bias slot, tensor-name prefix)` for every biased layer.
pub fn bias_owners<T: Scalar>(net: &Network<T>) -> Vec<(usize, String)> {
    fn walk<T: Scalar>(nodes: &[Node<T>], out: &mut Vec<(usize, String)>) {
        for n in nodes {
            match &n.layer {
                Layer::Dense { bias: Some(b), .. } | Layer::Conv2d { bias: Some(b), .. } => {
                    out.push((b.slot, n.name.clone()))
                }
                Layer::Residual(block) => {
                    walk(&block.main, out);
                    if let Some(p) = &block.projection {
                        walk(std::slice::from_ref(p.as_ref()), out);
                    }
                }
                _ => {}
            }
        }
    }
    let mut out = Vec::new();
    walk(net.nodes(), &mut out);
    out.sort();
    out
}
