use dmbp::dmbp::{attribution_map, decompose, optimize, DmbpConfig, MaskLogits};
use dmbp::imaging::MapMeta;
use dmbp::linearize::vanilla_attribution;
use dmbp::network::{ArchFile, LayerSpec, Network, WeightFile};
use dmbp::synth::{random_network, SynthFamily, SynthOptions};
use dmbp::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nudged_input;

/// Largest `|y⁺ + y⁻ + y~ − logit|` over every recorded iteration, in
/// units of `ε · max(1, |logit|, |y⁺|, |y⁻|)`.
pub fn partition_residual<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target: usize,
    iterations: usize,
) -> f64 {
    let cfg = DmbpConfig {
        iterations,
        ..Default::default()
    };
    let out = optimize(net, x, target, &cfg).unwrap();
    let logit = out.trace.logit(target);
    let eps = T::epsilon().as_f64();
    let mut rows: Vec<(T, T, T)> = out
        .loss_trace
        .iter()
        .map(|r| (T::of(r.y_pos), T::of(r.y_neg), T::of(r.y_nui)))
        .collect();
    let d = &out.decomposition;
    rows.push((d.y_pos, d.y_neg, d.y_nui));
    rows.iter()
        .map(|&(p, n, u)| {
            let scale = logit.abs().max(p.abs()).max(n.abs()).max(T::one()).as_f64();
            (p + n + u - logit).abs().as_f64() / (eps * scale)
        })
        .fold(0.0, f64::max)
}

/// Saturated masks against the gradient-times-input map, relative to the
/// latter's largest magnitude.
pub fn saturated_vs_vanilla<T: Scalar>(net: &Network<T>, x: &Tensor<T>, target: usize) -> f64 {
    let trace = net.forward(x).unwrap();
    let d = decompose(net, &trace, target, &MaskLogits::saturated(net)).unwrap();
    let meta = MapMeta {
        target,
        method: "dmbp".into(),
        model_id: net.model_id().into(),
    };
    let ours = attribution_map(x, &d, meta).unwrap();
    let plain = vanilla_attribution(net, x, target).unwrap();
    let scale = plain.max_abs().max(1e-30) as f64;
    ours.values
        .iter()
        .zip(&plain.values)
        .map(|(a, b)| (a - b).abs() as f64 / scale)
        .fold(0.0, f64::max)
}

fn one_hidden_layer(rng: &mut ChaCha8Rng, conv: bool) -> Network<f64> {
    let mut w = WeightFile::default();
    let mut normal = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random_range(-1.0f32..1.0));
    let classes = 3;
    let (input_shape, layers) = if conv {
        let (c, side, k) = (2, 5, 3);
        w.insert("layer0.weight", normal(&[k, c, 3, 3]));
        w.insert("layer3.weight", normal(&[classes, k * side * side]));
        let layers = vec![
            LayerSpec::Conv2d {
                in_channels: c,
                out_channels: k,
                kernel: [3, 3],
                stride: [1, 1],
                padding: [1, 1],
                bias: false,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                in_features: k * side * side,
                out_features: classes,
                bias: false,
            },
        ];
        (vec![c, side, side], layers)
    } else {
        let (d, hidden) = (6, 8);
        w.insert("layer0.weight", normal(&[hidden, d]));
        w.insert("layer2.weight", normal(&[classes, hidden]));
        let layers = vec![
            LayerSpec::Dense {
                in_features: d,
                out_features: hidden,
                bias: false,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                in_features: hidden,
                out_features: classes,
                bias: false,
            },
        ];
        (vec![d], layers)
    };
    let arch = ArchFile {
        model_id: "one-hidden".into(),
        input_shape,
        class_count: classes,
        preprocess: None,
        layers,
    };
    Network::build(&arch, &w).unwrap()
}

/// Largest `|y~|` for bias-free single-hidden-layer nets (dense and conv)
/// under random mask logits.
pub fn single_layer_nuisance(cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..cases {
        let net = one_hidden_layer(&mut rng, i % 2 == 1);
        let x = Tensor::from_fn(net.input_shape(), |_| rng.random_range(-1.0..1.0));
        let trace = net.forward(&x).unwrap();
        let mut logits = MaskLogits::<f64>::constant(&net, 0.0);
        for v in logits.sites[0].data_mut() {
            *v = rng.random_range(-6.0..6.0);
        }
        for class in 0..net.class_count() {
            let d = decompose(&net, &trace, class, &logits).unwrap();
            worst = worst.max(d.y_nui.abs());
        }
    }
    worst
}

/// `saturated_vs_vanilla` over random networks of every family.
pub fn saturated_sweep(seeds: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for family in SynthFamily::ALL {
        for seed in 0..seeds {
            let net = random_network::<f32>(family, 300 + seed, SynthOptions::default()).unwrap();
            let x = nudged_input(&net, seed, 1e-6);
            worst = worst.max(saturated_vs_vanilla(
                &net,
                &x,
                seed as usize % net.class_count(),
            ));
        }
    }
    worst
}
