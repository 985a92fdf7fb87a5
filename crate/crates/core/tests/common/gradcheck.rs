use dmbp::dmbp::{decompose, decompose_with_gradient, MaskLogits};
use dmbp::linearize::masked_backward;
use dmbp::network::{Network, WeightFile};
use dmbp::ops::{self, ConvGeometry};
use dmbp::synth::{random_model, SynthFamily, SynthOptions};
use dmbp::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{as_f64, bias_owners, nudged_input, rel_inf, same_region};

/// Central difference of `f` along every coordinate of `x`.
pub fn central_difference(
    x: &Tensor<f64>,
    h: f64,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.dot(b).unwrap()
}

#[derive(Debug, Default)]
pub struct KernelReport {
    pub checks: usize,
    pub worst: f64,
    pub worst_kernel: &'static str,
}

impl KernelReport {
    fn record(&mut self, kernel: &'static str, analytic: &Tensor<f64>, numeric: &[f64]) {
        let e = rel_inf(&as_f64(analytic), numeric);
        self.checks += 1;
        if e >= self.worst {
            self.worst = e;
            self.worst_kernel = kernel;
        }
    }
}

/// Each backward kernel against the central difference of `r · forward(x)`
/// for a random cotangent `r`.
pub fn kernel_suite() -> KernelReport {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut rep = KernelReport::default();
    let h = 1e-5;

    for (inf, outf) in [(1, 1), (5, 3), (7, 9)] {
        let w = rand_tensor(&mut rng, &[outf, inf]);
        let b = rand_tensor(&mut rng, &[outf]);
        let x = rand_tensor(&mut rng, &[inf]);
        let r = rand_tensor(&mut rng, &[outf]);
        let g = ops::dense_backward(&r, &w, x.shape()).unwrap();
        let fd = central_difference(&x, h, |x| {
            dot(&r, &ops::dense_forward(x, &w, Some(&b)).unwrap())
        });
        rep.record("dense", &g, &fd);
    }

    let geometries = [
        (3, 5, 6, [3, 3], (1, 1), (1, 1)),
        (2, 3, 7, [3, 3], (2, 2), (1, 1)),
        (1, 2, 5, [1, 1], (1, 1), (0, 0)),
        (2, 4, 9, [1, 1], (2, 2), (0, 0)),
        (3, 2, 6, [2, 3], (2, 1), (0, 1)),
    ];
    for (cin, cout, side, k, stride, pad) in geometries {
        let geom = ConvGeometry { stride, pad };
        let w = rand_tensor(&mut rng, &[cout, cin, k[0], k[1]]);
        let b = rand_tensor(&mut rng, &[cout]);
        let x = rand_tensor(&mut rng, &[cin, side, side]);
        let y = ops::conv2d_forward(&x, &w, Some(&b), geom).unwrap();
        let r = rand_tensor(&mut rng, y.shape());
        let (gx, gb) = ops::conv2d_backward(&r, &w, x.shape(), geom).unwrap();
        let fd = central_difference(&x, h, |x| {
            dot(&r, &ops::conv2d_forward(x, &w, Some(&b), geom).unwrap())
        });
        rep.record("conv2d input", &gx, &fd);
        let fd = central_difference(&b, h, |b| {
            dot(&r, &ops::conv2d_forward(&x, &w, Some(b), geom).unwrap())
        });
        rep.record("conv2d bias", &gb, &fd);
    }

    for (c, side, k, stride) in [(2, 6, 2, 2), (1, 5, 3, 1), (3, 7, 3, 2)] {
        let x = rand_tensor(&mut rng, &[c, side, side]);
        let (y, arg) = ops::maxpool_forward(&x, k, stride).unwrap();
        let r = rand_tensor(&mut rng, y.shape());
        let g = ops::maxpool_backward(&r, &arg, x.shape()).unwrap();
        let fd = central_difference(&x, 1e-7, |x| {
            dot(&r, &ops::maxpool_forward(x, k, stride).unwrap().0)
        });
        rep.record("maxpool", &g, &fd);

        let y = ops::avgpool_forward(&x, k, stride).unwrap();
        let r = rand_tensor(&mut rng, y.shape());
        let g = ops::avgpool_backward(&r, k, stride, x.shape()).unwrap();
        let fd = central_difference(&x, h, |x| {
            dot(&r, &ops::avgpool_forward(x, k, stride).unwrap())
        });
        rep.record("avgpool", &g, &fd);

        let r = rand_tensor(&mut rng, &[c]);
        let g = ops::global_avgpool_backward(&r, x.shape()).unwrap();
        let fd = central_difference(&x, h, |x| dot(&r, &ops::global_avgpool_forward(x).unwrap()));
        rep.record("global avgpool", &g, &fd);

        let r = rand_tensor(&mut rng, x.shape());
        let (_, mask) = ops::relu_forward(&x);
        let g = r.mul(&mask).unwrap();
        let fd = central_difference(&x, 1e-7, |x| dot(&r, &ops::relu_forward(x).0));
        rep.record("relu", &g, &fd);
    }
    rep
}

#[derive(Debug, Default)]
pub struct NetworkReport {
    pub networks: usize,
    pub worst_input: f64,
    pub worst_bias: f64,
}

/// Whole-network reverse sweeps: input gradients on batchnorm nets and
/// bias gradients on plain nets, each against central differences of the
/// logit. Bias perturbations go through the f32 weight file, so the step
/// is measured after rounding.
pub fn network_suite(seeds: u64) -> NetworkReport {
    let mut rep = NetworkReport::default();
    for family in SynthFamily::ALL {
        for seed in 0..seeds {
            for batchnorm in [true, false] {
                let opts = SynthOptions {
                    batchnorm,
                    ..Default::default()
                };
                let (arch, weights) = random_model(family, 900 + seed, opts);
                let net = Network::<f64>::build(&arch, &weights).unwrap();
                let x = nudged_input(&net, seed, 1e-3);
                let class = seed as usize % net.class_count();
                let trace = net.forward(&x).unwrap();
                let r = masked_backward(&net, &trace, class, None).unwrap();
                rep.networks += 1;

                let h = 1e-6;
                for i in 0..x.len() {
                    for s in [h, -h] {
                        let mut p = x.clone();
                        p.data_mut()[i] += s;
                        assert!(same_region(&net, &x, &p), "step leaves the linear region");
                    }
                }
                let fd = central_difference(&x, h, |p| net.logits(p).unwrap().data()[class]);
                rep.worst_input = rep.worst_input.max(rel_inf(&as_f64(&r.input_grad), &fd));

                if batchnorm {
                    continue;
                }
                let logit_with = |w: &WeightFile| {
                    Network::<f64>::build(&arch, w)
                        .unwrap()
                        .logits(&x)
                        .unwrap()
                        .data()[class]
                };
                for (slot, name) in bias_owners(&net) {
                    let key = format!("{name}.bias");
                    let b = weights.get(&key).unwrap().clone();
                    let fd: Vec<f64> = (0..b.len())
                        .map(|j| {
                            let shifted = |s: f32| {
                                let mut w = weights.clone();
                                let mut t = b.clone();
                                t.data_mut()[j] += s;
                                let v = t.data()[j] as f64;
                                w.insert(key.clone(), t);
                                (logit_with(&w), v)
                            };
                            let ((fp, vp), (fm, vm)) = (shifted(1e-4), shifted(-1e-4));
                            (fp - fm) / (vp - vm)
                        })
                        .collect();
                    rep.worst_bias = rep
                        .worst_bias
                        .max(rel_inf(&as_f64(&r.bias_grads[slot]), &fd));
                }
            }
        }
    }
    rep
}

#[derive(Debug, Default)]
pub struct LossGradientReport {
    pub checked: usize,
    pub worst: f64,
}

/// Gradient of the decomposition loss with respect to every mask logit
/// against central differences, away from the kink of `|y~|`.
pub fn loss_gradient_suite(seeds: u64) -> LossGradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut rep = LossGradientReport::default();
    for family in SynthFamily::ALL {
        for seed in 0..seeds {
            let (arch, weights) = random_model(family, 700 + seed, SynthOptions::default());
            let net = Network::<f64>::build(&arch, &weights).unwrap();
            let x = nudged_input(&net, seed, 1e-6);
            let trace = net.forward(&x).unwrap();
            let target = seed as usize % net.class_count();
            let mut logits = MaskLogits::<f64>::constant(&net, 0.0);
            for t in &mut logits.sites {
                for v in t.data_mut() {
                    *v = rng.random_range(-3.0..3.0);
                }
            }
            let (d, grads) = decompose_with_gradient(&net, &trace, target, &logits).unwrap();
            if d.y_nui.abs() < 1e-4 {
                continue;
            }
            rep.checked += 1;
            let mut analytic = Vec::new();
            let mut numeric = Vec::new();
            for (site, g) in grads.iter().enumerate() {
                numeric.extend(central_difference(&logits.sites[site], 1e-6, |t| {
                    let mut l = logits.clone();
                    l.sites[site] = t.clone();
                    decompose(&net, &trace, target, &l).unwrap().loss()
                }));
                analytic.extend(as_f64(g));
            }
            rep.worst = rep.worst.max(rel_inf(&analytic, &numeric));
        }
    }
    rep
}
