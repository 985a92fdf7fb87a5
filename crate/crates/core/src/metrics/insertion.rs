use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{blur_baseline, MetricConfig};
use crate::error::{Error, Result};
use crate::imaging::{normalize, AttributionMap};
use crate::network::Network;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct InsertionCurve {
    /// `k/steps` for `k = 0..=steps`.
    pub fractions: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub auc: f64,
}

pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Vec<f64> {
    let m = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let e: Vec<f64> = logits
        .data()
        .iter()
        .map(|v| (v.as_f64() - m).exp())
        .collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

pub fn trapezoid_auc(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Pixel indices by decreasing attribution. Equal values keep the order of
/// a ChaCha shuffle seeded with `seed`.
pub fn descending_order(map: &AttributionMap, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..map.values.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.sort_by(|&a, &b| map.values[b].total_cmp(&map.values[a]));
    idx
}

/// The exact reverse of [`descending_order`].
pub fn ascending_order(map: &AttributionMap, seed: u64) -> Vec<usize> {
    let mut idx = descending_order(map, seed);
    idx.reverse();
    idx
}

/// Inserts pixels of `image` onto `baseline` in `order`; after step `k`
/// the first `⌊k·P/steps⌋` pixels (every channel) are in place. Each
/// composite is normalized with the network's preprocessing and scored as
/// the mean softmax probability of `labels`.
pub fn insertion_curve<T: Scalar>(
    net: &Network<T>,
    image: &Tensor<T>,
    baseline: &Tensor<T>,
    order: &[usize],
    labels: &[usize],
    steps: usize,
) -> Result<InsertionCurve> {
    let [c, h, w] = *image.shape() else {
        return Err(Error::arg(format!(
            "insertion needs a C×H×W image, got {:?}",
            image.shape()
        )));
    };
    image.expect_same_shape(baseline)?;
    let plane = h * w;
    if order.len() != plane {
        return Err(Error::arg(format!(
            "order has {} entries for {plane} pixels",
            order.len()
        )));
    }
    if steps == 0 || labels.is_empty() {
        return Err(Error::arg(
            "insertion needs at least one step and one label",
        ));
    }
    for &l in labels {
        net.select_target(l)?;
    }
    let score = |composite: &Tensor<T>| -> Result<f64> {
        let x = normalize(composite, net.preprocess())?;
        let p = softmax(&net.logits(&x)?);
        Ok(labels.iter().map(|&l| p[l]).sum::<f64>() / labels.len() as f64)
    };
    let mut composite = baseline.clone();
    let mut fractions = Vec::with_capacity(steps + 1);
    let mut probabilities = Vec::with_capacity(steps + 1);
    let mut inserted = 0;
    for k in 0..=steps {
        let count = k * plane / steps;
        for &p in &order[inserted..count] {
            for ch in 0..c {
                composite.data_mut()[ch * plane + p] = image.data()[ch * plane + p];
            }
        }
        inserted = count;
        fractions.push(k as f64 / steps as f64);
        probabilities.push(score(&composite)?);
    }
    let auc = trapezoid_auc(&fractions, &probabilities);
    Ok(InsertionCurve {
        fractions,
        probabilities,
        auc,
    })
}

fn check_map<T: Scalar>(image: &Tensor<T>, map: &AttributionMap) -> Result<()> {
    match *image.shape() {
        [_, h, w] if (h, w) == (map.height, map.width) => Ok(()),
        ref s => Err(Error::arg(format!(
            "map is {}×{} but the image has shape {s:?}",
            map.height, map.width
        ))),
    }
}

/// Insertion Metric: restores pixels of `image` (raw `[0, 1]` values at the
/// network resolution) onto its blurred copy by decreasing attribution and
/// tracks the target probability.
pub fn insertion_metric<T: Scalar>(
    net: &Network<T>,
    image: &Tensor<T>,
    map: &AttributionMap,
    target: usize,
    cfg: &MetricConfig,
) -> Result<InsertionCurve> {
    cfg.validate()?;
    check_map(image, map)?;
    net.select_target(target)?;
    let baseline = blur_baseline(image, cfg)?;
    insertion_curve(
        net,
        image,
        &baseline,
        &descending_order(map, cfg.seed),
        &[target],
        cfg.steps,
    )
}

/// Complementary Insertion Metric: pixels go in by increasing attribution
/// and the score is the mean probability of `other_labels`.
pub fn complementary_insertion_metric<T: Scalar>(
    net: &Network<T>,
    image: &Tensor<T>,
    map: &AttributionMap,
    target: usize,
    other_labels: &[usize],
    cfg: &MetricConfig,
) -> Result<InsertionCurve> {
    cfg.validate()?;
    check_map(image, map)?;
    net.select_target(target)?;
    if other_labels.is_empty() {
        return Err(Error::arg(
            "complementary insertion needs at least one other label",
        ));
    }
    if other_labels.contains(&target) {
        return Err(Error::arg("other labels must exclude the target"));
    }
    let baseline = blur_baseline(image, cfg)?;
    insertion_curve(
        net,
        image,
        &baseline,
        &ascending_order(map, cfg.seed),
        other_labels,
        cfg.steps,
    )
}
