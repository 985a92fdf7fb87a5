use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::method::{attribute, Method, MethodConfig};
use crate::network::Network;
use crate::tensor::{Scalar, Tensor};

/// 1-based ranks, ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman rank correlation (Pearson correlation of average ranks). A
/// constant input has no ranking and yields 0.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::arg(
            "spearman needs two non-empty sequences of equal length",
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

fn population_std<T: Scalar>(t: &Tensor<T>) -> f64 {
    let n = t.len() as f64;
    let mean = t.data().iter().map(|v| v.as_f64()).sum::<f64>() / n;
    (t.data()
        .iter()
        .map(|v| (v.as_f64() - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Copy of `net` whose classifier weights are redrawn from
/// `N(0, std of the original weights)` and whose bias, if any, from
/// `N(0, std of the original bias)`.
pub fn reinitialized_classifier<T: Scalar>(net: &Network<T>, seed: u64) -> Result<Network<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut redraw = |t: &Tensor<T>| -> Result<Tensor<T>> {
        let d = Normal::new(0.0, population_std(t)).map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(Tensor::from_fn(t.shape(), |_| T::of(d.sample(&mut rng))))
    };
    let (w, b) = net.classifier();
    let w = redraw(w)?;
    let b = b.map(&mut redraw).transpose()?;
    net.with_classifier(w, b)
}

/// Spearman correlation between the per-pixel maps of `method` before and
/// after reinitializing the classifier.
pub fn reinit_sanity_check<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target: usize,
    method: Method,
    cfg: &MethodConfig,
    seed: u64,
) -> Result<f64> {
    let before = attribute(net, x, target, method, cfg)?;
    let after = attribute(
        &reinitialized_classifier(net, seed)?,
        x,
        target,
        method,
        cfg,
    )?;
    let f = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    spearman(&f(&before.values), &f(&after.values))
}
