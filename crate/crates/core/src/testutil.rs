use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Scalar, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor<T: Scalar>(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(r.random_range(-1.0..1.0)))
}

/// Central differences of a scalar function against an analytic gradient,
/// step 1e-5, error relative to `max(1, |fd|)`.
pub fn assert_fd_close(
    x: &Tensor<f64>,
    f: impl Fn(&Tensor<f64>) -> f64,
    analytic: &Tensor<f64>,
    rel: f64,
) {
    assert_eq!(x.shape(), analytic.shape());
    let h = 1e-5;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        let a = analytic.data()[i];
        assert!(
            (fd - a).abs() <= rel * fd.abs().max(1.0),
            "element {i}: finite difference {fd} vs analytic {a}"
        );
    }
}
