use crate::error::Result;
use crate::linearize::{one_hot, reverse_sweep};
use crate::network::{ActivationTrace, Network};
use crate::tensor::{Scalar, Tensor};

/// Logit standing in for a mask of exactly one (sigmoid(40) ≈ 1 − 4e-18).
pub const SATURATED_LOGIT: f64 = 40.0;

/// Logit given to an element whose positive and negative gradients agree
/// in sign at initialization.
pub const INIT_LOGIT: f64 = 2.0;

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Unconstrained mask parameters, one tensor per ReLU site. The masks used
/// in the positive pass are `sigmoid(logit)`; the negative pass uses
/// `1 − sigmoid(logit)`, evaluated as `sigmoid(−logit)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLogits<T: Scalar = f32> {
    pub sites: Vec<Tensor<T>>,
}

impl<T: Scalar> MaskLogits<T> {
    pub fn constant<U: Scalar>(net: &Network<U>, v: T) -> Self {
        Self {
            sites: net
                .site_shapes()
                .iter()
                .map(|s| Tensor::full(s, v))
                .collect(),
        }
    }

    /// Every mask saturated at one: the positive pass reproduces the plain
    /// gradient and the negative pass vanishes.
    pub fn saturated<U: Scalar>(net: &Network<U>) -> Self {
        Self::constant(net, T::of(SATURATED_LOGIT))
    }

    pub fn positive_masks(&self) -> Vec<Tensor<T>> {
        self.sites.iter().map(|t| t.map(sigmoid)).collect()
    }

    pub fn negative_masks(&self) -> Vec<Tensor<T>> {
        self.sites.iter().map(|t| t.map(|v| sigmoid(-v))).collect()
    }

    pub fn len(&self) -> usize {
        self.sites.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Initial logit of one element from the gradients arriving at it in the
/// positive and negative passes.
pub fn init_logit<T: Scalar>(grad_pos: T, grad_neg: T) -> T {
    let zero = T::zero();
    if grad_pos > zero && grad_neg > zero {
        T::of(INIT_LOGIT)
    } else if grad_pos < zero && grad_neg < zero {
        T::of(-INIT_LOGIT)
    } else {
        zero
    }
}

/// Top-down initialization. Two reverse sweeps run side by side from the
/// target logit; on reaching a site, each element's logit is set from the
/// sign agreement of the two arriving gradients, and the freshly set masks
/// (`σ` for the positive sweep, `1 − σ` for the negative) are applied before
/// the sweeps continue downward. The topmost site therefore sees the plain
/// classifier gradient in both sweeps.
pub fn init_masks<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    target_class: usize,
) -> Result<MaskLogits<T>> {
    net.select_target(target_class)?;
    let seed = one_hot::<T>(net.class_count(), target_class);
    let mut logits = MaskLogits::constant(net, T::zero());
    let mut gate = |site: usize, heaviside: &Tensor<T>, lanes: &mut [Tensor<T>]| -> Result<()> {
        let (pos, neg) = lanes.split_at_mut(1);
        let (pos, neg) = (&mut pos[0], &mut neg[0]);
        let site_logits = logits.sites[site].data_mut();
        for (i, l) in site_logits.iter_mut().enumerate() {
            *l = init_logit(pos.data()[i], neg.data()[i]);
            let s = sigmoid(*l);
            let h = heaviside.data()[i];
            pos.data_mut()[i] *= h * s;
            neg.data_mut()[i] *= h * (T::one() - s);
        }
        Ok(())
    };
    reverse_sweep(net, trace, vec![seed.clone(), seed], &mut gate)?;
    Ok(logits)
}
