//! Disentangled masked backpropagation.
//!
//! For mask logits `θ` with `σ = sigmoid(θ)`, the positive term `y⁺` is the
//! target logit of the recorded linear region with every ReLU site scaled
//! by `σ`, and `y⁻` the same with `1 − σ`. Both are evaluated as
//! `∇ₓ·x + Σ ∇_b·b` from one two-lane masked reverse sweep. The nuisance
//! term is the residual `y~ = y − y⁺ − y⁻`. Logits are fitted with RMSProp
//! on `y⁻ − y⁺ + |y~|`.
//!
//! Each term is multilinear in the per-site masks, so the derivative with
//! respect to one mask element is the gradient arriving at that element in
//! the masked reverse sweep times the pre-activation reaching it in the
//! masked forward replay (times the Heaviside bit).

mod masks;
mod rmsprop;

use std::io::Write;

pub use masks::{init_logit, init_masks, sigmoid, MaskLogits, INIT_LOGIT, SATURATED_LOGIT};
pub use rmsprop::{rmsprop_step, RmsPropParams, RmsPropState};

use crate::error::{Error, Result};
use crate::imaging::{AttributionMap, MapMeta};
use crate::linearize::{
    masked_forward, one_hot, reconstruct_output, reverse_sweep, BackwardResult,
};
use crate::network::{ActivationTrace, Network};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmbpConfig {
    pub iterations: usize,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    /// Emit a `log::debug!` line every 20 iterations.
    pub log_progress: bool,
}

impl Default for DmbpConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            lr: 0.01,
            decay: 0.99,
            eps: 1e-8,
            log_progress: false,
        }
    }
}

impl DmbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::arg("iterations must be at least 1"));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::arg("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::arg("rmsprop decay must lie in [0, 1)"));
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return Err(Error::arg("rmsprop epsilon must be non-negative"));
        }
        Ok(())
    }

    fn rmsprop(&self) -> RmsPropParams {
        RmsPropParams {
            lr: self.lr,
            decay: self.decay,
            eps: self.eps,
        }
    }
}

/// `logit = y_pos + y_neg + y_nui`, with `y_nui` the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedOutput<T: Scalar = f32> {
    pub logit: T,
    pub y_pos: T,
    pub y_neg: T,
    pub y_nui: T,
    pub pos: BackwardResult<T>,
    pub neg: BackwardResult<T>,
}

impl<T: Scalar> DecomposedOutput<T> {
    pub fn loss(&self) -> T {
        dmbp_loss(self)
    }
}

/// `y⁻ − y⁺ + |y~|`.
pub fn dmbp_loss<T: Scalar>(d: &DecomposedOutput<T>) -> T {
    d.y_neg - d.y_pos + d.y_nui.abs()
}

fn check_logits<T: Scalar>(net: &Network<T>, logits: &MaskLogits<T>) -> Result<()> {
    if logits.sites.len() != net.site_count() {
        return Err(Error::arg(format!(
            "{} mask tensors for {} ReLU sites",
            logits.sites.len(),
            net.site_count()
        )));
    }
    for (i, (l, s)) in logits.sites.iter().zip(net.site_shapes()).enumerate() {
        if l.shape() != s.as_slice() {
            return Err(Error::arg(format!(
                "mask logits for site {i} have shape {:?}, site is {s:?}",
                l.shape()
            )));
        }
        l.check_finite("mask logits")?;
    }
    Ok(())
}

/// Two-lane masked sweep; optionally records the gradient arriving at each
/// site output, per lane.
fn masked_pair<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    target_class: usize,
    pos_masks: &[Tensor<T>],
    neg_masks: &[Tensor<T>],
    arriving: Option<&mut Vec<[Tensor<T>; 2]>>,
) -> Result<(BackwardResult<T>, BackwardResult<T>)> {
    let seed = one_hot::<T>(net.class_count(), target_class);
    let mut record = arriving;
    if let Some(r) = record.as_deref_mut() {
        r.clear();
        r.resize(net.site_count(), [Tensor::zeros(&[1]), Tensor::zeros(&[1])]);
    }
    let mut gate = |site: usize, heaviside: &Tensor<T>, lanes: &mut [Tensor<T>]| -> Result<()> {
        if let Some(r) = record.as_deref_mut() {
            r[site] = [lanes[0].clone(), lanes[1].clone()];
        }
        lanes[0].mul_assign(heaviside)?;
        lanes[0].mul_assign(&pos_masks[site])?;
        lanes[1].mul_assign(heaviside)?;
        lanes[1].mul_assign(&neg_masks[site])?;
        Ok(())
    };
    let mut out = reverse_sweep(net, trace, vec![seed.clone(), seed], &mut gate)?;
    let neg = out.pop().expect("two lanes");
    let pos = out.pop().expect("two lanes");
    Ok((pos, neg))
}

/// Splits the target logit into positive, negative and nuisance terms for
/// the given mask logits. Hidden-layer bias terms enter both masked passes;
/// the classifier bias of the target class is credited to the positive term
/// only, so all-ones masks give `y_pos = logit` and `y_neg = y_nui = 0`.
pub fn decompose<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    target_class: usize,
    logits: &MaskLogits<T>,
) -> Result<DecomposedOutput<T>> {
    net.select_target(target_class)?;
    check_logits(net, logits)?;
    let (pos_masks, neg_masks) = (logits.positive_masks(), logits.negative_masks());
    let (pos, neg) = masked_pair(net, trace, target_class, &pos_masks, &neg_masks, None)?;
    assemble(net, trace, target_class, pos, neg)
}

fn assemble<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    target_class: usize,
    pos: BackwardResult<T>,
    neg: BackwardResult<T>,
) -> Result<DecomposedOutput<T>> {
    let biases = net.biases();
    // No mask reaches the classifier bias, so it is counted once.
    let bc = net
        .classifier()
        .1
        .map_or(T::zero(), |b| b.data()[target_class]);
    let y_pos = reconstruct_output(&trace.input, &biases, &pos)?;
    let y_neg = reconstruct_output(&trace.input, &biases, &neg)? - bc;
    let logit = trace.logit(target_class);
    Ok(DecomposedOutput {
        logit,
        y_pos,
        y_neg,
        y_nui: logit - y_pos - y_neg,
        pos,
        neg,
    })
}

/// Decomposition together with the exact gradient of the loss with respect
/// to every mask logit.
pub fn decompose_with_gradient<T: Scalar>(
    net: &Network<T>,
    trace: &ActivationTrace<T>,
    target_class: usize,
    logits: &MaskLogits<T>,
) -> Result<(DecomposedOutput<T>, Vec<Tensor<T>>)> {
    net.select_target(target_class)?;
    check_logits(net, logits)?;
    let (pos_masks, neg_masks) = (logits.positive_masks(), logits.negative_masks());
    let mut arriving = Vec::new();
    let (pos, neg) = masked_pair(
        net,
        trace,
        target_class,
        &pos_masks,
        &neg_masks,
        Some(&mut arriving),
    )?;
    let (_, pre_pos) = masked_forward(net, trace, Some(&pos_masks))?;
    let (_, pre_neg) = masked_forward(net, trace, Some(&neg_masks))?;
    let d = assemble(net, trace, target_class, pos, neg)?;

    // dL/dσ = (1 − s)·dy⁻/dσ − (1 + s)·dy⁺/dσ with s = sign(y~), sign(0) = 0.
    let s = if d.y_nui > T::zero() {
        T::one()
    } else if d.y_nui < T::zero() {
        -T::one()
    } else {
        T::zero()
    };
    let (wp, wn) = (T::one() + s, T::one() - s);
    let grads = (0..net.site_count())
        .map(|site| {
            let h = trace.relu_masks[site].data();
            let [gp, gn] = &arriving[site];
            let sig = pos_masks[site].data();
            let data = (0..h.len())
                .map(|i| {
                    if h[i] == T::zero() {
                        return T::zero();
                    }
                    let dpos = gp.data()[i] * pre_pos[site].data()[i];
                    // y⁻ depends on 1 − σ, hence the sign flip.
                    let dneg = -gn.data()[i] * pre_neg[site].data()[i];
                    let dsigma = wn * dneg - wp * dpos;
                    dsigma * sig[i] * (T::one() - sig[i])
                })
                .collect();
            Tensor::from_parts(net.site_shapes()[site].clone(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((d, grads))
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub y_pos: f64,
    pub y_neg: f64,
    pub y_nui: f64,
    pub loss: f64,
}

/// Result of fitting the masks for one (input, target) pair.
#[derive(Debug, Clone)]
pub struct DmbpOutcome<T: Scalar = f32> {
    pub logits: MaskLogits<T>,
    /// Decomposition under the final logits.
    pub decomposition: DecomposedOutput<T>,
    /// Loss at the start of every iteration, before its update.
    pub loss_trace: Vec<LossRecord>,
    pub trace: ActivationTrace<T>,
}

impl<T: Scalar> DmbpOutcome<T> {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.decomposition.loss().as_f64()
    }
}

/// Fits mask logits: one forward pass, top-down initialization, then
/// `cfg.iterations` RMSProp steps on the loss.
pub fn optimize<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target_class: usize,
    cfg: &DmbpConfig,
) -> Result<DmbpOutcome<T>> {
    cfg.validate()?;
    net.select_target(target_class)?;
    let trace = net.forward(x)?;
    let mut logits = init_masks(net, &trace, target_class)?;
    let mut state = RmsPropState::new(&logits.sites);
    let mut loss_trace = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let (d, grads) = decompose_with_gradient(net, &trace, target_class, &logits)?;
        let loss = d.loss();
        if !loss.is_finite() || grads.iter().any(|g| g.check_finite("").is_err()) {
            return Err(Error::Numeric(format!(
                "non-finite loss at iteration {iteration}"
            )));
        }
        debug_assert_partition(&d);
        loss_trace.push(LossRecord {
            iteration,
            y_pos: d.y_pos.as_f64(),
            y_neg: d.y_neg.as_f64(),
            y_nui: d.y_nui.as_f64(),
            loss: loss.as_f64(),
        });
        if cfg.log_progress && iteration % 20 == 0 {
            log::debug!(
                "dmbp iteration {iteration}: loss {loss} (y+ {}, y- {}, y~ {})",
                d.y_pos,
                d.y_neg,
                d.y_nui
            );
        }
        rmsprop_step(&mut logits.sites, &grads, &mut state, cfg.rmsprop())?;
    }
    let decomposition = decompose(net, &trace, target_class, &logits)?;
    if !decomposition.loss().is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss at iteration {}",
            cfg.iterations
        )));
    }
    Ok(DmbpOutcome {
        logits,
        decomposition,
        loss_trace,
        trace,
    })
}

fn debug_assert_partition<T: Scalar>(d: &DecomposedOutput<T>) {
    let scale = d
        .logit
        .abs()
        .max(d.y_pos.abs())
        .max(d.y_neg.abs())
        .max(T::one());
    debug_assert!(
        (d.y_pos + d.y_neg + d.y_nui - d.logit).abs() <= T::of(8.0) * T::epsilon() * scale,
        "decomposition does not partition the logit"
    );
}

/// Positive and negative contributions, `∇⁺ₓ ⊙ x` and `∇⁻ₓ ⊙ x`, before
/// the channel reduction.
pub fn signed_contributions<T: Scalar>(
    x: &Tensor<T>,
    d: &DecomposedOutput<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((d.pos.input_grad.mul(x)?, d.neg.input_grad.mul(x)?))
}

/// `(∇⁺ₓ + ∇⁻ₓ) ⊙ x`, reduced over channels.
pub fn attribution_map<T: Scalar>(
    x: &Tensor<T>,
    d: &DecomposedOutput<T>,
    meta: MapMeta,
) -> Result<AttributionMap> {
    let (p, n) = signed_contributions(x, d)?;
    AttributionMap::from_contributions(&p.add(&n)?, meta)
}

/// Fits masks and returns the attribution map for `target_class`.
pub fn dmbp_attribution<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    target_class: usize,
    cfg: &DmbpConfig,
) -> Result<(AttributionMap, DmbpOutcome<T>)> {
    let outcome = optimize(net, x, target_class, cfg)?;
    let map = attribution_map(
        x,
        &outcome.decomposition,
        MapMeta {
            target: target_class,
            method: "dmbp".into(),
            model_id: net.model_id().to_string(),
        },
    )?;
    Ok((map, outcome))
}

/// `iteration,y_pos,y_neg,y_nui,loss` rows.
pub fn write_loss_trace_csv(records: &[LossRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "iteration,y_pos,y_neg,y_nui,loss")?;
    for r in records {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.iteration, r.y_pos, r.y_neg, r.y_nui, r.loss
        )?;
    }
    Ok(())
}
