//! Stochastic weight replacement against the pretrained anchor.
//!
//! Each step draws a fresh Bernoulli(1-p) mask over the maskable tensors,
//! evaluates the loss at the mixed-rescaled weights, and pulls the gradient
//! back through the mixing: kept entries scale by 1/(1-p), dropped entries
//! get zero gradient. The update itself is applied to all entries.

use crate::error::{Error, Result};
use crate::net::MlpModel;
use crate::strategy::mask::{mixed_grad_to_param, mixed_weights};
use crate::strategy::{MaskSet, StepMeta, StrategyKind, StrategyStateDump, UpdateStrategy};
use crate::tensor::{Matrix, Rng};

#[derive(Debug)]
pub struct Mixout {
    p: f64,
    step_mask: Option<MaskSet>,
    saved: Vec<(String, Matrix)>,
}

impl Mixout {
    pub fn new(p: f64) -> Self {
        Mixout {
            p,
            step_mask: None,
            saved: Vec::new(),
        }
    }
}

/// Swap mixed weights into the maskable tensors of `model`, anchored either
/// at the pretrained snapshot or at an explicit per-tensor anchor map.
/// Returns the displaced original values so the caller can restore them.
pub(crate) fn swap_in_mixed_weights(
    model: &mut MlpModel,
    mask: &MaskSet,
    anchor: Anchor<'_>,
    p: f64,
) -> Result<Vec<(String, Matrix)>> {
    let names: Vec<String> = model
        .maskable_params()
        .map(|t| t.name().to_string())
        .collect();
    let mut saved = Vec::with_capacity(names.len());
    for name in names {
        let tensor = model.param(&name).expect("maskable tensor exists");
        let mask_m = mask
            .get(&name)
            .ok_or_else(|| Error::InvalidArgument(format!("mask missing tensor {name}")))?;
        let anchor_m = match anchor {
            Anchor::Pretrained => tensor.pretrained().clone(),
            Anchor::Map(map) => map
                .get(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("anchor missing tensor {name}")))?
                .clone(),
        };
        let mixed = mixed_weights(tensor.value(), &anchor_m, mask_m, p)?;
        let tensor = model.param_mut(&name).expect("maskable tensor exists");
        let original = std::mem::replace(tensor.value_mut(), mixed);
        saved.push((name, original));
    }
    Ok(saved)
}

pub(crate) enum Anchor<'a> {
    Pretrained,
    Map(&'a crate::strategy::TensorMap),
}

/// Restore saved weights and rescale the gradients that were computed at the
/// mixed weights.
pub(crate) fn restore_and_unmix_grads(
    model: &mut MlpModel,
    saved: Vec<(String, Matrix)>,
    mask: &MaskSet,
    p: f64,
) -> Result<()> {
    for (name, original) in saved {
        let mask_m = mask
            .get(&name)
            .ok_or_else(|| Error::InvalidArgument(format!("mask missing tensor {name}")))?
            .clone();
        let tensor = model.param_mut(&name).expect("maskable tensor exists");
        *tensor.value_mut() = original;
        let grad = mixed_grad_to_param(tensor.grad(), &mask_m, p)?;
        tensor.set_grad(grad)?;
    }
    Ok(())
}

impl UpdateStrategy for Mixout {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Mixout
    }

    fn begin_step(&mut self, _t: usize, model: &mut MlpModel, rng: &mut Rng) -> Result<StepMeta> {
        let mask = MaskSet::bernoulli(model, 1.0 - self.p, rng)?;
        self.saved = swap_in_mixed_weights(model, &mask, Anchor::Pretrained, self.p)?;
        self.step_mask = Some(mask);
        Ok(StepMeta::default())
    }

    fn after_backward(&mut self, _t: usize, model: &mut MlpModel) -> Result<()> {
        let mask = self
            .step_mask
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("after_backward before begin_step".into()))?;
        restore_and_unmix_grads(model, std::mem::take(&mut self.saved), mask, self.p)
    }

    fn update_gate(&self) -> Option<&MaskSet> {
        None
    }

    fn dump_state(&self) -> StrategyStateDump {
        StrategyStateDump {
            current_mask: self.step_mask.clone(),
            ..StrategyStateDump::default()
        }
    }
}
