//! Fixed task-driven subnetwork: importance is measured once, at the
//! pretrained weights, from squared gradients over the whole training set;
//! the resulting mask never changes during the run. Entries outside the
//! subnetwork are never touched by the optimizer, so they stay bit-identical
//! to the pretrained snapshot.

use crate::error::{Error, Result};
use crate::net::{loss_and_grads, Batch, Dataset, MlpModel};
use crate::strategy::accum::GradAccumulator;
use crate::strategy::mask::ranked_mask_dense;
use crate::strategy::{MaskProvenance, MaskSet, StepMeta, StrategyKind, StrategyStateDump, UpdateStrategy};
use crate::tensor::Rng;

/// Squared-gradient pre-pass over `batches` at the model's current weights
/// (no parameter updates), followed by a global importance ranking.
/// The returned mask is tagged fixed and is never recomputed.
pub fn childtuning_prepass(model: &mut MlpModel, batches: &[Batch], p: f64) -> Result<MaskSet> {
    if batches.is_empty() {
        return Err(Error::InvalidArgument("empty training set for pre-pass".into()));
    }
    let mut gam = GradAccumulator::zeros_like(model);
    for batch in batches {
        loss_and_grads(model, batch)?;
        let grads: Vec<(String, _)> = model
            .maskable_params()
            .map(|t| (t.name().to_string(), t.grad().clone()))
            .collect();
        for (name, grad) in grads {
            gam.add_squared(&name, &grad, None)?;
        }
    }
    model.zero_grads();
    Ok(ranked_mask_dense(&gam, p)?.with_provenance(MaskProvenance::Fixed))
}

#[derive(Debug)]
pub struct ChildTuningD {
    p: f64,
    mask: Option<MaskSet>,
}

impl ChildTuningD {
    pub fn new(p: f64) -> Self {
        ChildTuningD { p, mask: None }
    }

    pub fn fixed_mask(&self) -> Option<&MaskSet> {
        self.mask.as_ref()
    }
}

impl UpdateStrategy for ChildTuningD {
    fn kind(&self) -> StrategyKind {
        StrategyKind::ChildTuningD
    }

    fn prepare(&mut self, model: &mut MlpModel, data: &Dataset, batch_size: usize) -> Result<()> {
        let batches = data.sequential_batches(batch_size)?;
        self.mask = Some(childtuning_prepass(model, &batches, self.p)?);
        Ok(())
    }

    fn begin_step(&mut self, _t: usize, _model: &mut MlpModel, _rng: &mut Rng) -> Result<StepMeta> {
        if self.mask.is_none() {
            return Err(Error::InvalidArgument("child tuning used without pre-pass".into()));
        }
        Ok(StepMeta::default())
    }

    fn after_backward(&mut self, _t: usize, _model: &mut MlpModel) -> Result<()> {
        Ok(())
    }

    fn update_gate(&self) -> Option<&MaskSet> {
        self.mask.as_ref()
    }

    fn dump_state(&self) -> StrategyStateDump {
        StrategyStateDump {
            current_mask: self.mask.clone(),
            ..StrategyStateDump::default()
        }
    }
}
