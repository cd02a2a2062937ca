//! Dynamic parameter selection over the stochastic update.
//!
//! Stage I behaves like Mixout — a fresh Bernoulli(1-p) mask per step, mixed
//! against the pretrained weights — while accumulating, for the entries that
//! were actually updated, a gradient statistic and an update count. The first
//! step of Stage II ranks entries by the frequency-penalized per-update
//! average, snapshots the current weights as the stage anchor, clears both
//! accumulators, and for the rest of the cycle mixes against that snapshot
//! with the fixed stage mask; only selected entries receive updates.

use crate::error::{Error, Result};
use crate::net::{Dataset, MlpModel};
use crate::strategy::accum::{FreqAccumulator, GradAccumulator, TensorMap};
use crate::strategy::mask::ranked_mask_mix_with_boundary;
use crate::strategy::mixout::{restore_and_unmix_grads, swap_in_mixed_weights, Anchor};
use crate::strategy::schedule::{Stage, StageSchedule};
use crate::strategy::{
    MaskSet, StageOneAccumulation, StepMeta, StrategyKind, StrategyStateDump, UpdateStrategy,
};
use crate::tensor::{Matrix, Rng};

#[derive(Debug)]
pub struct DpsMix {
    p: f64,
    penalty_boundary: usize,
    accumulation: StageOneAccumulation,
    schedule: StageSchedule,
    gam: Option<GradAccumulator>,
    fam: Option<FreqAccumulator>,
    mask: Option<MaskSet>,
    stage2_anchor: Option<TensorMap>,
    stage: Stage,
    step_mask: Option<MaskSet>,
    saved: Vec<(String, Matrix)>,
}

impl DpsMix {
    pub fn new(
        p: f64,
        ur: f64,
        total_steps: usize,
        penalty_boundary: usize,
        accumulation: StageOneAccumulation,
    ) -> Result<Self> {
        Ok(DpsMix {
            p,
            penalty_boundary,
            accumulation,
            schedule: StageSchedule::new(total_steps, ur)?,
            gam: None,
            fam: None,
            mask: None,
            stage2_anchor: None,
            stage: Stage::I,
            step_mask: None,
            saved: Vec::new(),
        })
    }

    pub fn schedule(&self) -> &StageSchedule {
        &self.schedule
    }
}

impl UpdateStrategy for DpsMix {
    fn kind(&self) -> StrategyKind {
        StrategyKind::DpsMix
    }

    fn expected_total_steps(&self) -> Option<usize> {
        Some(self.schedule.total_steps())
    }

    fn prepare(&mut self, model: &mut MlpModel, _data: &Dataset, _batch_size: usize) -> Result<()> {
        self.gam = Some(GradAccumulator::zeros_like(model));
        self.fam = Some(FreqAccumulator::zeros_like(model));
        Ok(())
    }

    fn begin_step(&mut self, _t: usize, model: &mut MlpModel, rng: &mut Rng) -> Result<StepMeta> {
        let events = self.schedule.advance()?;
        self.stage = events.stage;
        if events.entered_cycle.is_some() {
            self.gam.as_mut().expect("prepare ran").reset();
            self.fam.as_mut().expect("prepare ran").reset();
            self.mask = None;
            self.stage2_anchor = None;
        }
        if events.refresh_mask {
            let gam = self.gam.as_ref().expect("prepare ran");
            let fam = self.fam.as_ref().expect("prepare ran");
            self.mask = Some(ranked_mask_mix_with_boundary(
                gam,
                fam,
                self.schedule.steps_per_stage(),
                self.p,
                self.penalty_boundary,
            )?);
            self.stage2_anchor = Some(TensorMap::snapshot_maskable(model));
            self.gam.as_mut().expect("prepare ran").reset();
            self.fam.as_mut().expect("prepare ran").reset();
        }
        match events.stage {
            Stage::I => {
                let mask = MaskSet::bernoulli(model, 1.0 - self.p, rng)?;
                self.saved = swap_in_mixed_weights(model, &mask, Anchor::Pretrained, self.p)?;
                self.step_mask = Some(mask);
            }
            Stage::II => {
                let mask = self
                    .mask
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("stage II without a ranked mask".into()))?;
                let anchor = self
                    .stage2_anchor
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("stage II without an anchor".into()))?;
                self.saved = swap_in_mixed_weights(model, &mask, Anchor::Map(anchor), self.p)?;
                self.step_mask = Some(mask);
            }
        }
        Ok(StepMeta {
            stage: Some(events.stage),
            mask_refreshed: events.refresh_mask,
        })
    }

    fn after_backward(&mut self, _t: usize, model: &mut MlpModel) -> Result<()> {
        let mask = self
            .step_mask
            .take()
            .ok_or_else(|| Error::InvalidArgument("after_backward before begin_step".into()))?;
        restore_and_unmix_grads(model, std::mem::take(&mut self.saved), &mask, self.p)?;

        if self.stage == Stage::I {
            let gam = self.gam.as_mut().expect("prepare ran");
            let fam = self.fam.as_mut().expect("prepare ran");
            let grads: Vec<(String, _)> = model
                .maskable_params()
                .map(|t| (t.name().to_string(), t.grad().clone()))
                .collect();
            for (name, grad) in grads {
                let m = mask
                    .get(&name)
                    .ok_or_else(|| Error::InvalidArgument(format!("mask missing tensor {name}")))?;
                match self.accumulation {
                    StageOneAccumulation::SquaredGrad => gam.add_squared(&name, &grad, Some(m))?,
                    StageOneAccumulation::RawGrad => gam.add_raw(&name, &grad, Some(m))?,
                }
                fam.add_mask(&name, m)?;
            }
        } else {
            self.step_mask = Some(mask); // keep the stage mask visible to the gate
        }
        Ok(())
    }

    fn update_gate(&self) -> Option<&MaskSet> {
        match self.stage {
            Stage::I => None,
            Stage::II => self.mask.as_ref(),
        }
    }

    fn dump_state(&self) -> StrategyStateDump {
        StrategyStateDump {
            current_mask: self.mask.clone(),
            gam: self.gam.as_ref().map(|g| g.0.clone()),
            fam: self.fam.as_ref().map(|f| f.0.clone()),
            stage2_anchor: self.stage2_anchor.clone(),
        }
    }
}
