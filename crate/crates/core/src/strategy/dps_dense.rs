//! Dynamic parameter selection over the full-network update.
//!
//! Stage I fine-tunes the whole network while accumulating squared gradients
//! per maskable entry. The first step of Stage II ranks the accumulator,
//! keeps the top (1-p) share as the stage mask, clears the accumulator, and
//! from then until the cycle ends only the selected subnetwork is updated;
//! non-selected entries hold the values they entered the stage with.

use crate::error::Result;
use crate::net::{Dataset, MlpModel};
use crate::strategy::accum::GradAccumulator;
use crate::strategy::mask::ranked_mask_dense;
use crate::strategy::schedule::{Stage, StageSchedule};
use crate::strategy::{MaskSet, StepMeta, StrategyKind, StrategyStateDump, UpdateStrategy};
use crate::tensor::Rng;

#[derive(Debug)]
pub struct DpsDense {
    p: f64,
    schedule: StageSchedule,
    gam: Option<GradAccumulator>,
    mask: Option<MaskSet>,
    stage: Stage,
}

impl DpsDense {
    pub fn new(p: f64, ur: f64, total_steps: usize) -> Result<Self> {
        Ok(DpsDense {
            p,
            schedule: StageSchedule::new(total_steps, ur)?,
            gam: None,
            mask: None,
            stage: Stage::I,
        })
    }

    pub fn schedule(&self) -> &StageSchedule {
        &self.schedule
    }
}

impl UpdateStrategy for DpsDense {
    fn kind(&self) -> StrategyKind {
        StrategyKind::DpsDense
    }

    fn expected_total_steps(&self) -> Option<usize> {
        Some(self.schedule.total_steps())
    }

    fn prepare(&mut self, model: &mut MlpModel, _data: &Dataset, _batch_size: usize) -> Result<()> {
        self.gam = Some(GradAccumulator::zeros_like(model));
        Ok(())
    }

    fn begin_step(&mut self, _t: usize, _model: &mut MlpModel, _rng: &mut Rng) -> Result<StepMeta> {
        let events = self.schedule.advance()?;
        self.stage = events.stage;
        let gam = self.gam.as_mut().expect("prepare ran");
        if events.entered_cycle.is_some() {
            gam.reset();
            self.mask = None;
        }
        if events.refresh_mask {
            // derive first, then clear, then the masked update runs
            self.mask = Some(ranked_mask_dense(gam, self.p)?);
            gam.reset();
        }
        Ok(StepMeta {
            stage: Some(events.stage),
            mask_refreshed: events.refresh_mask,
        })
    }

    fn after_backward(&mut self, _t: usize, model: &mut MlpModel) -> Result<()> {
        if self.stage == Stage::I {
            let gam = self.gam.as_mut().expect("prepare ran");
            let grads: Vec<(String, _)> = model
                .maskable_params()
                .map(|t| (t.name().to_string(), t.grad().clone()))
                .collect();
            for (name, grad) in grads {
                gam.add_squared(&name, &grad, None)?;
            }
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
            ..StrategyStateDump::default()
        }
    }
}
