//! Full-network fine-tuning: every parameter takes the plain optimizer step.

use crate::error::Result;
use crate::net::MlpModel;
use crate::strategy::{MaskSet, StepMeta, StrategyKind, UpdateStrategy};
use crate::tensor::Rng;

#[derive(Debug, Default)]
pub struct Vanilla;

impl Vanilla {
    pub fn new() -> Self {
        Vanilla
    }
}

impl UpdateStrategy for Vanilla {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Vanilla
    }

    fn begin_step(&mut self, _t: usize, _model: &mut MlpModel, _rng: &mut Rng) -> Result<StepMeta> {
        Ok(StepMeta::default())
    }

    fn after_backward(&mut self, _t: usize, _model: &mut MlpModel) -> Result<()> {
        Ok(())
    }

    fn update_gate(&self) -> Option<&MaskSet> {
        None
    }
}
