//! The five update strategies behind one hook-based contract.
//!
//! The trainer calls three hooks per step, in order:
//!
//! 1. [`UpdateStrategy::begin_step`] (pre-forward) — advance the stage
//!    clock, refresh ranked masks, swap mixed weights in.
//! 2. [`UpdateStrategy::after_backward`] (post-backward) — restore swapped
//!    weights, pull gradients back onto the raw parameters, accumulate.
//! 3. [`UpdateStrategy::end_step`] (post-step) — bookkeeping after the
//!    optimizer ran.
//!
//! Between hooks 2 and 3 the optimizer consults [`UpdateStrategy::update_gate`]:
//! entries gated out are skipped entirely — no gradient step, no moment
//! update, no weight decay — which is what keeps frozen entries bit-identical
//! to their anchors.

mod accum;
mod child_tuning;
mod dps_dense;
mod dps_mix;
mod mask;
mod mixout;
mod schedule;
mod vanilla;

pub use accum::{FreqAccumulator, GradAccumulator, TensorMap};
pub use child_tuning::{childtuning_prepass, ChildTuningD};
pub use dps_dense::DpsDense;
pub use dps_mix::DpsMix;
pub use mask::{
    keep_count, mix_score, mixed_grad_to_param, mixed_weights, ranked_mask_dense, ranked_mask_mix,
    ranked_mask_mix_with_boundary, MaskProvenance, MaskSet, PENALTY_BOUNDARY,
};
pub use mixout::Mixout;
pub use schedule::{Stage, StageSchedule, StepEvents};
pub use vanilla::Vanilla;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dataset, MlpModel};
use crate::tensor::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Vanilla,
    Mixout,
    ChildTuningD,
    DpsDense,
    DpsMix,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StrategyKind::Vanilla => "vanilla",
            StrategyKind::Mixout => "mixout",
            StrategyKind::ChildTuningD => "child_tuning_d",
            StrategyKind::DpsDense => "dps_dense",
            StrategyKind::DpsMix => "dps_mix",
        };
        write!(f, "{name}")
    }
}

/// What Stage I of the mix variant accumulates per updated entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StageOneAccumulation {
    /// Squared gradients (diagonal-Fisher reading; the default).
    #[default]
    SquaredGrad,
    /// Signed raw gradients. Scores may then be negative, which relaxes the
    /// usual nonnegativity of the accumulator.
    RawGrad,
}

fn default_penalty_boundary() -> usize {
    mask::PENALTY_BOUNDARY
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Drop fraction: share of maskable entries excluded from the update.
    #[serde(default)]
    pub p: f64,
    /// Update ratio (stage length / total steps); DPS kinds only.
    #[serde(default)]
    pub ur: Option<f64>,
    /// Stage length below which the frequency penalty is bypassed.
    #[serde(default = "default_penalty_boundary")]
    pub penalty_boundary: usize,
    #[serde(default)]
    pub mix_accumulation: StageOneAccumulation,
}

impl StrategyConfig {
    pub fn vanilla() -> Self {
        StrategyConfig {
            kind: StrategyKind::Vanilla,
            p: 0.0,
            ur: None,
            penalty_boundary: mask::PENALTY_BOUNDARY,
            mix_accumulation: StageOneAccumulation::default(),
        }
    }

    pub fn mixout(p: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::Mixout,
            p,
            ..StrategyConfig::vanilla()
        }
    }

    pub fn child_tuning_d(p: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::ChildTuningD,
            p,
            ..StrategyConfig::vanilla()
        }
    }

    pub fn dps_dense(p: f64, ur: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::DpsDense,
            p,
            ur: Some(ur),
            ..StrategyConfig::vanilla()
        }
    }

    pub fn dps_mix(p: f64, ur: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::DpsMix,
            p,
            ur: Some(ur),
            ..StrategyConfig::vanilla()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::Config(format!("drop fraction p={} outside [0, 1)", self.p)));
        }
        match self.kind {
            StrategyKind::DpsDense | StrategyKind::DpsMix => {
                let ur = self
                    .ur
                    .ok_or_else(|| Error::Config(format!("{} requires an update ratio", self.kind)))?;
                if !(ur > 0.0 && ur <= 0.5) {
                    return Err(Error::Config(format!("update ratio ur={ur} outside (0, 0.5]")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Human-readable cell label, e.g. `dps_mix(p=0.3,ur=0.1)`.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Vanilla => "vanilla".to_string(),
            StrategyKind::Mixout | StrategyKind::ChildTuningD => {
                format!("{}(p={})", self.kind, self.p)
            }
            StrategyKind::DpsDense | StrategyKind::DpsMix => {
                format!("{}(p={},ur={})", self.kind, self.p, self.ur.unwrap_or(0.0))
            }
        }
    }

    /// Build a fresh per-run strategy. `total_steps` is the run length the
    /// stage clock is sized to.
    pub fn build(&self, total_steps: usize) -> Result<Box<dyn UpdateStrategy>> {
        self.validate()?;
        Ok(match self.kind {
            StrategyKind::Vanilla => Box::new(Vanilla::new()),
            StrategyKind::Mixout => Box::new(Mixout::new(self.p)),
            StrategyKind::ChildTuningD => Box::new(ChildTuningD::new(self.p)),
            StrategyKind::DpsDense => {
                Box::new(DpsDense::new(self.p, self.ur.unwrap(), total_steps)?)
            }
            StrategyKind::DpsMix => Box::new(DpsMix::new(
                self.p,
                self.ur.unwrap(),
                total_steps,
                self.penalty_boundary,
                self.mix_accumulation,
            )?),
        })
    }
}

/// Per-step report from `begin_step`, consumed by the trainer's log.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepMeta {
    pub stage: Option<Stage>,
    pub mask_refreshed: bool,
}

/// Debug dump of strategy-internal state, JSON-keyed by tensor name.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StrategyStateDump {
    pub current_mask: Option<MaskSet>,
    pub gam: Option<TensorMap>,
    pub fam: Option<TensorMap>,
    pub stage2_anchor: Option<TensorMap>,
}

impl StrategyStateDump {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One per training run; owns all masks, accumulators and anchors.
pub trait UpdateStrategy {
    fn kind(&self) -> StrategyKind;

    /// The run length the strategy's clock was sized to, when it has one.
    fn expected_total_steps(&self) -> Option<usize> {
        None
    }

    /// One-time setup before step 1 (the child-tuning pre-pass lives here).
    fn prepare(&mut self, _model: &mut MlpModel, _data: &Dataset, _batch_size: usize) -> Result<()> {
        Ok(())
    }

    /// Pre-forward hook.
    fn begin_step(&mut self, t: usize, model: &mut MlpModel, rng: &mut Rng) -> Result<StepMeta>;

    /// Post-backward hook.
    fn after_backward(&mut self, t: usize, model: &mut MlpModel) -> Result<()>;

    /// Entries the optimizer may touch this step (`None` = all).
    fn update_gate(&self) -> Option<&MaskSet>;

    /// Post-step hook.
    fn end_step(&mut self, _t: usize, _model: &mut MlpModel) -> Result<()> {
        Ok(())
    }

    fn dump_state(&self) -> StrategyStateDump {
        StrategyStateDump::default()
    }
}
