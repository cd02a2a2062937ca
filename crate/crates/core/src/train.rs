//! The optimization loop: batching, strategy hooks, timing instrumentation.
//!
//! Wall-clock is split into four phases — forward (including batch staging),
//! backward, strategy overhead (all hook work, including any pre-pass), and
//! the optimizer step. A `(seed, config, strategy)` triple fully determines
//! the final weights and the log.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::net::{backward_from_trace, forward_trace, Dataset, MlpModel};
use crate::optim::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::strategy::{Stage, UpdateStrategy};
use crate::tensor::Rng;

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub stage: Option<Stage>,
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub mask_refresh: bool,
}

/// Seconds spent per phase across the whole run.
#[derive(Debug, Clone, Copy, Default, Serialize, serde::Deserialize)]
pub struct PhaseTimes {
    pub forward: f64,
    pub backward: f64,
    pub strategy_overhead: f64,
    pub optimizer: f64,
}

impl PhaseTimes {
    pub fn sum(&self) -> f64 {
        self.forward + self.backward + self.strategy_overhead + self.optimizer
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub phases: PhaseTimes,
    /// Wall-clock of the whole call, seconds.
    pub total_seconds: f64,
    pub final_loss: f64,
}

impl TrainLog {
    /// Step-level log as CSV.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(crate::error::Error::from)?;
        w.write_record(["t", "stage", "loss", "grad_norm", "lr", "mask_refresh"])?;
        for s in &self.steps {
            w.write_record([
                s.t.to_string(),
                s.stage.map_or_else(|| "-".into(), |st| st.to_string()),
                format!("{}", s.loss),
                format!("{}", s.grad_norm),
                format!("{}", s.lr),
                s.mask_refresh.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Run-level summary as JSON.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            steps: usize,
            final_loss: f64,
            phases: &'a PhaseTimes,
            total_seconds: f64,
        }
        Ok(serde_json::to_string_pretty(&Summary {
            steps: self.steps.len(),
            final_loss: self.final_loss,
            phases: &self.phases,
            total_seconds: self.total_seconds,
        })?)
    }
}

/// Everything an observer may inspect after each completed step.
pub struct StepObservation<'a> {
    pub t: usize,
    pub stage: Option<Stage>,
    pub mask_refresh: bool,
    pub entered_cycle: bool,
    pub model: &'a MlpModel,
    pub strategy: &'a dyn UpdateStrategy,
}

/// Run `config.total_steps` steps of `strategy` over `data`.
pub fn train(
    model: &mut MlpModel,
    data: &Dataset,
    strategy: &mut dyn UpdateStrategy,
    config: &OptimizerConfig,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<TrainLog> {
    train_observed(model, data, strategy, config, batch_size, rng, &mut |_| {})
}

/// `train` with a per-step observer, for tests and debugging dumps.
pub fn train_observed(
    model: &mut MlpModel,
    data: &Dataset,
    strategy: &mut dyn UpdateStrategy,
    config: &OptimizerConfig,
    batch_size: usize,
    rng: &mut Rng,
    observer: &mut dyn FnMut(&StepObservation),
) -> Result<TrainLog> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training data".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    if let Some(expected) = strategy.expected_total_steps() {
        if expected != config.total_steps {
            return Err(Error::Config(format!(
                "strategy clock sized to {expected} steps but optimizer runs {}",
                config.total_steps
            )));
        }
    }

    let run_start = Instant::now();
    let mut phases = PhaseTimes::default();
    let mut steps = Vec::with_capacity(config.total_steps);

    // independent sub-streams: mask draws never perturb the batch order
    let mut data_rng = rng.fork(0);
    let mut strategy_rng = rng.fork(1);

    let t0 = Instant::now();
    strategy.prepare(model, data, batch_size)?;
    phases.strategy_overhead += t0.elapsed().as_secs_f64();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len(); // trigger a shuffle on the first step
    let mut state = OptimizerState::new();
    let mut final_loss = f64::NAN;

    for t in 1..=config.total_steps {
        // boundary timestamps: everything between s0 and s6 lands in a phase
        let s0 = Instant::now();
        if cursor >= order.len() {
            data_rng.shuffle(&mut order);
            cursor = 0;
        }
        let end = (cursor + batch_size).min(order.len());
        let batch = data.batch(&order[cursor..end])?;
        let s1 = Instant::now();
        cursor = end;

        let meta = strategy.begin_step(t, model, &mut strategy_rng)?;
        let s2 = Instant::now();

        let trace = forward_trace(model, &batch.inputs)?;
        let s3 = Instant::now();

        let loss = backward_from_trace(model, &trace, &batch.targets).map_err(|e| match e {
            Error::NonFinite(what) => Error::TrainingAborted {
                step: t,
                reason: format!("non-finite {what}"),
            },
            other => other,
        })?;
        let s4 = Instant::now();

        strategy.after_backward(t, model)?;
        let s5 = Instant::now();

        let stats = optimizer_step(model, config, &mut state, t, strategy.update_gate())?;
        let s6 = Instant::now();

        strategy.end_step(t, model)?;
        let s7 = Instant::now();

        phases.forward += (s1 - s0).as_secs_f64() + (s3 - s2).as_secs_f64();
        phases.strategy_overhead +=
            (s2 - s1).as_secs_f64() + (s5 - s4).as_secs_f64() + (s7 - s6).as_secs_f64();
        phases.backward += (s4 - s3).as_secs_f64();
        phases.optimizer += (s6 - s5).as_secs_f64();

        final_loss = loss;
        steps.push(StepRecord {
            t,
            stage: meta.stage,
            loss,
            grad_norm: stats.grad_norm,
            lr: stats.lr,
            mask_refresh: meta.mask_refreshed,
        });

        observer(&StepObservation {
            t,
            stage: meta.stage,
            mask_refresh: meta.mask_refreshed,
            entered_cycle: false,
            model,
            strategy,
        });
    }

    Ok(TrainLog {
        steps,
        phases,
        total_seconds: run_start.elapsed().as_secs_f64(),
        final_loss,
    })
}
