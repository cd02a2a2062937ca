//! Optimizer rules, learning-rate schedule, and gradient clipping.
//!
//! SGD is the reference rule for every equation-level check; the decoupled
//! weight-decay adaptive variant is provided for protocol realism. Entries
//! gated out by a strategy mask are skipped entirely: no gradient step, no
//! moment update, no weight decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::MlpModel;
use crate::strategy::MaskSet;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    Sgd,
    AdamW,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimKind,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Maximum global norm of the (masked) gradient vector.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Fraction of `total_steps` spent ramping the learning rate up.
    #[serde(default)]
    pub warmup_fraction: f64,
    pub total_steps: usize,
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}

fn default_eps() -> f64 {
    1e-8
}

fn default_clip() -> f64 {
    1.0
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, total_steps: usize) -> Self {
        OptimizerConfig {
            kind: OptimKind::Sgd,
            lr,
            weight_decay: 0.0,
            betas: default_betas(),
            eps: default_eps(),
            clip_norm: f64::INFINITY,
            warmup_fraction: 0.0,
            total_steps,
        }
    }

    pub fn adamw(lr: f64, total_steps: usize) -> Self {
        OptimizerConfig {
            kind: OptimKind::AdamW,
            lr,
            weight_decay: 0.01,
            betas: default_betas(),
            eps: default_eps(),
            clip_norm: default_clip(),
            warmup_fraction: 0.1,
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip_norm {} must be > 0", self.clip_norm)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup_fraction {} outside [0, 1)",
                self.warmup_fraction
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_fraction * self.total_steps as f64).round() as usize
    }
}

/// Linear ramp 0 -> lr over the warmup steps, then linear decay to 0 at
/// `total_steps`.
pub fn lr_at(config: &OptimizerConfig, t: usize) -> Result<f64> {
    if t < 1 || t > config.total_steps {
        return Err(Error::StepOutOfRange {
            t,
            ms: config.total_steps,
        });
    }
    let warmup = config.warmup_steps();
    let total = config.total_steps as f64;
    if t <= warmup {
        Ok(config.lr * t as f64 / warmup as f64)
    } else {
        Ok(config.lr * (total - t as f64) / (total - warmup as f64))
    }
}

/// Per-tensor first/second moment estimates for the adaptive rule.
#[derive(Debug, Default)]
pub struct OptimizerState {
    step: usize,
    moments: BTreeMap<String, (Matrix, Matrix)>,
}

impl OptimizerState {
    pub fn new() -> Self {
        OptimizerState::default()
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    /// Global norm of the gated gradient vector before clipping.
    pub grad_norm: f64,
    /// Scale factor applied by clipping (1.0 when inactive).
    pub clip_scale: f64,
    pub lr: f64,
}

fn gate_of<'a>(gate: Option<&'a MaskSet>, name: &str) -> Option<&'a Matrix> {
    gate.and_then(|g| g.get(name))
}

/// Apply one optimizer step to every parameter the gate admits.
/// `masked grads` means: entries whose gate is 0 contribute nothing to the
/// clipping norm and receive no update at all.
pub fn optimizer_step(
    model: &mut MlpModel,
    config: &OptimizerConfig,
    state: &mut OptimizerState,
    t: usize,
    gate: Option<&MaskSet>,
) -> Result<StepStats> {
    let lr = lr_at(config, t)?;

    let mut sq_sum = 0.0;
    for p in model.params() {
        match gate_of(gate, p.name()) {
            None => sq_sum += p.grad().sq_sum(),
            Some(mask) => {
                for (g, m) in p.grad().data().iter().zip(mask.data()) {
                    if *m == 1.0 {
                        sq_sum += g * g;
                    }
                }
            }
        }
    }
    let grad_norm = sq_sum.sqrt();
    if !grad_norm.is_finite() {
        return Err(Error::TrainingAborted {
            step: t,
            reason: "non-finite gradient norm".into(),
        });
    }
    let clip_scale = if grad_norm > config.clip_norm {
        config.clip_norm / grad_norm
    } else {
        1.0
    };

    state.step += 1;
    let bias1 = 1.0 - config.betas.0.powi(state.step as i32);
    let bias2 = 1.0 - config.betas.1.powi(state.step as i32);

    let names: Vec<String> = model.params().map(|p| p.name().to_string()).collect();
    for name in names {
        let mask = gate_of(gate, &name).cloned();
        let p = model.param_mut(&name).expect("param exists");
        let (rows, cols) = p.value().shape();

        match config.kind {
            OptimKind::Sgd => {
                let grad = p.grad().clone();
                let value = p.value_mut();
                for i in 0..rows * cols {
                    if let Some(m) = &mask {
                        if m.data()[i] != 1.0 {
                            continue;
                        }
                    }
                    let g = grad.data()[i] * clip_scale;
                    value.data_mut()[i] -= lr * g;
                }
            }
            OptimKind::AdamW => {
                let (m_state, v_state) = state
                    .moments
                    .entry(name.clone())
                    .or_insert_with(|| (Matrix::zeros(rows, cols), Matrix::zeros(rows, cols)));
                let grad = p.grad().clone();
                let value = p.value_mut();
                let (b1, b2) = config.betas;
                for i in 0..rows * cols {
                    if let Some(m) = &mask {
                        if m.data()[i] != 1.0 {
                            continue;
                        }
                    }
                    let g = grad.data()[i] * clip_scale;
                    let m_new = b1 * m_state.data()[i] + (1.0 - b1) * g;
                    let v_new = b2 * v_state.data()[i] + (1.0 - b2) * g * g;
                    m_state.data_mut()[i] = m_new;
                    v_state.data_mut()[i] = v_new;
                    let m_hat = m_new / bias1;
                    let v_hat = v_new / bias2;
                    let w = value.data()[i];
                    value.data_mut()[i] =
                        w - lr * (m_hat / (v_hat.sqrt() + config.eps) + config.weight_decay * w);
                }
            }
        }

        if p.value().data().iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingAborted {
                step: t,
                reason: format!("non-finite weights in {name}"),
            });
        }
    }

    Ok(StepStats {
        grad_norm,
        clip_scale,
        lr,
    })
}
