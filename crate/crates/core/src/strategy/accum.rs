//! Per-parameter running accumulators, keyed by tensor name.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::MlpModel;
use crate::tensor::Matrix;

/// Name-keyed set of matrices, one per maskable tensor. Iteration is always
/// in ascending name order, which is also the ranking tie-break order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TensorMap {
    map: BTreeMap<String, Matrix>,
}

impl TensorMap {
    pub fn new() -> Self {
        TensorMap::default()
    }

    /// Zero matrices shaped like the model's maskable tensors.
    pub fn zeros_like_maskable(model: &MlpModel) -> Self {
        let mut map = BTreeMap::new();
        for p in model.maskable_params() {
            let (r, c) = p.value().shape();
            map.insert(p.name().to_string(), Matrix::zeros(r, c));
        }
        TensorMap { map }
    }

    /// Snapshot of the model's maskable tensor values.
    pub fn snapshot_maskable(model: &MlpModel) -> Self {
        let mut map = BTreeMap::new();
        for p in model.maskable_params() {
            map.insert(p.name().to_string(), p.value().clone());
        }
        TensorMap { map }
    }

    pub fn insert(&mut self, name: impl Into<String>, m: Matrix) {
        self.map.insert(name.into(), m);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_entries(&self) -> usize {
        self.map.values().map(|m| m.len()).sum()
    }

    pub fn reset(&mut self) {
        for m in self.map.values_mut() {
            for v in m.data_mut() {
                *v = 0.0;
            }
        }
    }

    pub fn all_zero(&self) -> bool {
        self.map.values().all(|m| m.data().iter().all(|v| *v == 0.0))
    }
}

/// Running per-entry statistic of Stage I gradients (squared by default):
/// the diagonal-Fisher importance score. Reset at every cycle start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradAccumulator(pub TensorMap);

impl GradAccumulator {
    pub fn zeros_like(model: &MlpModel) -> Self {
        GradAccumulator(TensorMap::zeros_like_maskable(model))
    }

    /// `acc += grad^2` entrywise, optionally restricted to mask==1 entries.
    pub fn add_squared(&mut self, name: &str, grad: &Matrix, mask: Option<&Matrix>) -> Result<()> {
        self.add_with(name, grad, mask, |g| g * g)
    }

    /// `acc += grad` entrywise (the alternate raw-gradient reading).
    pub fn add_raw(&mut self, name: &str, grad: &Matrix, mask: Option<&Matrix>) -> Result<()> {
        self.add_with(name, grad, mask, |g| g)
    }

    fn add_with(
        &mut self,
        name: &str,
        grad: &Matrix,
        mask: Option<&Matrix>,
        f: impl Fn(f64) -> f64,
    ) -> Result<()> {
        let acc = self
            .0
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tensor {name}")))?;
        if !acc.same_shape(grad) {
            return Err(Error::DimensionMismatch(format!(
                "accumulator {name}: {:?} vs grad {:?}",
                acc.shape(),
                grad.shape()
            )));
        }
        match mask {
            None => {
                for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                    *a += f(*g);
                }
            }
            Some(m) => {
                for ((a, g), keep) in acc.data_mut().iter_mut().zip(grad.data()).zip(m.data()) {
                    if *keep == 1.0 {
                        *a += f(*g);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.0.reset();
    }
}

/// Count of Stage I updates per entry within the current cycle.
/// Reset at every cycle start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreqAccumulator(pub TensorMap);

impl FreqAccumulator {
    pub fn zeros_like(model: &MlpModel) -> Self {
        FreqAccumulator(TensorMap::zeros_like_maskable(model))
    }

    /// `count += 1` wherever mask == 1.
    pub fn add_mask(&mut self, name: &str, mask: &Matrix) -> Result<()> {
        let acc = self
            .0
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tensor {name}")))?;
        if !acc.same_shape(mask) {
            return Err(Error::DimensionMismatch(format!(
                "frequency accumulator {name}: {:?} vs mask {:?}",
                acc.shape(),
                mask.shape()
            )));
        }
        for (a, m) in acc.data_mut().iter_mut().zip(mask.data()) {
            *a += *m;
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.0.reset();
    }
}
