//! Named parameter block: current values, frozen pretrained snapshot, gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A named, shaped parameter block. `value`, `pretrained` and `grad` always
/// share one shape. `pretrained` can only be (re)written through
/// [`ParamTensor::snapshot_pretrained`]; training code mutates `value` and
/// `grad` only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamTensor {
    name: String,
    value: Matrix,
    pretrained: Matrix,
    #[serde(skip, default = "Matrix::empty_placeholder")]
    grad: Matrix,
    maskable: bool,
}

impl Matrix {
    fn empty_placeholder() -> Matrix {
        Matrix::zeros(0, 0)
    }
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Matrix, maskable: bool) -> Self {
        let (r, c) = value.shape();
        ParamTensor {
            name: name.into(),
            pretrained: value.clone(),
            grad: Matrix::zeros(r, c),
            value,
            maskable,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn maskable(&self) -> bool {
        self.maskable
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Matrix {
        &mut self.value
    }

    pub fn pretrained(&self) -> &Matrix {
        &self.pretrained
    }

    pub fn grad(&self) -> &Matrix {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut Matrix {
        &mut self.grad
    }

    pub fn set_value(&mut self, value: Matrix) -> Result<()> {
        if !value.same_shape(&self.value) {
            return Err(Error::DimensionMismatch(format!(
                "set_value on {}: {:?} vs {:?}",
                self.name,
                value.shape(),
                self.value.shape()
            )));
        }
        self.value = value;
        Ok(())
    }

    pub fn set_grad(&mut self, grad: Matrix) -> Result<()> {
        if !grad.same_shape(&self.value) {
            return Err(Error::DimensionMismatch(format!(
                "set_grad on {}: {:?} vs {:?}",
                self.name,
                grad.shape(),
                self.value.shape()
            )));
        }
        self.grad = grad;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        let (r, c) = self.value.shape();
        self.grad = Matrix::zeros(r, c);
    }

    /// Freeze the current values as the pretrained anchor.
    pub fn snapshot_pretrained(&mut self) {
        self.pretrained = self.value.clone();
    }

    /// Restore the gradient buffer after deserialization.
    pub(crate) fn ensure_grad_buffer(&mut self) {
        if !self.grad.same_shape(&self.value) {
            self.zero_grad();
        }
    }
}
