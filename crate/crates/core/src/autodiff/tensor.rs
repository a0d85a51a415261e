use std::sync::atomic::{AtomicU64, Ordering};

use crate::autodiff::tape::{Gradients, ParamGrad};
use crate::error::{Error, Result};

static NEXT_TENSOR_ID: AtomicU64 = AtomicU64::new(0);

/// Identity of a parameter tensor. Clones share the id of their source, so a
/// checkpoint copy and the live parameter are the same logical tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

impl TensorId {
    fn fresh() -> Self {
        TensorId(NEXT_TENSOR_ID.fetch_add(1, Ordering::Relaxed))
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// Tensors are the long-lived parameter carriers. Intermediate values of a
/// computation live on a [`Tape`](crate::autodiff::Tape) instead.
#[derive(Debug, Clone)]
pub struct Tensor {
    id: TensorId,
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    trainable: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Contract(format!(
                "tensor shape must have positive dimensions, got {shape:?}"
            )));
        }
        if numel(&shape) != values.len() {
            return Err(Error::Shape {
                op: "tensor",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(Tensor {
            id: TensorId::fresh(),
            shape,
            values,
            grad: None,
            trainable: true,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Self::new(shape, vec![0.0; n]).expect("zeros: shape must be positive")
    }

    pub fn vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::new(vec![n], values).expect("vector must be nonempty")
    }

    pub fn id(&self) -> TensorId {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Overwrites the gradient slot. Used by tests and by optimizers that
    /// receive gradients from elsewhere.
    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.values.len() {
            return Err(Error::Shape {
                op: "set_grad",
                left: self.shape.clone(),
                right: vec![grad.len()],
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    /// Adds this tensor's share of `grads` into the gradient slot. Frozen
    /// tensors are left untouched.
    pub fn accumulate_grad(&mut self, grads: &Gradients) {
        if !self.trainable {
            return;
        }
        let n = self.values.len();
        for contribution in grads.for_tensor(self.id) {
            let slot = self.grad.get_or_insert_with(|| vec![0.0; n]);
            match contribution {
                ParamGrad::Dense(g) => {
                    for (s, v) in slot.iter_mut().zip(g) {
                        *s += v;
                    }
                }
                ParamGrad::Rows { width, rows } => {
                    for (row, g) in rows {
                        let dst = &mut slot[row * width..(row + 1) * width];
                        for (s, v) in dst.iter_mut().zip(g) {
                            *s += v;
                        }
                    }
                }
            }
        }
    }

    /// Bit-level equality of values and shape, ignoring id and gradients.
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Anything that owns named parameter tensors.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn zero_grad(&mut self) {
        for (_, t) in self.named_params_mut() {
            t.zero_grad();
        }
    }

    fn accumulate_grad(&mut self, grads: &Gradients) {
        for (_, t) in self.named_params_mut() {
            t.accumulate_grad(grads);
        }
    }

    fn set_trainable(&mut self, trainable: bool) {
        for (_, t) in self.named_params_mut() {
            t.set_trainable(trainable);
        }
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}
