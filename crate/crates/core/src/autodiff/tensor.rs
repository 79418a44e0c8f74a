use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    values: Vec<S>,
    pub requires_grad: bool,
    pub grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, values: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Precondition(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Dimension {
                op: "tensor",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        Ok(Tensor {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![S::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let values = rows.iter().flatten().map(|&x| S::of(x)).collect();
        Self::new(vec![rows.len(), cols], values)
    }

    pub fn vector(values: &[f64]) -> Result<Self> {
        Self::new(vec![values.len()], values.iter().map(|&x| S::of(x)).collect())
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![S::of(x)],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `scale * delta` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[S], scale: S) {
        debug_assert_eq!(delta.len(), self.values.len());
        let grad = self
            .grad
            .get_or_insert_with(|| vec![S::zero(); delta.len()]);
        for (g, &d) in grad.iter_mut().zip(delta) {
            *g += scale * d;
        }
    }

    pub fn accumulate_grad_row(&mut self, row: usize, delta: &[S], scale: S) {
        let width = delta.len();
        let n = self.values.len();
        let grad = self.grad.get_or_insert_with(|| vec![S::zero(); n]);
        for (g, &d) in grad[row * width..(row + 1) * width].iter_mut().zip(delta) {
            *g += scale * d;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
