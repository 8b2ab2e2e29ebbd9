use crate::tensor::Tensor;

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub frozen: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            frozen: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    /// Add `g` into the gradient; a no-op on frozen parameters.
    pub fn accumulate(&mut self, g: &[f64]) {
        if self.frozen {
            return;
        }
        debug_assert_eq!(g.len(), self.grad.len());
        for (a, b) in self.grad.data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.data().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
