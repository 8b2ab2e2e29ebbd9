//! Paired contrastive objective.
//!
//! Rows of `z1` and `z2` are L2-normalized, the cosine-similarity matrix
//! `M = z1 · z2ᵀ` is divided by the temperature, and the loss is the mean
//! cross-entropy of each row against its own index. In symmetric mode the
//! same loss over `Mᵀ` is averaged in.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpanerError};
use crate::tensor::{
    matmul, matmul_backward, row_normalize, row_normalize_backward,
    softmax_cross_entropy_rows_grad, Tensor, NORM_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    #[serde(default)]
    pub symmetric: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            symmetric: false,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(SpanerError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Loss value with gradients for both inputs.
#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub grad_z1: Tensor,
    pub grad_z2: Tensor,
}

fn check_pair(z1: &Tensor, z2: &Tensor) -> Result<()> {
    if z1.shape().len() != 2 || z1.shape() != z2.shape() {
        return Err(SpanerError::Dimension(format!(
            "contrastive inputs must be equal-shape matrices, got {:?} and {:?}",
            z1.shape(),
            z2.shape()
        )));
    }
    Ok(())
}

pub fn contrastive_loss(z1: &Tensor, z2: &Tensor, cfg: &ContrastiveConfig) -> Result<f64> {
    contrastive_loss_grad(z1, z2, cfg).map(|o| o.loss)
}

pub fn contrastive_loss_grad(
    z1: &Tensor,
    z2: &Tensor,
    cfg: &ContrastiveConfig,
) -> Result<ContrastiveOutput> {
    check_pair(z1, z2)?;
    cfg.validate()?;
    let b = z1.rows();
    let n1 = row_normalize(z1, NORM_EPS);
    let n2 = row_normalize(z2, NORM_EPS);
    let logits = matmul(&n1, &n2.transpose())?.scale(1.0 / cfg.temperature);
    let targets: Vec<usize> = (0..b).collect();

    let (mut loss, mut dlogits) = softmax_cross_entropy_rows_grad(&logits, &targets)?;
    if cfg.symmetric {
        let (loss_t, dlogits_t) = softmax_cross_entropy_rows_grad(&logits.transpose(), &targets)?;
        loss = 0.5 * (loss + loss_t);
        dlogits = dlogits.scale(0.5);
        dlogits.add_assign(&dlogits_t.transpose().scale(0.5));
    }

    let dm = dlogits.scale(1.0 / cfg.temperature);
    let n2t = n2.transpose();
    let (dn1, dn2t) = matmul_backward(&n1, &n2t, &dm)?;
    Ok(ContrastiveOutput {
        loss,
        grad_z1: row_normalize_backward(z1, NORM_EPS, &dn1),
        grad_z2: row_normalize_backward(z2, NORM_EPS, &dn2t.transpose()),
    })
}
