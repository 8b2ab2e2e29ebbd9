//! Paired training: `L = L_align + λ·L_ca`, where `L_ca` compares the pooled
//! aligner outputs and `L_align` compares the projections of the inputs.

use crate::contrastive::{contrastive_loss, contrastive_loss_grad, ContrastiveConfig};
use crate::error::{Result, SpanerError};
use crate::gradcheck::Objective;
use crate::param::Parameter;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::optim::Adam;
use super::{SpanerModel, TrainConfig};

/// Row-aligned inputs for two modalities: row `i` of `x1` and of `x2` are
/// the same underlying instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedData {
    pub first: String,
    pub second: String,
    pub x1: Tensor,
    pub x2: Tensor,
}

impl PairedData {
    pub fn new(first: &str, x1: Tensor, second: &str, x2: Tensor) -> Result<Self> {
        if x1.rows() != x2.rows() {
            return Err(SpanerError::Dimension(format!(
                "paired inputs have {} and {} rows",
                x1.rows(),
                x2.rows()
            )));
        }
        if first == second {
            return Err(SpanerError::Config(format!("cannot pair {first:?} with itself")));
        }
        Ok(Self {
            first: first.to_string(),
            second: second.to_string(),
            x1,
            x2,
        })
    }

    pub fn len(&self) -> usize {
        self.x1.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> PairedData {
        PairedData {
            first: self.first.clone(),
            second: self.second.clone(),
            x1: self.x1.select_rows(idx),
            x2: self.x2.select_rows(idx),
        }
    }
}

/// Weighting of the two contrastive terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub loss: ContrastiveConfig,
}

impl LossWeights {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            lambda: cfg.lambda,
            loss: cfg.loss_config(),
        }
    }

    pub fn of_model(model: &SpanerModel) -> Self {
        Self {
            lambda: model.lambda,
            loss: model.loss_cfg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub loss: f64,
    pub loss_align: f64,
    pub loss_ca: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub loss_align: f64,
    pub loss_ca: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub lambda: f64,
    pub records: Vec<StepRecord>,
}

/// Forward-only loss.
pub fn pair_loss(model: &SpanerModel, batch: &PairedData, w: &LossWeights) -> Result<StepLosses> {
    let c1 = model.forward_branch(&batch.first, &batch.x1)?;
    let c2 = model.forward_branch(&batch.second, &batch.x2)?;
    let loss_ca = contrastive_loss(&c1.z, &c2.z, &w.loss)?;
    let loss_align = contrastive_loss(&c1.f, &c2.f, &w.loss)?;
    Ok(StepLosses {
        loss: loss_align + w.lambda * loss_ca,
        loss_align,
        loss_ca,
    })
}

/// Zero all gradients and fill them with `∂L/∂θ` for the batch.
pub fn compute_gradients(model: &mut SpanerModel, batch: &PairedData, w: &LossWeights) -> Result<StepLosses> {
    let c1 = model.forward_branch(&batch.first, &batch.x1)?;
    let c2 = model.forward_branch(&batch.second, &batch.x2)?;
    let ca = contrastive_loss_grad(&c1.z, &c2.z, &w.loss)?;
    let al = contrastive_loss_grad(&c1.f, &c2.f, &w.loss)?;
    model.zero_grad();
    model.backward_branch(&batch.first, &c1, &ca.grad_z1.scale(w.lambda), &al.grad_z1)?;
    model.backward_branch(&batch.second, &c2, &ca.grad_z2.scale(w.lambda), &al.grad_z2)?;
    Ok(StepLosses {
        loss: al.loss + w.lambda * ca.loss,
        loss_align: al.loss,
        loss_ca: ca.loss,
    })
}

/// One optimizer update on every non-frozen parameter.
pub fn training_step(
    model: &mut SpanerModel,
    batch: &PairedData,
    opt: &mut Adam,
    w: &LossWeights,
    step: usize,
) -> Result<StepLosses> {
    if batch.len() < 2 {
        return Err(SpanerError::Config(format!(
            "training batch needs at least 2 rows, got {}",
            batch.len()
        )));
    }
    let losses = compute_gradients(model, batch, w)?;
    if !losses.loss.is_finite() {
        return Err(SpanerError::Numeric {
            step,
            message: format!(
                "loss {} (align {}, ca {})",
                losses.loss, losses.loss_align, losses.loss_ca
            ),
        });
    }
    opt.step(model);
    Ok(losses)
}

/// Index batches for one epoch. A trailing single-row batch is dropped since
/// a one-row contrastive batch has no negatives.
pub fn epoch_batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .collect()
}

pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    let full = n / batch_size;
    full + usize::from(n % batch_size >= 2)
}

/// `cfg.epochs` passes over `data` with a seeded shuffle per epoch.
pub fn fit(model: &mut SpanerModel, data: &PairedData, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(SpanerError::Config(format!(
            "training set needs at least 2 paired rows, got {}",
            data.len()
        )));
    }
    let weights = LossWeights::from_config(cfg);
    let mut opt = Adam::new(cfg);
    let mut rng = Rng::new(cfg.seed).fork_named("shuffle");
    let mut history = TrainHistory {
        lambda: cfg.lambda,
        records: Vec::new(),
    };
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        for idx in epoch_batches(&order, cfg.batch_size) {
            let batch = data.select(idx);
            let l = training_step(model, &batch, &mut opt, &weights, step)?;
            history.records.push(StepRecord {
                step,
                epoch,
                loss: l.loss,
                loss_align: l.loss_align,
                loss_ca: l.loss_ca,
            });
            step += 1;
        }
    }
    Ok(history)
}

/// `L` over a fixed batch as a function of the model's parameters.
pub struct PairObjective<'a> {
    pub model: &'a mut SpanerModel,
    pub batch: &'a PairedData,
    pub weights: LossWeights,
}

impl Objective for PairObjective<'_> {
    fn loss(&self) -> Result<f64> {
        pair_loss(self.model, self.batch, &self.weights).map(|l| l.loss)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        compute_gradients(self.model, self.batch, &self.weights).map(|l| l.loss)
    }

    fn parameter_names(&self) -> Vec<String> {
        self.model.parameters().into_iter().map(|(n, _)| n).collect()
    }

    fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.model.parameter(name)
    }

    fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.model.parameter_mut(name)
    }
}
