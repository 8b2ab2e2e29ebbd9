//! Adding a modality to a trained model.
//!
//! Every existing parameter, the shared prompt included, is frozen. A fresh
//! branch for the new modality is trained contrastively against an already
//! aligned anchor modality; the prompt stays shared, so the new aligner learns
//! to use the same prompt tokens as the others.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpanerError};
use crate::model::train::{fit, PairedData, TrainHistory};
use crate::model::{SpanerModel, TrainConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionConfig {
    pub modality: String,
    pub input_dim: usize,
    pub anchor: String,
    /// Optimizer, schedule and loss settings. Architecture fields are taken
    /// from the model being extended.
    #[serde(default)]
    pub train: TrainConfig,
}

/// Names of all frozen parameters, in parameter order.
pub fn frozen_names(model: &SpanerModel) -> Vec<String> {
    model
        .parameters()
        .into_iter()
        .filter(|(_, p)| p.frozen)
        .map(|(n, _)| n)
        .collect()
}

/// `cfg.train` with the model's architecture copied in.
fn effective_train_config(model: &SpanerModel, cfg: &TrainConfig) -> TrainConfig {
    TrainConfig {
        width: model.width,
        heads: model.heads,
        proj_dim: model.proj_dim,
        prompt_tokens: model.prompt.len(),
        ..cfg.clone()
    }
}

/// Returns the extended model and its training history. `data` must pair the
/// new modality with the anchor, in either order.
pub fn extend(
    model: &SpanerModel,
    cfg: &ExtensionConfig,
    data: &PairedData,
    rng: &Rng,
) -> Result<(SpanerModel, TrainHistory)> {
    model.branch(&cfg.anchor).map_err(|_| {
        SpanerError::Config(format!("anchor modality {:?} is not in the model", cfg.anchor))
    })?;
    if model.branches.contains_key(&cfg.modality) {
        return Err(SpanerError::Config(format!(
            "modality {:?} is already registered",
            cfg.modality
        )));
    }
    let want: BTreeSet<&str> = [cfg.modality.as_str(), cfg.anchor.as_str()].into();
    let got: BTreeSet<&str> = [data.first.as_str(), data.second.as_str()].into();
    if want != got {
        return Err(SpanerError::Data(format!(
            "extension data pairs {:?} with {:?}, expected {:?} with {:?}",
            data.first, data.second, cfg.modality, cfg.anchor
        )));
    }
    let train = effective_train_config(model, &cfg.train);
    train.validate()?;

    let mut extended = model.clone();
    extended.set_all_frozen(true);
    extended.register(&cfg.modality, cfg.input_dim, rng)?;
    let history = fit(&mut extended, data, &train)?;
    Ok((extended, history))
}

/// Names among `names` whose value differs bitwise between `before` and
/// `after`. A name missing from either model is a lineage error.
pub fn assert_frozen_unchanged(
    before: &SpanerModel,
    after: &SpanerModel,
    names: &[String],
) -> Result<Vec<String>> {
    let mut changed = Vec::new();
    for name in names {
        let (a, b) = match (before.parameter(name), after.parameter(name)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(SpanerError::Lineage(format!(
                    "parameter {name:?} is not present in both checkpoints"
                )))
            }
        };
        let same = a.value.shape() == b.value.shape()
            && a
                .value
                .data()
                .iter()
                .zip(b.value.data())
                .all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            changed.push(name.clone());
        }
    }
    Ok(changed)
}

/// Checks that `after` descends from `before`: every parameter of `before`
/// exists in `after` with the same shape. Returns the frozen names of
/// `after` that also exist in `before`.
pub fn lineage_frozen_names(before: &SpanerModel, after: &SpanerModel) -> Result<Vec<String>> {
    for (name, p) in before.parameters() {
        match after.parameter(&name) {
            Some(q) if q.value.shape() == p.value.shape() => {}
            Some(q) => {
                return Err(SpanerError::Lineage(format!(
                    "{name}: shape {:?} became {:?}",
                    p.value.shape(),
                    q.value.shape()
                )))
            }
            None => {
                return Err(SpanerError::Lineage(format!(
                    "{name} is missing from the later checkpoint"
                )))
            }
        }
    }
    Ok(frozen_names(after)
        .into_iter()
        .filter(|n| before.parameter(n).is_some())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;
    use crate::model::optim::Adam;
    use crate::model::train::{epoch_batches, training_step, LossWeights};
    use crate::tensor::Tensor;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            width: 8,
            heads: 2,
            proj_dim: 8,
            prompt_tokens: 2,
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
    }

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
        Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
    }

    fn base() -> SpanerModel {
        init_model(&small_cfg(), &[("vision", 6), ("text", 8)], &Rng::new(1)).unwrap()
    }

    fn ext_cfg() -> ExtensionConfig {
        ExtensionConfig {
            modality: "audio".into(),
            input_dim: 5,
            anchor: "vision".into(),
            train: small_cfg(),
        }
    }

    fn ext_data() -> PairedData {
        let mut rng = Rng::new(2);
        PairedData::new("audio", random(10, 5, &mut rng), "vision", random(10, 6, &mut rng)).unwrap()
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let before = base();
        let (after, history) = extend(&before, &ext_cfg(), &ext_data(), &Rng::new(3)).unwrap();
        assert!(!history.records.is_empty());
        let frozen = lineage_frozen_names(&before, &after).unwrap();
        assert_eq!(frozen.len(), before.parameters().len());
        assert!(assert_frozen_unchanged(&before, &after, &frozen).unwrap().is_empty());
        assert!(after.parameters().iter().any(|(n, p)| n.starts_with("audio.") && !p.frozen));
        let moved = after.parameter("audio.proj.bias").unwrap();
        assert!(moved.value.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn frozen_gradients_are_exactly_zero_every_step() {
        let mut model = base();
        model.set_all_frozen(true);
        model.register("audio", 5, &Rng::new(3)).unwrap();
        let cfg = small_cfg();
        let data = ext_data();
        let w = LossWeights::from_config(&cfg);
        let mut opt = Adam::new(&cfg);
        let order: Vec<usize> = (0..data.len()).collect();
        for (step, idx) in epoch_batches(&order, 4).into_iter().enumerate() {
            training_step(&mut model, &data.select(idx), &mut opt, &w, step).unwrap();
            for (name, p) in model.parameters() {
                if p.frozen {
                    assert!(p.grad.data().iter().all(|&g| g == 0.0), "{name} step {step}");
                }
            }
        }
    }

    #[test]
    fn detects_changed_and_missing_parameters() {
        let before = base();
        let mut after = before.clone();
        after.parameter_mut("prompt").unwrap().value.data_mut()[0] += 1e-12;
        let names = frozen_names(&{
            let mut m = before.clone();
            m.set_all_frozen(true);
            m
        });
        assert_eq!(assert_frozen_unchanged(&before, &after, &names).unwrap(), vec!["prompt".to_string()]);
        let missing = vec!["audio.proj.bias".to_string()];
        assert!(matches!(
            assert_frozen_unchanged(&before, &after, &missing),
            Err(SpanerError::Lineage(_))
        ));
        let other = init_model(&small_cfg(), &[("vision", 6), ("depth", 8)], &Rng::new(1)).unwrap();
        assert!(matches!(lineage_frozen_names(&before, &other), Err(SpanerError::Lineage(_))));
    }

    #[test]
    fn rejects_bad_requests() {
        let m = base();
        let mut c = ext_cfg();
        c.anchor = "depth".into();
        assert!(matches!(extend(&m, &c, &ext_data(), &Rng::new(0)), Err(SpanerError::Config(_))));
        let mut c = ext_cfg();
        c.modality = "text".into();
        assert!(extend(&m, &c, &ext_data(), &Rng::new(0)).is_err());
        let mut rng = Rng::new(5);
        let wrong = PairedData::new("audio", random(10, 5, &mut rng), "text", random(10, 8, &mut rng)).unwrap();
        assert!(matches!(extend(&m, &ext_cfg(), &wrong, &Rng::new(0)), Err(SpanerError::Data(_))));
    }

    #[test]
    fn architecture_fields_come_from_model() {
        let mut c = ext_cfg();
        c.train.width = 64;
        c.train.heads = 3;
        let (after, _) = extend(&base(), &c, &ext_data(), &Rng::new(3)).unwrap();
        assert_eq!(after.branch("audio").unwrap().aligner.width(), 8);
    }
}
