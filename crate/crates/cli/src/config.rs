//! The single JSON run configuration shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spaner::data::SyntheticSpec;
use spaner::{Result, SpanerError, TrainConfig};

/// Settings for adding a modality to a trained checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendSection {
    pub modality: String,
    pub anchor: String,
    #[serde(default)]
    pub train: TrainConfig,
}

/// The small random instance checked by `grad-check`. The prompt is redrawn
/// at `prompt_std`: at its N(0, 0.02²) initialization a step of 1e-4 is a
/// sizable fraction of each entry, and the layer norm over nearly constant
/// prompt tokens is curved enough that central differences mostly measure
/// truncation error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSection {
    pub batch: usize,
    pub input_dim: usize,
    pub width: usize,
    pub heads: usize,
    pub prompt_tokens: usize,
    pub prompt_std: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            batch: 4,
            input_dim: 8,
            width: 8,
            heads: 2,
            prompt_tokens: 2,
            prompt_std: 0.5,
            lambda: 0.5,
            temperature: 1.0,
            step: 1e-4,
            tolerance: 1e-4,
        }
    }
}

impl GradCheckSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            width: self.width,
            heads: self.heads,
            proj_dim: self.width,
            prompt_tokens: self.prompt_tokens,
            lambda: self.lambda,
            temperature: self.temperature,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives data generation, initialization and shuffling.
    pub seed: u64,
    pub data: SyntheticSpec,
    /// When set, data is also written as a k-per-class support split and a
    /// query split, and training reads the support split.
    pub split_k: Option<usize>,
    /// Modality whose map produces the one-per-class semantic set.
    pub semantic: Option<String>,
    /// The two modalities trained jointly.
    pub modalities: [String; 2],
    pub train: TrainConfig,
    pub extend: Option<ExtendSection>,
    pub grad_check: GradCheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: SyntheticSpec::default(),
            split_k: None,
            semantic: None,
            modalities: ["vision".into(), "text".into()],
            train: TrainConfig::default(),
            extend: None,
            grad_check: GradCheckSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| SpanerError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| SpanerError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Apply the seed override, push the seed into every section, validate.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.data.seed = self.seed;
        self.train.seed = self.seed;
        if let Some(e) = &mut self.extend {
            e.train.seed = self.seed;
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        let [a, b] = &self.modalities;
        if a == b {
            return Err(SpanerError::Config(format!("modalities: {a:?} listed twice")));
        }
        for m in &self.modalities {
            self.data.modality(m).map_err(|e| SpanerError::Config(format!("modalities: {e}")))?;
        }
        if let Some(k) = self.split_k {
            if k == 0 || k >= self.data.instances_per_class {
                return Err(SpanerError::Config(format!(
                    "split_k: must lie in [1, {})",
                    self.data.instances_per_class
                )));
            }
        }
        if let Some(s) = &self.semantic {
            self.data.modality(s).map_err(|e| SpanerError::Config(format!("semantic: {e}")))?;
        }
        if let Some(e) = &self.extend {
            self.data
                .modality(&e.modality)
                .map_err(|err| SpanerError::Config(format!("extend.modality: {err}")))?;
            e.train.validate()?;
        }
        let g = &self.grad_check;
        g.train_config(self.seed).validate()?;
        if g.batch < 2 || g.input_dim == 0 {
            return Err(SpanerError::Config("grad_check: batch must be ≥ 2 and input_dim ≥ 1".into()));
        }
        if !(g.step > 0.0 && g.tolerance > 0.0 && g.prompt_std >= 0.0) {
            return Err(SpanerError::Config(
                "grad_check: step and tolerance must be positive, prompt_std non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let e: std::result::Result<RunConfig, _> = serde_json::from_str(r#"{"sed": 1}"#);
        assert!(e.is_err());
        let e: std::result::Result<RunConfig, _> = serde_json::from_str(r#"{"train": {"lr": 1}}"#);
        assert!(e.is_err());
    }

    #[test]
    fn seed_reaches_every_section() {
        let mut c: RunConfig = serde_json::from_str(
            r#"{"seed": 3, "extend": {"modality": "audio", "anchor": "vision"}}"#,
        )
        .unwrap();
        c = c.resolve(Some(9)).unwrap();
        assert_eq!((c.seed, c.data.seed, c.train.seed), (9, 9, 9));
        assert_eq!(c.extend.unwrap().train.seed, 9);
    }

    #[test]
    fn validation_names_fields() {
        let c: RunConfig = serde_json::from_str(
            r#"{"data": {"modalities": [{"tag": "vision", "dim": 4, "noise": -1.0}, {"tag": "text", "dim": 4, "noise": 0.1}]}}"#,
        )
        .unwrap();
        let e = c.resolve(None).unwrap_err();
        assert!(e.to_string().contains("modalities[0].noise"), "{e}");
        let c = RunConfig {
            modalities: ["vision".into(), "depth".into()],
            ..RunConfig::default()
        };
        assert!(c.resolve(None).unwrap_err().to_string().contains("depth"));
    }
}
