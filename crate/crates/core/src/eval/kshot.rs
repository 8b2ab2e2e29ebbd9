//! Few-shot runner: per seed, generate data, split k-shot, train (and
//! optionally extend) on the support split, evaluate on the query split.

use std::collections::BTreeMap;

use crate::data::{gen_synthetic, kshot_split_paired, pair, semantic_modality, LabeledEmbeddings, SyntheticSpec};
use crate::error::{Result, SpanerError};
use crate::extension::{extend, ExtensionConfig};
use crate::model::train::fit;
use crate::model::{init_model, TrainConfig};
use crate::rng::Rng;

use super::{retrieval_accuracy, MatchMode};

/// Where the queries of a direction come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuerySource {
    /// Held-out instances of a modality.
    Modality(String),
    /// One noise-free vector per class, embedded through the named modality.
    Semantic(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Direction {
    pub query: QuerySource,
    /// Gallery is the held-out split of this modality.
    pub gallery: String,
}

impl Direction {
    pub fn modality(query: &str, gallery: &str) -> Self {
        Self {
            query: QuerySource::Modality(query.into()),
            gallery: gallery.into(),
        }
    }

    pub fn semantic(through: &str, gallery: &str) -> Self {
        Self {
            query: QuerySource::Semantic(through.into()),
            gallery: gallery.into(),
        }
    }

    pub fn label(&self) -> String {
        match &self.query {
            QuerySource::Modality(m) => format!("{m}->{}", self.gallery),
            QuerySource::Semantic(_) => format!("semantic->{}", self.gallery),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionPlan {
    pub modality: String,
    pub anchor: String,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KShotPlan {
    /// `seed` is replaced by each run seed.
    pub spec: SyntheticSpec,
    /// The two modalities trained jointly.
    pub base: [String; 2],
    /// `seed` is replaced by each run seed.
    pub train: TrainConfig,
    pub extension: Option<ExtensionPlan>,
    pub directions: Vec<Direction>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KShotRow {
    pub k: usize,
    pub direction: String,
    /// Top-1 class-level accuracy per seed, in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn dim_of(spec: &SyntheticSpec, tag: &str) -> Result<usize> {
    spec.modality(tag).map(|m| m.dim)
}

/// Accuracy of every direction for one seed and one k, in direction order.
pub fn kshot_run(plan: &KShotPlan, seed: u64, k: usize) -> Result<Vec<f64>> {
    let spec = SyntheticSpec {
        seed,
        ..plan.spec.clone()
    };
    let data = gen_synthetic(&spec)?;
    let splits = kshot_split_paired(&data, k, &Rng::new(seed).fork_named("split"))?;
    let split = |tag: &str| {
        splits
            .get(tag)
            .ok_or_else(|| SpanerError::Config(format!("modality {tag:?} is not in the data spec")))
    };

    let train = TrainConfig {
        seed,
        ..plan.train.clone()
    };
    let [a, b] = &plan.base;
    let mut model = init_model(
        &train,
        &[(a, dim_of(&spec, a)?), (b, dim_of(&spec, b)?)],
        &Rng::new(seed).fork_named("init"),
    )?;
    fit(&mut model, &pair(&split(a)?.support, &split(b)?.support)?, &train)?;

    if let Some(ext) = &plan.extension {
        let cfg = ExtensionConfig {
            modality: ext.modality.clone(),
            input_dim: dim_of(&spec, &ext.modality)?,
            anchor: ext.anchor.clone(),
            train: TrainConfig {
                seed,
                ..ext.train.clone()
            },
        };
        let paired = pair(&split(&ext.modality)?.support, &split(&ext.anchor)?.support)?;
        model = extend(&model, &cfg, &paired, &Rng::new(seed).fork_named("extend"))?.0;
    }

    let mut semantic: BTreeMap<String, LabeledEmbeddings> = BTreeMap::new();
    let mut out = Vec::with_capacity(plan.directions.len());
    for dir in &plan.directions {
        let gallery = &split(&dir.gallery)?.query;
        let query = match &dir.query {
            QuerySource::Modality(m) => &split(m)?.query,
            QuerySource::Semantic(m) => {
                if !semantic.contains_key(m) {
                    semantic.insert(m.clone(), semantic_modality(&spec, m)?);
                }
                &semantic[m]
            }
        };
        out.push(retrieval_accuracy(&model, query, gallery, 1, MatchMode::Class)?.accuracy);
    }
    Ok(out)
}

/// One row per (k, direction), k-major, aggregated over `plan.seeds`.
pub fn kshot_experiment(plan: &KShotPlan) -> Result<Vec<KShotRow>> {
    if plan.seeds.is_empty() || plan.ks.is_empty() || plan.directions.is_empty() {
        return Err(SpanerError::Config("k-shot plan needs seeds, k values and directions".into()));
    }
    let mut rows = Vec::new();
    for &k in &plan.ks {
        let mut per_dir = vec![Vec::with_capacity(plan.seeds.len()); plan.directions.len()];
        for &seed in &plan.seeds {
            for (acc, slot) in kshot_run(plan, seed, k)?.into_iter().zip(&mut per_dir) {
                slot.push(acc);
            }
        }
        for (dir, accuracies) in plan.directions.iter().zip(per_dir) {
            let (mean, sd) = mean_sd(&accuracies);
            rows.push(KShotRow {
                k,
                direction: dir.label(),
                accuracies,
                mean,
                sd,
            });
        }
    }
    Ok(rows)
}
