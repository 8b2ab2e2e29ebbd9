//! Synthetic paired embeddings standing in for frozen encoders, k-shot
//! splitting, and pairing helpers.
//!
//! Class `c` has a latent center `μ_c ~ N(0, I)`. Modality `m` owns a fixed
//! Glorot map `A_m` and emits `tanh(μ_c · A_m) + N(0, σ_m²)` for every
//! instance of class `c`. Instance `i` is the same row index in every
//! modality; only the noise differs between modalities.

pub mod format;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpanerError};
use crate::model::train::PairedData;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use format::{read_embeddings, write_embeddings};

/// Longest modality tag the embedding file can carry.
pub const MAX_TAG_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySpec {
    pub tag: String,
    pub dim: usize,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub latent_dim: usize,
    pub instances_per_class: usize,
    pub modalities: Vec<ModalitySpec>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let m = |tag: &str, dim| ModalitySpec {
            tag: tag.into(),
            dim,
            noise: 0.05,
        };
        Self {
            classes: 10,
            latent_dim: 16,
            instances_per_class: 20,
            modalities: vec![m("vision", 32), m("text", 32), m("audio", 48)],
            seed: 0,
        }
    }
}

pub fn validate_tag(tag: &str) -> Result<()> {
    if tag.is_empty() || tag.len() > MAX_TAG_BYTES || tag.contains('\0') || tag.contains('/') {
        return Err(SpanerError::Config(format!(
            "modality tag {tag:?} must be 1..={MAX_TAG_BYTES} bytes without NUL or '/'"
        )));
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: String, why: &str| Err(SpanerError::Config(format!("{field}: {why}")));
        if self.classes < 2 {
            return bad("classes".into(), "must be at least 2");
        }
        if self.latent_dim < 2 {
            return bad("latent_dim".into(), "must be at least 2");
        }
        if self.instances_per_class == 0 {
            return bad("instances_per_class".into(), "must be at least 1");
        }
        if self.modalities.is_empty() {
            return bad("modalities".into(), "at least one modality is required");
        }
        let mut seen = BTreeSet::new();
        for (i, m) in self.modalities.iter().enumerate() {
            validate_tag(&m.tag)?;
            if !seen.insert(&m.tag) {
                return bad(format!("modalities[{i}].tag"), "duplicate tag");
            }
            if m.dim < 2 {
                return bad(format!("modalities[{i}].dim"), "must be at least 2");
            }
            if !(m.noise >= 0.0 && m.noise.is_finite()) {
                return bad(format!("modalities[{i}].noise"), "must be finite and ≥ 0");
            }
        }
        Ok(())
    }

    pub fn modality(&self, tag: &str) -> Result<&ModalitySpec> {
        self.modalities
            .iter()
            .find(|m| m.tag == tag)
            .ok_or_else(|| SpanerError::Config(format!("unknown modality {tag:?}")))
    }
}

/// Encoder outputs of one modality with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    pub modality: String,
    pub vectors: Tensor,
    pub class_ids: Vec<usize>,
    pub instance_ids: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledEmbeddings {
    pub fn new(
        modality: &str,
        vectors: Tensor,
        class_ids: Vec<usize>,
        instance_ids: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        validate_tag(modality)?;
        if vectors.shape().len() != 2 {
            return Err(SpanerError::Dimension(format!(
                "embeddings must be N×d, got {:?}",
                vectors.shape()
            )));
        }
        let n = vectors.rows();
        if class_ids.len() != n || instance_ids.len() != n {
            return Err(SpanerError::Data(format!(
                "{n} vectors but {} class ids and {} instance ids",
                class_ids.len(),
                instance_ids.len()
            )));
        }
        if class_names.is_empty() {
            return Err(SpanerError::Data("no class names".into()));
        }
        if let Some(&c) = class_ids.iter().find(|&&c| c >= class_names.len()) {
            return Err(SpanerError::Data(format!(
                "class id {c} outside [0, {})",
                class_names.len()
            )));
        }
        Ok(Self {
            modality: modality.to_string(),
            vectors,
            class_ids,
            instance_ids,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(SpanerError::Data("empty selection".into()));
        }
        Ok(Self {
            modality: self.modality.clone(),
            vectors: self.vectors.select_rows(rows),
            class_ids: rows.iter().map(|&i| self.class_ids[i]).collect(),
            instance_ids: rows.iter().map(|&i| self.instance_ids[i]).collect(),
            class_names: self.class_names.clone(),
        })
    }

    /// Keep the rows whose instance id is in `ids`, in their current order.
    pub fn filter_instances(&self, ids: &BTreeSet<usize>) -> Result<Self> {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| ids.contains(&self.instance_ids[i]))
            .collect();
        self.select(&rows)
    }
}

pub fn class_name(c: usize) -> String {
    format!("class_{c:02}")
}

struct Generator {
    centers: Vec<Vec<f64>>,
    root: Rng,
}

impl Generator {
    fn new(spec: &SyntheticSpec) -> Self {
        let root = Rng::new(spec.seed);
        let mut crng = root.fork_named("centers");
        let centers = (0..spec.classes)
            .map(|_| (0..spec.latent_dim).map(|_| crng.normal(0.0, 1.0)).collect())
            .collect();
        Self { centers, root }
    }

    /// Noise-free `tanh(μ_c · A_m)` for every class.
    fn class_vectors(&self, spec: &SyntheticSpec, m: &ModalitySpec) -> Vec<Vec<f64>> {
        let mut mrng = self.root.fork_named(&format!("map/{}", m.tag));
        let a = (6.0 / (spec.latent_dim + m.dim) as f64).sqrt();
        let map: Vec<f64> = (0..spec.latent_dim * m.dim).map(|_| mrng.uniform(-a, a)).collect();
        self.centers
            .iter()
            .map(|mu| {
                (0..m.dim)
                    .map(|j| {
                        let s: f64 = mu.iter().enumerate().map(|(k, v)| v * map[k * m.dim + j]).sum();
                        s.tanh()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Values are rounded to `f32` so the embedding file format is lossless.
fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// Paired datasets for every modality in `spec`, keyed by tag.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<BTreeMap<String, LabeledEmbeddings>> {
    spec.validate()?;
    let gen = Generator::new(spec);
    let n = spec.classes * spec.instances_per_class;
    let class_ids: Vec<usize> = (0..n).map(|i| i / spec.instances_per_class).collect();
    let instance_ids: Vec<usize> = (0..n).collect();
    let names: Vec<String> = (0..spec.classes).map(class_name).collect();
    let mut out = BTreeMap::new();
    for m in &spec.modalities {
        let clean = gen.class_vectors(spec, m);
        let mut nrng = gen.root.fork_named(&format!("noise/{}", m.tag));
        let mut data = Vec::with_capacity(n * m.dim);
        for &c in &class_ids {
            for &v in &clean[c] {
                data.push(to_f32_precision(v + nrng.normal(0.0, m.noise)));
            }
        }
        let emb = LabeledEmbeddings::new(
            &m.tag,
            Tensor::new(vec![n, m.dim], data)?,
            class_ids.clone(),
            instance_ids.clone(),
            names.clone(),
        )?;
        out.insert(m.tag.clone(), emb);
    }
    Ok(out)
}

/// One noise-free vector per class through modality `tag`'s map: the
/// analog of embedding each class name with that modality's encoder. The
/// result carries `tag` so it is embedded by the same aligner; instance ids
/// equal class ids.
pub fn semantic_modality(spec: &SyntheticSpec, tag: &str) -> Result<LabeledEmbeddings> {
    spec.validate()?;
    let m = spec.modality(tag)?;
    let gen = Generator::new(spec);
    let clean = gen.class_vectors(spec, m);
    let data = clean.into_iter().flatten().map(to_f32_precision).collect();
    LabeledEmbeddings::new(
        tag,
        Tensor::new(vec![spec.classes, m.dim], data)?,
        (0..spec.classes).collect(),
        (0..spec.classes).collect(),
        (0..spec.classes).map(class_name).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct KShotSplit {
    pub support: LabeledEmbeddings,
    pub query: LabeledEmbeddings,
}

/// Instance ids drawn uniformly, `k` per class. Depends only on the
/// (class id, instance id) pairs and `rng`, so paired modalities split
/// identically.
pub fn kshot_support_ids(data: &LabeledEmbeddings, k: usize, rng: &Rng) -> Result<BTreeSet<usize>> {
    if k == 0 {
        return Err(SpanerError::Argument("k must be at least 1".into()));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&c, &id) in data.class_ids.iter().zip(&data.instance_ids) {
        by_class.entry(c).or_default().push(id);
    }
    let mut rng = rng.fork_named("kshot");
    let mut support = BTreeSet::new();
    for c in 0..data.num_classes() {
        let mut ids = by_class.remove(&c).unwrap_or_default();
        if ids.len() <= k {
            return Err(SpanerError::Data(format!(
                "class {} has {} instances, need more than k={k}",
                data.class_names[c],
                ids.len()
            )));
        }
        ids.sort_unstable();
        rng.shuffle(&mut ids);
        support.extend(&ids[..k]);
    }
    Ok(support)
}

pub fn kshot_split(data: &LabeledEmbeddings, k: usize, rng: &Rng) -> Result<KShotSplit> {
    let support_ids = kshot_support_ids(data, k, rng)?;
    let query_ids: BTreeSet<usize> = data
        .instance_ids
        .iter()
        .copied()
        .filter(|id| !support_ids.contains(id))
        .collect();
    Ok(KShotSplit {
        support: data.filter_instances(&support_ids)?,
        query: data.filter_instances(&query_ids)?,
    })
}

/// Split every modality of a paired dataset with the same support ids.
pub fn kshot_split_paired(
    data: &BTreeMap<String, LabeledEmbeddings>,
    k: usize,
    rng: &Rng,
) -> Result<BTreeMap<String, KShotSplit>> {
    let first = data
        .values()
        .next()
        .ok_or_else(|| SpanerError::Data("no modalities to split".into()))?;
    for other in data.values() {
        check_paired(first, other)?;
    }
    let support_ids = kshot_support_ids(first, k, rng)?;
    let query_ids: BTreeSet<usize> = first
        .instance_ids
        .iter()
        .copied()
        .filter(|id| !support_ids.contains(id))
        .collect();
    data.iter()
        .map(|(tag, d)| {
            Ok((
                tag.clone(),
                KShotSplit {
                    support: d.filter_instances(&support_ids)?,
                    query: d.filter_instances(&query_ids)?,
                },
            ))
        })
        .collect()
}

/// Both datasets hold exactly one row per instance id, with matching classes.
pub fn check_paired(a: &LabeledEmbeddings, b: &LabeledEmbeddings) -> Result<()> {
    let index = |d: &LabeledEmbeddings| -> Result<BTreeMap<usize, usize>> {
        let mut m = BTreeMap::new();
        for (&id, &c) in d.instance_ids.iter().zip(&d.class_ids) {
            if m.insert(id, c).is_some() {
                return Err(SpanerError::Data(format!(
                    "instance {id} appears twice in {}",
                    d.modality
                )));
            }
        }
        Ok(m)
    };
    let (ia, ib) = (index(a)?, index(b)?);
    if ia != ib {
        return Err(SpanerError::Data(format!(
            "{} and {} are not paired by instance id and class",
            a.modality, b.modality
        )));
    }
    Ok(())
}

/// Row-aligned training pairs; `b` is reordered to follow `a`'s instance order.
pub fn pair(a: &LabeledEmbeddings, b: &LabeledEmbeddings) -> Result<PairedData> {
    check_paired(a, b)?;
    let pos: BTreeMap<usize, usize> = b
        .instance_ids
        .iter()
        .enumerate()
        .map(|(row, &id)| (id, row))
        .collect();
    let order: Vec<usize> = a.instance_ids.iter().map(|id| pos[id]).collect();
    PairedData::new(&a.modality, a.vectors.clone(), &b.modality, b.vectors.select_rows(&order))
}
