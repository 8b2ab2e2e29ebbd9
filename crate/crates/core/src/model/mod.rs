//! Shared-prompt aligner model.
//!
//! Every registered modality owns an optional dim adapter, a
//! [`CrossAttentionAligner`] and a [`ProjectionHead`]. All modalities read
//! the same [`SharedPrompt`]. For an input batch `x` (after the adapter):
//!
//! - `z` is the per-coordinate max over the aligner outputs of
//!   `[x_b; s_1; …; s_n]`,
//! - `f` is the projection of `x` itself.

pub mod aligner;
pub mod checkpoint;
pub mod optim;
pub mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contrastive::ContrastiveConfig;
use crate::error::{Result, SpanerError};
use crate::param::Parameter;
use crate::rng::Rng;
use crate::tensor::{
    elementwise_max_over_tokens, matmul, matmul_backward, max_over_tokens_backward, Tensor,
};

pub use aligner::CrossAttentionAligner;
use aligner::{token_sequence, SampleCache};

/// Glorot-uniform `fan_in × fan_out` matrix.
pub(crate) fn glorot(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.uniform(-a, a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("positive dims")
}

pub const PROMPT_INIT_STD: f64 = 0.02;

/// `n` learnable prompt tokens of width `d`, shared by every modality.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedPrompt {
    pub tokens: Parameter,
}

impl SharedPrompt {
    pub fn len(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.tokens.shape()[1]
    }
}

/// Affine map `d → d_proj`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl ProjectionHead {
    pub fn new(width: usize, proj_dim: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Parameter::new(glorot(width, proj_dim, rng)),
            bias: Parameter::new(Tensor::zeros(&[proj_dim])),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = matmul(x, &self.weight.value)?;
        let b = self.bias.value.data();
        for i in 0..out.rows() {
            for (o, bv) in out.row_mut(i).iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients, returns `d x`.
    fn backward(&mut self, x: &Tensor, dout: &Tensor) -> Result<Tensor> {
        let (dx, dw) = matmul_backward(x, &self.weight.value, dout)?;
        self.weight.accumulate(dw.data());
        let mut db = vec![0.0; dout.cols()];
        for i in 0..dout.rows() {
            for (a, g) in db.iter_mut().zip(dout.row(i)) {
                *a += g;
            }
        }
        self.bias.accumulate(&db);
        Ok(dx)
    }
}

/// Everything one modality owns.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBranch {
    pub input_dim: usize,
    /// `input_dim × d` linear map, present iff `input_dim != d`.
    pub adapter: Option<Parameter>,
    pub aligner: CrossAttentionAligner,
    pub projection: ProjectionHead,
}

impl ModalityBranch {
    pub fn new(input_dim: usize, width: usize, heads: usize, proj_dim: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 {
            return Err(SpanerError::Config("modality input dim must be ≥ 1".into()));
        }
        let adapter = (input_dim != width).then(|| Parameter::new(glorot(input_dim, width, rng)));
        let aligner = CrossAttentionAligner::new(width, heads, rng)?;
        let projection = ProjectionHead::new(width, proj_dim, rng);
        Ok(Self {
            input_dim,
            adapter,
            aligner,
            projection,
        })
    }

    fn named_parameters(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::with_capacity(9);
        if let Some(a) = &self.adapter {
            out.push(("adapter".to_string(), a));
        }
        for (n, p) in self.aligner.named_parameters() {
            out.push((format!("aligner.{n}"), p));
        }
        out.push(("proj.weight".to_string(), &self.projection.weight));
        out.push(("proj.bias".to_string(), &self.projection.bias));
        out
    }

    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = Vec::with_capacity(9);
        if let Some(a) = &mut self.adapter {
            out.push(("adapter".to_string(), a));
        }
        for (n, p) in self.aligner.named_parameters_mut() {
            out.push((format!("aligner.{n}"), p));
        }
        out.push(("proj.weight".to_string(), &mut self.projection.weight));
        out.push(("proj.bias".to_string(), &mut self.projection.bias));
        out
    }

    fn all_frozen(&self) -> bool {
        self.named_parameters().iter().all(|(_, p)| p.frozen)
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for (_, p) in self.named_parameters_mut() {
            p.frozen = frozen;
        }
    }

    /// Apply the dim adapter, if any.
    pub fn adapt(&self, x_raw: &Tensor) -> Result<Tensor> {
        if x_raw.shape().len() != 2 || x_raw.cols() != self.input_dim {
            return Err(SpanerError::Dimension(format!(
                "modality expects rows of width {}, got shape {:?}",
                self.input_dim,
                x_raw.shape()
            )));
        }
        match &self.adapter {
            Some(a) => matmul(x_raw, &a.value),
            None => Ok(x_raw.clone()),
        }
    }
}

/// Hyperparameters of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lambda: f64,
    pub temperature: f64,
    pub symmetric: bool,
    pub prompt_tokens: usize,
    pub heads: usize,
    pub width: usize,
    pub proj_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            lambda: 1.0,
            temperature: 1.0,
            symmetric: false,
            prompt_tokens: 4,
            heads: 2,
            width: 32,
            proj_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            temperature: self.temperature,
            symmetric: self.symmetric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(SpanerError::Config(format!("{field}: {why}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size", "must be at least 2");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be finite and non-negative");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be positive");
        }
        if self.prompt_tokens == 0 {
            return bad("prompt_tokens", "must be at least 1");
        }
        if self.heads == 0 || self.width == 0 || self.width % self.heads != 0 {
            return bad("heads", "width must be a positive multiple of heads");
        }
        if self.proj_dim == 0 {
            return bad("proj_dim", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanerModel {
    pub width: usize,
    pub heads: usize,
    pub proj_dim: usize,
    pub lambda: f64,
    pub loss_cfg: ContrastiveConfig,
    pub prompt: SharedPrompt,
    pub branches: BTreeMap<String, ModalityBranch>,
}

/// Create a model for the given `(tag, input_dim)` modalities.
pub fn init_model(cfg: &TrainConfig, modalities: &[(&str, usize)], rng: &Rng) -> Result<SpanerModel> {
    cfg.validate()?;
    if modalities.len() < 2 {
        return Err(SpanerError::Config("at least two modalities are required".into()));
    }
    let mut prng = rng.fork_named("prompt");
    let prompt_data = (0..cfg.prompt_tokens * cfg.width)
        .map(|_| prng.normal(0.0, PROMPT_INIT_STD))
        .collect();
    let mut model = SpanerModel {
        width: cfg.width,
        heads: cfg.heads,
        proj_dim: cfg.proj_dim,
        lambda: cfg.lambda,
        loss_cfg: cfg.loss_config(),
        prompt: SharedPrompt {
            tokens: Parameter::new(Tensor::new(vec![cfg.prompt_tokens, cfg.width], prompt_data)?),
        },
        branches: BTreeMap::new(),
    };
    for &(tag, dim) in modalities {
        model.register(tag, dim, rng)?;
    }
    Ok(model)
}

/// Per-sample intermediates of one modality's forward pass.
#[derive(Debug, Clone)]
pub struct BranchCache {
    x_raw: Tensor,
    pub x: Tensor,
    samples: Vec<SampleCache>,
    argmax: Vec<Vec<usize>>,
    pub z: Tensor,
    pub f: Tensor,
}

impl SpanerModel {
    /// Add a freshly initialized modality branch.
    pub fn register(&mut self, tag: &str, input_dim: usize, rng: &Rng) -> Result<()> {
        if tag.is_empty() || tag.contains('/') {
            return Err(SpanerError::Config(format!("invalid modality tag {tag:?}")));
        }
        if self.branches.contains_key(tag) {
            return Err(SpanerError::Config(format!("duplicate modality tag {tag:?}")));
        }
        let mut brng = rng.fork_named(tag);
        let branch = ModalityBranch::new(input_dim, self.width, self.heads, self.proj_dim, &mut brng)?;
        self.branches.insert(tag.to_string(), branch);
        Ok(())
    }

    pub fn branch(&self, tag: &str) -> Result<&ModalityBranch> {
        self.branches
            .get(tag)
            .ok_or_else(|| SpanerError::Config(format!("unknown modality {tag:?}")))
    }

    pub fn branch_mut(&mut self, tag: &str) -> Result<&mut ModalityBranch> {
        self.branches
            .get_mut(tag)
            .ok_or_else(|| SpanerError::Config(format!("unknown modality {tag:?}")))
    }

    pub fn modalities(&self) -> Vec<(String, usize)> {
        self.branches
            .iter()
            .map(|(t, b)| (t.clone(), b.input_dim))
            .collect()
    }

    /// All parameters under stable dotted names, e.g. `prompt`,
    /// `vision.aligner.query`, `audio.adapter`.
    pub fn parameters(&self) -> Vec<(String, &Parameter)> {
        let mut out = vec![("prompt".to_string(), &self.prompt.tokens)];
        for (tag, b) in &self.branches {
            for (n, p) in b.named_parameters() {
                out.push((format!("{tag}.{n}"), p));
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = vec![("prompt".to_string(), &mut self.prompt.tokens)];
        for (tag, b) in &mut self.branches {
            for (n, p) in b.named_parameters_mut() {
                out.push((format!("{tag}.{n}"), p));
            }
        }
        out
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters().into_iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.parameters_mut().into_iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn set_all_frozen(&mut self, frozen: bool) {
        for (_, p) in self.parameters_mut() {
            p.frozen = frozen;
        }
    }

    /// Run one modality through adapter, aligner, pooling and projection,
    /// keeping what the backward pass needs.
    pub fn forward_branch(&self, tag: &str, x_raw: &Tensor) -> Result<BranchCache> {
        let branch = self.branch(tag)?;
        let x = branch.adapt(x_raw)?;
        let b = x.rows();
        let prompt = &self.prompt.tokens.value;
        let mut samples = Vec::with_capacity(b);
        let mut argmax = Vec::with_capacity(b);
        let mut z = Tensor::zeros(&[b, self.width]);
        for i in 0..b {
            let seq = token_sequence(x.row(i), prompt);
            let (out, cache) = branch.aligner.forward_tokens(&seq)?;
            let (pooled, arg) = elementwise_max_over_tokens(&out)?;
            z.row_mut(i).copy_from_slice(&pooled);
            samples.push(cache);
            argmax.push(arg);
        }
        let f = branch.projection.forward(&x)?;
        Ok(BranchCache {
            x_raw: x_raw.clone(),
            x,
            samples,
            argmax,
            z,
            f,
        })
    }

    /// Accumulate gradients of one branch given `∂L/∂z` and `∂L/∂f`.
    pub fn backward_branch(&mut self, tag: &str, cache: &BranchCache, dz: &Tensor, df: &Tensor) -> Result<()> {
        if self.prompt.tokens.frozen && self.branch(tag)?.all_frozen() {
            return Ok(());
        }
        let n = self.prompt.len();
        let width = self.width;
        let branch = self
            .branches
            .get_mut(tag)
            .ok_or_else(|| SpanerError::Config(format!("unknown modality {tag:?}")))?;
        let mut dx = branch.projection.backward(&cache.x, df)?;
        let mut dprompt = vec![0.0; n * width];
        for (i, (sample, arg)) in cache.samples.iter().zip(&cache.argmax).enumerate() {
            let dtokens = max_over_tokens_backward(1 + n, arg, dz.row(i));
            let dseq = branch.aligner.backward_tokens(sample, &dtokens)?;
            for (a, g) in dx.row_mut(i).iter_mut().zip(dseq.row(0)) {
                *a += g;
            }
            for (a, g) in dprompt.iter_mut().zip(&dseq.data()[width..]) {
                *a += g;
            }
        }
        if let Some(adapter) = &mut branch.adapter {
            let dw = matmul(&cache.x_raw.transpose(), &dx)?;
            adapter.accumulate(dw.data());
        }
        self.prompt.tokens.accumulate(&dprompt);
        Ok(())
    }

    /// `(z, f)` for every modality in `batch`.
    pub fn forward(&self, batch: &BTreeMap<String, Tensor>) -> Result<BTreeMap<String, (Tensor, Tensor)>> {
        let mut rows = None;
        let mut out = BTreeMap::new();
        for (tag, x) in batch {
            let b = x.rows();
            if *rows.get_or_insert(b) != b {
                return Err(SpanerError::Dimension(format!(
                    "modality {tag:?} has {b} rows, expected {}",
                    rows.unwrap()
                )));
            }
            let c = self.forward_branch(tag, x)?;
            out.insert(tag.clone(), (c.z, c.f));
        }
        Ok(out)
    }
}

/// Aligner outputs for a batch: `x'` (B×d) and `S'` (B×n×d).
pub fn aligner_forward(
    aligner: &CrossAttentionAligner,
    prompt: &SharedPrompt,
    x: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let d = aligner.width();
    if x.shape().len() != 2 || x.cols() != d || prompt.width() != d {
        return Err(SpanerError::Dimension(format!(
            "aligner width {d}, input {:?}, prompt {:?}",
            x.shape(),
            prompt.tokens.shape()
        )));
    }
    let (b, n) = (x.rows(), prompt.len());
    let mut x_out = Tensor::zeros(&[b, d]);
    let mut s_out = Vec::with_capacity(b * n * d);
    for i in 0..b {
        let (out, _) = aligner.forward_tokens(&token_sequence(x.row(i), &prompt.tokens.value))?;
        x_out.row_mut(i).copy_from_slice(out.row(0));
        s_out.extend_from_slice(&out.data()[d..]);
    }
    Ok((x_out, Tensor::new(vec![b, n, d], s_out)?))
}

/// Per-sample max over `{x'_b, S'_b,1 … S'_b,n}`.
pub fn pooled_embedding(x_prime: &Tensor, s_prime: &Tensor) -> Result<Tensor> {
    let (b, d) = (x_prime.rows(), x_prime.cols());
    if s_prime.shape().len() != 3 || s_prime.shape()[0] != b || s_prime.shape()[2] != d {
        return Err(SpanerError::Dimension(format!(
            "pool over x' {:?} and S' {:?}",
            x_prime.shape(),
            s_prime.shape()
        )));
    }
    let mut z = Tensor::zeros(&[b, d]);
    for i in 0..b {
        let seq = token_sequence(x_prime.row(i), &Tensor::new(s_prime.shape()[1..].to_vec(), s_prime.row(i).to_vec())?);
        let (pooled, _) = elementwise_max_over_tokens(&seq)?;
        z.row_mut(i).copy_from_slice(&pooled);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(width: usize, n: usize, h: usize) -> TrainConfig {
        TrainConfig {
            width,
            prompt_tokens: n,
            heads: h,
            proj_dim: width,
            ..TrainConfig::default()
        }
    }

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn zero_attention(a: &mut CrossAttentionAligner) {
        let d = a.width();
        for p in [&mut a.query, &mut a.key, &mut a.value, &mut a.output] {
            p.value = Tensor::zeros(&[d, d]);
        }
    }

    #[test]
    fn adapters_only_where_dims_differ() {
        let m = init_model(&cfg(64, 4, 2), &[("a", 64), ("b", 64)], &Rng::new(0)).unwrap();
        assert!(m.branches.values().all(|b| b.adapter.is_none()));
        let m = init_model(&cfg(64, 4, 2), &[("a", 64), ("b", 128)], &Rng::new(0)).unwrap();
        assert!(m.branch("a").unwrap().adapter.is_none());
        assert_eq!(m.branch("b").unwrap().adapter.as_ref().unwrap().shape(), &[128, 64]);
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let a = init_model(&cfg(8, 2, 2), &[("a", 8), ("b", 12)], &Rng::new(9)).unwrap();
        let b = init_model(&cfg(8, 2, 2), &[("a", 8), ("b", 12)], &Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let c = init_model(&cfg(8, 2, 2), &[("a", 8), ("b", 12)], &Rng::new(10)).unwrap();
        assert_ne!(a, c);
        assert!(matches!(
            init_model(&cfg(8, 2, 2), &[("a", 8), ("a", 8)], &Rng::new(0)),
            Err(SpanerError::Config(_))
        ));
        assert!(init_model(&cfg(8, 2, 2), &[("a", 8)], &Rng::new(0)).is_err());
        assert!(init_model(&cfg(8, 2, 3), &[("a", 8), ("b", 8)], &Rng::new(0)).is_err());
    }

    #[test]
    fn prompt_init_scale() {
        let m = init_model(&cfg(32, 64, 2), &[("a", 32), ("b", 32)], &Rng::new(1)).unwrap();
        let v = m.prompt.tokens.value.data();
        let std = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        assert!((std - PROMPT_INIT_STD).abs() < 0.002, "{std}");
    }

    #[test]
    fn zero_attention_passes_inputs_and_prompt_through() {
        let mut rng = Rng::new(2);
        let mut m = init_model(&cfg(4, 1, 1), &[("a", 4), ("b", 4)], &rng).unwrap();
        zero_attention(&mut m.branch_mut("a").unwrap().aligner);
        let x = random(&[3, 4], &mut rng);
        let (xp, sp) = aligner_forward(&m.branch("a").unwrap().aligner, &m.prompt, &x).unwrap();
        assert_eq!(xp, x);
        for b in 0..3 {
            assert_eq!(sp.row(b), m.prompt.tokens.value.data());
        }
    }

    #[test]
    fn aligner_shapes_and_batch_independence() {
        let mut rng = Rng::new(3);
        let m = init_model(&cfg(8, 3, 2), &[("a", 8), ("b", 8)], &rng).unwrap();
        let x = random(&[4, 8], &mut rng);
        let al = &m.branch("a").unwrap().aligner;
        let (xp, sp) = aligner_forward(al, &m.prompt, &x).unwrap();
        assert_eq!(xp.shape(), &[4, 8]);
        assert_eq!(sp.shape(), &[4, 3, 8]);
        let perm = [2, 0, 3, 1];
        let (xq, _) = aligner_forward(al, &m.prompt, &x.select_rows(&perm)).unwrap();
        assert_eq!(xq, xp.select_rows(&perm));
        assert!(aligner_forward(al, &m.prompt, &random(&[2, 6], &mut rng)).is_err());
    }

    #[test]
    fn pooling_examples() {
        let xp = Tensor::from_rows(&[vec![1.0, 5.0]]).unwrap();
        let sp = Tensor::new(vec![1, 1, 2], vec![3.0, 2.0]).unwrap();
        assert_eq!(pooled_embedding(&xp, &sp).unwrap().row(0), &[3.0, 5.0]);
        // pool with a token dominated everywhere by x'
        let low = Tensor::new(vec![1, 1, 2], vec![-9.0, -9.0]).unwrap();
        assert_eq!(pooled_embedding(&xp, &low).unwrap(), xp);
        // adding a coordinate-wise smaller token leaves z unchanged
        let more = Tensor::new(vec![1, 2, 2], vec![3.0, 2.0, 0.0, 1.0]).unwrap();
        assert_eq!(pooled_embedding(&xp, &more).unwrap().row(0), &[3.0, 5.0]);
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let mut rng = Rng::new(4);
        let m = init_model(&cfg(8, 2, 2), &[("a", 8), ("b", 8)], &rng).unwrap();
        let mut batch = BTreeMap::new();
        batch.insert("a".to_string(), random(&[4, 8], &mut rng));
        batch.insert("b".to_string(), random(&[4, 8], &mut rng));
        let out = m.forward(&batch).unwrap();
        assert_eq!(out.len(), 2);
        for (z, f) in out.values() {
            assert_eq!(z.shape(), &[4, 8]);
            assert_eq!(f.shape(), &[4, 8]);
        }
        assert_eq!(out, m.forward(&batch).unwrap());
        batch.insert("c".to_string(), random(&[4, 8], &mut rng));
        assert!(matches!(m.forward(&batch), Err(SpanerError::Config(_))));
    }

    #[test]
    fn zero_attention_forward_traces_to_adapter_output() {
        // Zero attention weights make each aligner the identity, so z is the
        // max of the adapter output and the raw prompt tokens. With prompt
        // tokens below every feature value, z is exactly the adapter output.
        let mut rng = Rng::new(5);
        let mut m = init_model(&cfg(4, 2, 2), &[("a", 4), ("b", 6)], &rng).unwrap();
        for b in m.branches.values_mut() {
            zero_attention(&mut b.aligner);
        }
        m.prompt.tokens.value = Tensor::filled(&[2, 4], -100.0);
        m.set_all_frozen(true);
        let xb = random(&[3, 6], &mut rng);
        let c = m.forward_branch("b", &xb).unwrap();
        let adapted = matmul(&xb, &m.branch("b").unwrap().adapter.as_ref().unwrap().value).unwrap();
        assert_eq!(c.z, adapted);
        assert_eq!(c.x, adapted);
    }
}
