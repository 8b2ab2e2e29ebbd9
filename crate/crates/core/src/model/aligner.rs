//! Cross-attention aligner: one pre-norm multi-head self-attention block with
//! a residual connection, applied to `[x_b; s_1; …; s_n]` for every sample.

use crate::error::{Result, SpanerError};
use crate::param::Parameter;
use crate::rng::Rng;
use crate::tensor::{
    layer_norm, layer_norm_backward, matmul, matmul_backward, softmax_rows,
    softmax_rows_backward, LayerNormCache, Tensor,
};

use super::glorot;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionAligner {
    pub heads: usize,
    pub query: Parameter,
    pub key: Parameter,
    pub value: Parameter,
    pub output: Parameter,
    pub norm_gain: Parameter,
    pub norm_bias: Parameter,
}

/// Intermediate values of one sample's forward pass.
#[derive(Debug, Clone)]
pub struct SampleCache {
    ln: LayerNormCache,
    normed: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Vec<Tensor>,
    mixed: Tensor,
}

impl CrossAttentionAligner {
    pub fn new(width: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(SpanerError::Config(format!(
                "width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            query: Parameter::new(glorot(width, width, rng)),
            key: Parameter::new(glorot(width, width, rng)),
            value: Parameter::new(glorot(width, width, rng)),
            output: Parameter::new(glorot(width, width, rng)),
            norm_gain: Parameter::new(Tensor::filled(&[width], 1.0)),
            norm_bias: Parameter::new(Tensor::zeros(&[width])),
        })
    }

    pub fn width(&self) -> usize {
        self.query.shape()[0]
    }

    fn head_dim(&self) -> usize {
        self.width() / self.heads
    }

    pub(crate) fn named_parameters(&self) -> [(&'static str, &Parameter); 6] {
        [
            ("query", &self.query),
            ("key", &self.key),
            ("value", &self.value),
            ("output", &self.output),
            ("norm_gain", &self.norm_gain),
            ("norm_bias", &self.norm_bias),
        ]
    }

    pub(crate) fn named_parameters_mut(&mut self) -> [(&'static str, &mut Parameter); 6] {
        [
            ("query", &mut self.query),
            ("key", &mut self.key),
            ("value", &mut self.value),
            ("output", &mut self.output),
            ("norm_gain", &mut self.norm_gain),
            ("norm_bias", &mut self.norm_bias),
        ]
    }

    /// Attention over one token sequence `T×d`; returns `tokens + attn(LN(tokens))`.
    pub fn forward_tokens(&self, tokens: &Tensor) -> Result<(Tensor, SampleCache)> {
        let (normed, ln) = layer_norm(
            tokens,
            self.norm_gain.value.data(),
            self.norm_bias.value.data(),
        );
        let q = matmul(&normed, &self.query.value)?;
        let k = matmul(&normed, &self.key.value)?;
        let v = matmul(&normed, &self.value.value)?;
        let t = tokens.rows();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut mixed = Tensor::zeros(&[t, self.width()]);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let mut scores = Tensor::zeros(&[t, t]);
            for i in 0..t {
                for j in 0..t {
                    let s: f64 = q.row(i)[cols.clone()]
                        .iter()
                        .zip(&k.row(j)[cols.clone()])
                        .map(|(a, b)| a * b)
                        .sum();
                    scores.data_mut()[i * t + j] = s * scale;
                }
            }
            let p = softmax_rows(&scores);
            for i in 0..t {
                for j in 0..t {
                    let w = p.at(i, j);
                    let vrow = &v.row(j)[cols.clone()];
                    let out = &mut mixed.row_mut(i)[cols.clone()];
                    for (o, &vv) in out.iter_mut().zip(vrow) {
                        *o += w * vv;
                    }
                }
            }
            probs.push(p);
        }
        let mut out = matmul(&mixed, &self.output.value)?;
        out.add_assign(tokens);
        Ok((
            out,
            SampleCache {
                ln,
                normed,
                q,
                k,
                v,
                probs,
                mixed,
            },
        ))
    }

    /// Accumulate parameter gradients for one sample and return `d tokens`.
    pub fn backward_tokens(&mut self, cache: &SampleCache, dout: &Tensor) -> Result<Tensor> {
        let t = dout.rows();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let (dmixed, dwo) = matmul_backward(&cache.mixed, &self.output.value, dout)?;
        self.output.accumulate(dwo.data());

        let mut dq = Tensor::zeros(cache.q.shape());
        let mut dk = Tensor::zeros(cache.k.shape());
        let mut dv = Tensor::zeros(cache.v.shape());
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = h * dh..(h + 1) * dh;
            let mut dp = Tensor::zeros(&[t, t]);
            for i in 0..t {
                let dm = &dmixed.row(i)[cols.clone()];
                for j in 0..t {
                    let vrow = &cache.v.row(j)[cols.clone()];
                    dp.data_mut()[i * t + j] = dm.iter().zip(vrow).map(|(a, b)| a * b).sum();
                    let w = p.at(i, j);
                    for (g, &m) in dv.row_mut(j)[cols.clone()].iter_mut().zip(dm) {
                        *g += w * m;
                    }
                }
            }
            let ds = softmax_rows_backward(p, &dp);
            for i in 0..t {
                for j in 0..t {
                    let g = ds.at(i, j) * scale;
                    if g == 0.0 {
                        continue;
                    }
                    for c in cols.clone() {
                        dq.row_mut(i)[c] += g * cache.k.row(j)[c];
                        dk.row_mut(j)[c] += g * cache.q.row(i)[c];
                    }
                }
            }
        }

        let (mut dnormed, dwq) = matmul_backward(&cache.normed, &self.query.value, &dq)?;
        let (dn_k, dwk) = matmul_backward(&cache.normed, &self.key.value, &dk)?;
        let (dn_v, dwv) = matmul_backward(&cache.normed, &self.value.value, &dv)?;
        self.query.accumulate(dwq.data());
        self.key.accumulate(dwk.data());
        self.value.accumulate(dwv.data());
        dnormed.add_assign(&dn_k);
        dnormed.add_assign(&dn_v);

        let (mut dtokens, dgain, dbias) =
            layer_norm_backward(&cache.ln, self.norm_gain.value.data(), &dnormed);
        self.norm_gain.accumulate(&dgain);
        self.norm_bias.accumulate(&dbias);
        dtokens.add_assign(dout);
        Ok(dtokens)
    }
}

/// Token sequence `[x_b; s_1; …; s_n]` for one sample.
pub(crate) fn token_sequence(x_row: &[f64], prompt: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(x_row.len() * (1 + prompt.rows()));
    data.extend_from_slice(x_row);
    data.extend_from_slice(prompt.data());
    Tensor::new(vec![1 + prompt.rows(), x_row.len()], data).expect("consistent widths")
}
