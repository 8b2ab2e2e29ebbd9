//! Dense row-major `f64` tensors and the handful of differentiable
//! operations the aligner needs. Each forward op has a matching `*_backward`
//! that maps an output gradient to input gradients.

use crate::error::{Result, SpanerError};

/// Default guard used by [`row_normalize`].
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return Err(SpanerError::Dimension(format!(
                "shape {shape:?} has a zero-sized axis"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(SpanerError::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Build a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(SpanerError::Dimension("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading axis length.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all trailing axes.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(SpanerError::Dimension(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Rows `idx` gathered in order into a new tensor.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor { shape, data }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c, r],
            data: out,
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_2d(t: &Tensor, name: &str) -> Result<()> {
    if t.shape.len() != 2 {
        return Err(SpanerError::Dimension(format!(
            "{name} must be 2-D, got shape {:?}",
            t.shape
        )));
    }
    Ok(())
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_2d(a, "lhs")?;
    check_2d(b, "rhs")?;
    if a.shape[1] != b.shape[0] {
        return Err(SpanerError::Dimension(format!(
            "matmul inner dimensions disagree: {:?} · {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// Gradients of `a · b` given `d(a·b)`: returns `(dout · bᵀ, aᵀ · dout)`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dout: &Tensor) -> Result<(Tensor, Tensor)> {
    let da = matmul(dout, &b.transpose())?;
    let db = matmul(&a.transpose(), dout)?;
    Ok((da, db))
}

/// Divide each row by `max(‖row‖₂, eps)`.
pub fn row_normalize(z: &Tensor, eps: f64) -> Tensor {
    let mut out = z.clone();
    for i in 0..z.rows() {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
        row.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

pub fn row_normalize_backward(z: &Tensor, eps: f64, dy: &Tensor) -> Tensor {
    let mut dz = dy.clone();
    for i in 0..z.rows() {
        let x = z.row(i);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g = dz.row_mut(i);
        if norm > eps {
            // y = x/‖x‖ ⇒ dx = (dy − y(y·dy)) / ‖x‖
            let ydot: f64 = x.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>() / norm;
            for (gj, &xj) in g.iter_mut().zip(x) {
                *gj = (*gj - xj / norm * ydot) / norm;
            }
        } else {
            g.iter_mut().for_each(|v| *v /= eps);
        }
    }
    dz
}

fn check_targets(logits: &Tensor, targets: &[usize]) -> Result<()> {
    check_2d(logits, "logits")?;
    if targets.len() != logits.rows() {
        return Err(SpanerError::Dimension(format!(
            "{} targets for {} logit rows",
            targets.len(),
            logits.rows()
        )));
    }
    let c = logits.cols();
    if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= c) {
        return Err(SpanerError::Index(format!(
            "target {t} at row {i} outside [0, {c})"
        )));
    }
    Ok(())
}

/// Mean over rows of `−log softmax(row)[target]`, plus `d loss / d logits`.
pub fn softmax_cross_entropy_rows_grad(
    logits: &Tensor,
    targets: &[usize],
) -> Result<(f64, Tensor)> {
    check_targets(logits, targets)?;
    let (r, c) = (logits.rows(), logits.cols());
    let mut grad = vec![0.0; r * c];
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[t];
        let g = &mut grad[i * c..(i + 1) * c];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() / r as f64;
        }
        g[t] -= 1.0 / r as f64;
    }
    Ok((
        total / r as f64,
        Tensor {
            shape: vec![r, c],
            data: grad,
        },
    ))
}

pub fn softmax_cross_entropy_rows(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    softmax_cross_entropy_rows_grad(logits, targets).map(|(l, _)| l)
}

/// Row-wise softmax of a 2-D tensor.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Backward of [`softmax_rows`] given its output `p`.
pub fn softmax_rows_backward(p: &Tensor, dp: &Tensor) -> Tensor {
    let mut dx = dp.clone();
    for i in 0..p.rows() {
        let pr = p.row(i);
        let dot: f64 = pr.iter().zip(dp.row(i)).map(|(a, b)| a * b).sum();
        for (g, &pv) in dx.row_mut(i).iter_mut().zip(pr) {
            *g = pv * (*g - dot);
        }
    }
    dx
}

/// Per-coordinate maximum over the token axis of `seq: T×d`.
///
/// Returns the pooled vector and, per coordinate, the winning token index
/// (lowest index on ties).
pub fn elementwise_max_over_tokens(seq: &Tensor) -> Result<(Vec<f64>, Vec<usize>)> {
    if seq.shape.is_empty() || seq.is_empty() {
        return Err(SpanerError::Dimension("max-pool over an empty sequence".into()));
    }
    let d = seq.cols();
    let mut best = seq.row(0).to_vec();
    let mut arg = vec![0usize; d];
    for t in 1..seq.rows() {
        for (j, &v) in seq.row(t).iter().enumerate() {
            if v > best[j] {
                best[j] = v;
                arg[j] = t;
            }
        }
    }
    Ok((best, arg))
}

/// Route `dpool` to the winning tokens; returns a `T×d` gradient.
pub fn max_over_tokens_backward(tokens: usize, argmax: &[usize], dpool: &[f64]) -> Tensor {
    let d = argmax.len();
    let mut out = Tensor::zeros(&[tokens, d]);
    for (j, (&t, &g)) in argmax.iter().zip(dpool).enumerate() {
        out.data[t * d + j] += g;
    }
    out
}

/// Cached statistics of a row-wise layer normalization.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `gain ⊙ (x − mean) / sqrt(var + eps) + bias`, per row.
pub fn layer_norm(x: &Tensor, gain: &[f64], bias: &[f64]) -> (Tensor, LayerNormCache) {
    let d = x.cols();
    let mut normalized = x.clone();
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(r);
        let nrow = normalized.row_mut(i);
        for (n, &v) in nrow.iter_mut().zip(row) {
            *n = (v - mean) * r;
        }
        let nrow = normalized.row(i).to_vec();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = gain[j] * nrow[j] + bias[j];
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    dout: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let d = dout.cols();
    let mut dx = dout.clone();
    let mut dgain = vec![0.0; d];
    let mut dbias = vec![0.0; d];
    for i in 0..dout.rows() {
        let xhat = cache.normalized.row(i);
        let g = dout.row(i);
        let mut dxhat = vec![0.0; d];
        for j in 0..d {
            dgain[j] += g[j] * xhat[j];
            dbias[j] += g[j];
            dxhat[j] = g[j] * gain[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let r = cache.inv_std[i];
        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
            *o = r * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
    }
    (dx, dgain, dbias)
}
