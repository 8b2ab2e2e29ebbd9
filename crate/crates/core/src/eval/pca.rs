//! Two-component PCA by power iteration with deflation.

use crate::error::{Result, SpanerError};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 1000;
/// Second eigenvalue below this fraction of total variance counts as rank < 2.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `N×2` scores on the two leading principal directions.
    pub coords: Tensor,
    pub components: [Vec<f64>; 2],
    pub variances: [f64; 2],
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// First loading with non-negligible magnitude made positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(&x) = v.iter().find(|x| x.abs() > 1e-12) {
        if x < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Leading eigenpair of symmetric `cov`, kept orthogonal to `against`.
fn power_iteration(cov: &[f64], d: usize, against: Option<&[f64]>) -> (Vec<f64>, f64) {
    let mut rng = Rng::new(0x5eed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 1.0)).collect();
    let orth = |v: &mut Vec<f64>| {
        if let Some(u) = against {
            let p = dot(v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
    };
    orth(&mut v);
    normalize(&mut v);
    let mut eig = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let mut w = mat_vec(cov, d, &v);
        orth(&mut w);
        eig = normalize(&mut w);
        if eig == 0.0 {
            return (v, 0.0);
        }
        if dot(&w, &v) < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if delta < POWER_TOL {
            break;
        }
    }
    (v, eig)
}

/// Center columns and project onto the top two principal directions.
pub fn pca_project_2d(embeddings: &Tensor) -> Result<Projection> {
    let (n, d) = (embeddings.rows(), embeddings.cols());
    if n < 3 {
        return Err(SpanerError::Degenerate(format!("need at least 3 points, got {n}")));
    }
    if d < 2 {
        return Err(SpanerError::Degenerate(format!("need at least 2 columns, got {d}")));
    }
    let mut centered = embeddings.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| embeddings.at(i, j)).sum::<f64>() / n as f64;
        for i in 0..n {
            centered.row_mut(i)[j] -= mean;
        }
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = centered.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += r[a] * r[b];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let (mut v1, l1) = power_iteration(&cov, d, None);
    if !(l1 > RANK_TOL * total) || total == 0.0 {
        return Err(SpanerError::Degenerate("data has rank < 1 after centering".into()));
    }
    let mut deflated = cov.clone();
    for a in 0..d {
        for b in 0..d {
            deflated[a * d + b] -= l1 * v1[a] * v1[b];
        }
    }
    let (mut v2, l2) = power_iteration(&deflated, d, Some(&v1));
    if !(l2 > RANK_TOL * total) {
        return Err(SpanerError::Degenerate("data has rank < 2 after centering".into()));
    }
    fix_sign(&mut v1);
    fix_sign(&mut v2);
    let mut coords = Vec::with_capacity(2 * n);
    for i in 0..n {
        coords.push(dot(centered.row(i), &v1));
        coords.push(dot(centered.row(i), &v2));
    }
    Ok(Projection {
        coords: Tensor::new(vec![n, 2], coords)?,
        components: [v1, v2],
        variances: [l1, l2],
    })
}
