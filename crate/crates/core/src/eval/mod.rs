//! Retrieval-based evaluation: cross-modal top-k accuracy, class-wise
//! confusion matrices, 2-D projections, and the k-shot experiment runner.

pub mod kshot;
pub mod pca;
pub mod report;

use std::cmp::Ordering;

use crate::data::LabeledEmbeddings;
use crate::error::{Result, SpanerError};
use crate::model::SpanerModel;
use crate::tensor::{row_normalize, Tensor, NORM_EPS};

pub use kshot::{kshot_experiment, Direction, ExtensionPlan, KShotPlan, KShotRow, QuerySource};
pub use pca::{pca_project_2d, Projection};

/// Unit-norm pooled embeddings of every row of `data`, through the branch
/// registered under `data.modality`.
pub fn embed_all(model: &SpanerModel, data: &LabeledEmbeddings) -> Result<Tensor> {
    let cache = model.forward_branch(&data.modality, &data.vectors)?;
    Ok(row_normalize(&cache.z, NORM_EPS))
}

fn check_retrieval(queries: &Tensor, gallery: &Tensor, k: usize) -> Result<()> {
    if queries.cols() != gallery.cols() {
        return Err(SpanerError::Dimension(format!(
            "query width {} vs gallery width {}",
            queries.cols(),
            gallery.cols()
        )));
    }
    if k == 0 || k > gallery.rows() {
        return Err(SpanerError::Argument(format!(
            "k={k} must lie in [1, {}] (gallery size)",
            gallery.rows()
        )));
    }
    Ok(())
}

fn topk_row(q: &[f64], gallery: &Tensor, k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..gallery.rows())
        .map(|j| (q.iter().zip(gallery.row(j)).map(|(a, b)| a * b).sum(), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
    };
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Indices of the `k` largest inner products per query, descending, ties to
/// the lower gallery index.
pub fn retrieve_topk(queries: &Tensor, gallery: &Tensor, k: usize) -> Result<Vec<Vec<usize>>> {
    retrieve_topk_with_workers(queries, gallery, k, 1)
}

/// [`retrieve_topk`] split over `workers` threads; output order is fixed.
pub fn retrieve_topk_with_workers(
    queries: &Tensor,
    gallery: &Tensor,
    k: usize,
    workers: usize,
) -> Result<Vec<Vec<usize>>> {
    check_retrieval(queries, gallery, k)?;
    let n = queries.rows();
    let workers = workers.clamp(1, n);
    if workers == 1 {
        return Ok((0..n).map(|i| topk_row(queries.row(i), gallery, k)).collect());
    }
    let chunk = n.div_ceil(workers);
    let mut out = vec![Vec::new(); n];
    std::thread::scope(|s| {
        for (c, slot) in out.chunks_mut(chunk).enumerate() {
            s.spawn(move || {
                for (off, dst) in slot.iter_mut().enumerate() {
                    *dst = topk_row(queries.row(c * chunk + off), gallery, k);
                }
            });
        }
    });
    Ok(out)
}

/// What counts as a correct retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Retrieved item has the query's class.
    #[default]
    Class,
    /// Retrieved item is the same instance as the query.
    Instance,
}

impl MatchMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatchMode::Class => "class",
            MatchMode::Instance => "instance",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub direction: String,
    pub k: usize,
    pub match_mode: MatchMode,
    /// Fraction of queries with a correct item among their top `k`.
    pub accuracy: f64,
    pub topk: Vec<Vec<usize>>,
}

impl RetrievalReport {
    pub fn from_topk(
        direction: String,
        k: usize,
        match_mode: MatchMode,
        topk: Vec<Vec<usize>>,
        query: &LabeledEmbeddings,
        gallery: &LabeledEmbeddings,
    ) -> Self {
        let hit = |qi: usize, gj: usize| match match_mode {
            MatchMode::Class => query.class_ids[qi] == gallery.class_ids[gj],
            MatchMode::Instance => query.instance_ids[qi] == gallery.instance_ids[gj],
        };
        let correct = topk
            .iter()
            .enumerate()
            .filter(|(qi, row)| row.iter().any(|&gj| hit(*qi, gj)))
            .count();
        Self {
            direction,
            k,
            match_mode,
            accuracy: correct as f64 / topk.len() as f64,
            topk,
        }
    }
}

pub fn direction_label(query: &str, gallery: &str) -> String {
    format!("{query}->{gallery}")
}

fn check_sets(query: &LabeledEmbeddings, gallery: &LabeledEmbeddings) -> Result<()> {
    if query.is_empty() || gallery.is_empty() {
        return Err(SpanerError::Data("empty query or gallery set".into()));
    }
    if query.class_names != gallery.class_names {
        return Err(SpanerError::Data(format!(
            "{} and {} use different class lists",
            query.modality, gallery.modality
        )));
    }
    Ok(())
}

pub fn retrieval_accuracy(
    model: &SpanerModel,
    query: &LabeledEmbeddings,
    gallery: &LabeledEmbeddings,
    k: usize,
    match_mode: MatchMode,
) -> Result<RetrievalReport> {
    check_sets(query, gallery)?;
    let qz = embed_all(model, query)?;
    let gz = embed_all(model, gallery)?;
    let topk = retrieve_topk(&qz, &gz, k)?;
    Ok(RetrievalReport::from_topk(
        direction_label(&query.modality, &gallery.modality),
        k,
        match_mode,
        topk,
        query,
        gallery,
    ))
}

/// `counts[i][j]`: class-`i` queries whose top-1 gallery item has class `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub query_class: usize,
    pub retrieved_class: usize,
    pub count: u64,
}

impl ConfusionMatrix {
    pub fn from_top1(
        top1: &[usize],
        query: &LabeledEmbeddings,
        gallery: &LabeledEmbeddings,
    ) -> Result<Self> {
        check_sets(query, gallery)?;
        let c = query.num_classes();
        let mut counts = vec![vec![0u64; c]; c];
        for (qi, &gj) in top1.iter().enumerate() {
            counts[query.class_ids[qi]][gallery.class_ids[gj]] += 1;
        }
        Ok(Self {
            counts,
            class_names: query.class_names.clone(),
        })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

pub fn confusion_matrix(
    model: &SpanerModel,
    query: &LabeledEmbeddings,
    gallery: &LabeledEmbeddings,
) -> Result<ConfusionMatrix> {
    let report = retrieval_accuracy(model, query, gallery, 1, MatchMode::Class)?;
    let top1: Vec<usize> = report.topk.iter().map(|r| r[0]).collect();
    ConfusionMatrix::from_top1(&top1, query, gallery)
}

/// The `n` largest off-diagonal counts, descending; ties in `(i, j)` order.
pub fn top_confusions(cm: &ConfusionMatrix, n: usize) -> Vec<Confusion> {
    let mut out: Vec<Confusion> = cm
        .counts
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter().enumerate().filter_map(move |(j, &count)| {
                (i != j && count > 0).then_some(Confusion {
                    query_class: i,
                    retrieved_class: j,
                    count,
                })
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.query_class.cmp(&b.query_class))
            .then(a.retrieved_class.cmp(&b.retrieved_class))
    });
    out.truncate(n);
    out
}
