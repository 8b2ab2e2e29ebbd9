//! CSV exports. Floats use Rust's shortest round-trip formatting.

use std::io::Write;

use crate::error::{Result, SpanerError};
use crate::tensor::Tensor;

use super::kshot::KShotRow;
use super::{Confusion, ConfusionMatrix, RetrievalReport};

fn csv_err(e: csv::Error) -> SpanerError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SpanerError::Io(io),
        other => SpanerError::Data(format!("csv: {other:?}")),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Header `direction,k,accuracy,seed,match`.
pub fn write_retrieval_csv<W: Write>(out: W, reports: &[(RetrievalReport, u64)]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["direction", "k", "accuracy", "seed", "match"]).map_err(csv_err)?;
    for (r, seed) in reports {
        w.write_record([
            r.direction.clone(),
            r.k.to_string(),
            r.accuracy.to_string(),
            seed.to_string(),
            r.match_mode.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Class-name header row and first column, counts in between.
pub fn write_confusion_csv<W: Write>(out: W, cm: &ConfusionMatrix) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec![String::new()];
    header.extend(cm.class_names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (name, row) in cm.class_names.iter().zip(&cm.counts) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// Header `query_class,retrieved_class,count`.
pub fn write_top_confusions_csv<W: Write>(out: W, cm: &ConfusionMatrix, top: &[Confusion]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["query_class", "retrieved_class", "count"]).map_err(csv_err)?;
    for c in top {
        w.write_record([
            cm.class_names[c.query_class].clone(),
            cm.class_names[c.retrieved_class].clone(),
            c.count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// One labeled point of a projection export.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLabel {
    pub class_id: usize,
    pub class_name: String,
    pub modality: String,
}

/// Header `x,y,class_id,class_name,modality`.
pub fn write_projection_csv<W: Write>(out: W, coords: &Tensor, labels: &[PointLabel]) -> Result<()> {
    if coords.shape() != [labels.len(), 2] {
        return Err(SpanerError::Dimension(format!(
            "projection {:?} vs {} labels",
            coords.shape(),
            labels.len()
        )));
    }
    let mut w = writer(out);
    w.write_record(["x", "y", "class_id", "class_name", "modality"]).map_err(csv_err)?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([
            coords.at(i, 0).to_string(),
            coords.at(i, 1).to_string(),
            l.class_id.to_string(),
            l.class_name.clone(),
            l.modality.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Header `k,direction,mean,sd,seeds`.
pub fn write_kshot_csv<W: Write>(out: W, rows: &[KShotRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["k", "direction", "mean", "sd", "seeds"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.direction.clone(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.accuracies.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}
