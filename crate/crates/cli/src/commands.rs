//! Subcommand implementations. Each is a pure function of its config and
//! input files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use spaner::data::{
    gen_synthetic, kshot_split_paired, pair, read_embeddings, semantic_modality, write_embeddings,
    LabeledEmbeddings,
};
use spaner::eval::report::{
    write_confusion_csv, write_projection_csv, write_retrieval_csv, write_top_confusions_csv,
    PointLabel,
};
use spaner::eval::{
    direction_label, embed_all, pca_project_2d, retrieve_topk_with_workers, top_confusions,
    ConfusionMatrix, MatchMode, RetrievalReport,
};
use spaner::extension::{assert_frozen_unchanged, extend, lineage_frozen_names, ExtensionConfig};
use spaner::gradcheck::grad_check;
use spaner::model::checkpoint::{load, save};
use spaner::model::train::{fit, LossWeights, PairObjective, PairedData, TrainHistory};
use spaner::{init_model, Result, Rng, SpanerError, SpanerModel, Tensor};

use crate::config::RunConfig;

/// Which rows of a generated modality a file holds.
#[derive(Debug, Clone, Copy)]
enum Role {
    All,
    Support,
    Query,
}

fn data_file(dir: &Path, tag: &str, role: Role) -> PathBuf {
    match role {
        Role::All => dir.join(format!("{tag}.spne")),
        Role::Support => dir.join(format!("{tag}.support.spne")),
        Role::Query => dir.join(format!("{tag}.query.spne")),
    }
}

fn training_role(cfg: &RunConfig) -> Role {
    if cfg.split_k.is_some() {
        Role::Support
    } else {
        Role::All
    }
}

fn read_modality(dir: &Path, tag: &str, role: Role) -> Result<LabeledEmbeddings> {
    let path = data_file(dir, tag, role);
    let data = read_embeddings(&path)?;
    if data.modality != tag {
        return Err(SpanerError::Data(format!(
            "{} holds modality {:?}, expected {tag:?}",
            path.display(),
            data.modality
        )));
    }
    Ok(data)
}

/// `out.csv` becomes `out.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    Ok(BufWriter::new(File::create(path)?))
}

fn save_checkpoint(model: &SpanerModel, echo: &serde_json::Value, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    save(model, echo, path)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

pub fn write_history_csv(path: &Path, history: &TrainHistory, echo: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# config: {echo}")?;
    writeln!(w, "step,epoch,lambda,loss,loss_align,loss_ca")?;
    for r in &history.records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.step, r.epoch, history.lambda, r.loss, r.loss_align, r.loss_ca
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let data = gen_synthetic(&cfg.data)?;
    let mut files = Vec::new();
    let mut record = |path: &Path, d: &LabeledEmbeddings, role: &str| -> Result<()> {
        write_embeddings(d, path)?;
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        files.push(json!({"file": name, "modality": d.modality, "role": role, "rows": d.len()}));
        Ok(())
    };
    for (tag, d) in &data {
        record(&data_file(out, tag, Role::All), d, "all")?;
    }
    if let Some(k) = cfg.split_k {
        let splits = kshot_split_paired(&data, k, &Rng::new(cfg.seed).fork_named("split"))?;
        for (tag, s) in &splits {
            record(&data_file(out, tag, Role::Support), &s.support, "support")?;
            record(&data_file(out, tag, Role::Query), &s.query, "query")?;
        }
    }
    if let Some(tag) = &cfg.semantic {
        record(&out.join("semantic.spne"), &semantic_modality(&cfg.data, tag)?, "semantic")?;
    }
    let count = files.len();
    write_json(
        &out.join("manifest.json"),
        &json!({"seed": cfg.seed, "files": files, "config": cfg.to_json()}),
    )?;
    println!("wrote {count} embedding files to {}", out.display());
    Ok(())
}

fn run_echo(command: &str, cfg: &RunConfig) -> serde_json::Value {
    json!({"command": command, "config": cfg.to_json()})
}

pub fn train(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    let [a, b] = &cfg.modalities;
    let role = training_role(cfg);
    let (da, db) = (read_modality(data_dir, a, role)?, read_modality(data_dir, b, role)?);
    let mut model = init_model(
        &cfg.train,
        &[(a, da.dim()), (b, db.dim())],
        &Rng::new(cfg.seed).fork_named("init"),
    )?;
    let history = fit(&mut model, &pair(&da, &db)?, &cfg.train)?;
    let echo = run_echo("train", cfg);
    save_checkpoint(&model, &echo, out)?;
    write_history_csv(&sibling(out, "history.csv"), &history, &echo)?;
    if let Some(last) = history.records.last() {
        println!("trained {} steps, final loss {}", history.records.len(), last.loss);
    }
    Ok(())
}

pub fn extend_checkpoint(cfg: &RunConfig, checkpoint: &Path, data_dir: &Path, out: &Path) -> Result<()> {
    let section = cfg
        .extend
        .as_ref()
        .ok_or_else(|| SpanerError::Config("extend: section missing from config".into()))?;
    let parent = load(checkpoint)?;
    if parent.model.branch(&section.anchor).is_err() {
        return Err(SpanerError::Config(format!(
            "extend.anchor: {:?} is not in the checkpoint",
            section.anchor
        )));
    }
    let role = training_role(cfg);
    let new = read_modality(data_dir, &section.modality, role)?;
    let anchor = read_modality(data_dir, &section.anchor, role)?;
    let ext = ExtensionConfig {
        modality: section.modality.clone(),
        input_dim: new.dim(),
        anchor: section.anchor.clone(),
        train: section.train.clone(),
    };
    let (model, history) = extend(
        &parent.model,
        &ext,
        &pair(&new, &anchor)?,
        &Rng::new(cfg.seed).fork_named("extend"),
    )?;

    let checked = lineage_frozen_names(&parent.model, &model)?;
    let changed = assert_frozen_unchanged(&parent.model, &model, &checked)?;
    write_json(
        &sibling(out, "frozen.json"),
        &json!({"checked": checked.len(), "changed": changed}),
    )?;
    if !changed.is_empty() {
        return Err(SpanerError::Lineage(format!(
            "frozen parameters changed: {}",
            changed.join(", ")
        )));
    }
    let echo = json!({"command": "extend", "config": cfg.to_json(), "parent": parent.run});
    save_checkpoint(&model, &echo, out)?;
    write_history_csv(&sibling(out, "history.csv"), &history, &echo)?;
    println!(
        "extended with {}: {} parameters ({} frozen, unchanged)",
        section.modality,
        model.parameters().len(),
        checked.len()
    );
    Ok(())
}

fn run_seed(run: &serde_json::Value) -> u64 {
    run.pointer("/config/seed").and_then(|v| v.as_u64()).unwrap_or(0)
}

fn retrieve(
    checkpoint: &Path,
    query: &Path,
    gallery: &Path,
    k: usize,
    workers: usize,
    mode: MatchMode,
) -> Result<(RetrievalReport, u64, LabeledEmbeddings, LabeledEmbeddings)> {
    let ckpt = load(checkpoint)?;
    let q = read_embeddings(query)?;
    let g = read_embeddings(gallery)?;
    if q.class_names != g.class_names {
        return Err(SpanerError::Data("query and gallery use different class lists".into()));
    }
    let qz = embed_all(&ckpt.model, &q)?;
    let gz = embed_all(&ckpt.model, &g)?;
    let topk = retrieve_topk_with_workers(&qz, &gz, k, workers)?;
    let report = RetrievalReport::from_topk(direction_label(&q.modality, &g.modality), k, mode, topk, &q, &g);
    Ok((report, run_seed(&ckpt.run), q, g))
}

pub fn eval(
    checkpoint: &Path,
    query: &Path,
    gallery: &Path,
    k: usize,
    out: &Path,
    workers: usize,
    mode: MatchMode,
) -> Result<()> {
    let (report, seed, _, _) = retrieve(checkpoint, query, gallery, k, workers, mode)?;
    let mut w = create(out)?;
    write_retrieval_csv(&mut w, &[(report.clone(), seed)])?;
    w.flush()?;
    println!(
        "{} top-{} {}-level accuracy {}",
        report.direction,
        k,
        mode.as_str(),
        report.accuracy
    );
    Ok(())
}

pub fn confusion(
    checkpoint: &Path,
    query: &Path,
    gallery: &Path,
    out: &Path,
    top_n: usize,
    workers: usize,
) -> Result<()> {
    let (report, _, q, g) = retrieve(checkpoint, query, gallery, 1, workers, MatchMode::Class)?;
    let top1: Vec<usize> = report.topk.iter().map(|r| r[0]).collect();
    let cm = ConfusionMatrix::from_top1(&top1, &q, &g)?;
    let mut per_class = vec![0u64; q.num_classes()];
    for &c in &q.class_ids {
        per_class[c] += 1;
    }
    let rows_ok = cm.row_sums() == per_class;
    let mut w = create(out)?;
    write_confusion_csv(&mut w, &cm)?;
    w.flush()?;
    let mut w = create(&sibling(out, "top.csv"))?;
    write_top_confusions_csv(&mut w, &cm, &top_confusions(&cm, top_n))?;
    w.flush()?;
    println!(
        "row sums match per-class query counts: {rows_ok}; total {}; accuracy {}",
        cm.total(),
        cm.accuracy()
    );
    if !rows_ok {
        return Err(SpanerError::Data("confusion row sums disagree with query counts".into()));
    }
    Ok(())
}

pub fn project(checkpoint: &Path, files: &[PathBuf], out: &Path) -> Result<()> {
    let ckpt = load(checkpoint)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for path in files {
        let d = read_embeddings(path)?;
        let z = embed_all(&ckpt.model, &d)?;
        for i in 0..d.len() {
            rows.push(z.row(i).to_vec());
            labels.push(PointLabel {
                class_id: d.class_ids[i],
                class_name: d.class_names[d.class_ids[i]].clone(),
                modality: d.modality.clone(),
            });
        }
    }
    let projection = pca_project_2d(&Tensor::from_rows(&rows)?)?;
    let mut w = create(out)?;
    write_projection_csv(&mut w, &projection.coords, &labels)?;
    w.flush()?;
    println!("projected {} points from {} files", labels.len(), files.len());
    Ok(())
}

/// Finite-difference check of the full loss on the random instance described
/// by `cfg.grad_check`. Returns the max relative error.
pub fn grad_check_run(cfg: &RunConfig) -> Result<f64> {
    let g = &cfg.grad_check;
    let train = g.train_config(cfg.seed);
    let [a, b] = &cfg.modalities;
    let mut model = init_model(
        &train,
        &[(a, g.input_dim), (b, g.input_dim)],
        &Rng::new(cfg.seed).fork_named("init"),
    )?;
    let mut rng = Rng::new(cfg.seed).fork_named("gradcheck");
    if g.prompt_std > 0.0 {
        for v in model.prompt.tokens.value.data_mut() {
            *v = rng.normal(0.0, g.prompt_std);
        }
    }
    let mut random = || {
        Tensor::new(
            vec![g.batch, g.input_dim],
            (0..g.batch * g.input_dim).map(|_| rng.normal(0.0, 1.0)).collect(),
        )
    };
    let x1 = random()?;
    let x2 = random()?;
    let batch = PairedData::new(a, x1, b, x2)?;
    let mut objective = PairObjective {
        model: &mut model,
        batch: &batch,
        weights: LossWeights::from_config(&train),
    };
    let report = grad_check(&mut objective, g.step)?;
    let (name, idx) = report.worst.clone().unwrap_or_default();
    println!(
        "checked {} coordinates, max relative error {:e}, worst parameter {name}[{idx}]",
        report.coordinates_checked, report.max_rel_error
    );
    if report.max_rel_error > g.tolerance {
        return Err(SpanerError::Numeric {
            step: 0,
            message: format!(
                "max relative error {:e} exceeds {:e} at {name}[{idx}]",
                report.max_rel_error, g.tolerance
            ),
        });
    }
    Ok(report.max_rel_error)
}
