use std::collections::BTreeMap;

use spaner::data::{
    gen_synthetic, kshot_split_paired, pair, read_embeddings, semantic_modality, write_embeddings, LabeledEmbeddings,
    SyntheticSpec,
};
use spaner::eval::{
    embed_all, pca_project_2d, retrieval_accuracy, retrieve_topk, MatchMode, RetrievalReport,
};
use spaner::extension::{extend, ExtensionConfig};
use spaner::model::checkpoint;
use spaner::model::train::fit;
use spaner::tensor::{row_normalize, NORM_EPS};
use spaner::{init_model, Rng, SpanerError, SpanerModel, Tensor, TrainConfig};

fn small_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        width: 16,
        heads: 2,
        prompt_tokens: 2,
        proj_dim: 16,
        epochs,
        batch_size: 16,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    }
}

fn trained(spec: &SyntheticSpec, epochs: usize) -> (BTreeMap<String, LabeledEmbeddings>, SpanerModel) {
    let data = gen_synthetic(spec).unwrap();
    let cfg = small_train(epochs);
    let mut model = init_model(&cfg, &[("vision", 32), ("text", 32)], &Rng::new(1)).unwrap();
    fit(&mut model, &pair(&data["vision"], &data["text"]).unwrap(), &cfg).unwrap();
    (data, model)
}

#[test]
fn embed_all_contract() {
    let spec = SyntheticSpec::default();
    let (data, model) = trained(&spec, 1);
    let z = embed_all(&model, &data["vision"]).unwrap();
    assert_eq!(z.shape(), &[200, 16]);
    for i in 0..z.rows() {
        let n: f64 = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= 1e-12);
    }
    assert_eq!(z, embed_all(&model, &data["vision"]).unwrap());
    assert!(matches!(embed_all(&model, &data["audio"]), Err(SpanerError::Config(_))));
}

#[test]
fn clustered_queries_against_semantic_gallery_are_perfect() {
    let mut spec = SyntheticSpec::default();
    for m in &mut spec.modalities {
        m.noise = 0.0;
    }
    let (data, model) = trained(&spec, 1);
    let gallery = semantic_modality(&spec, "text").unwrap();
    let r = retrieval_accuracy(&model, &data["text"], &gallery, 1, MatchMode::Class).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.topk.len(), 200);
}

#[test]
fn random_queries_sit_at_chance() {
    let (classes, per_class, queries, trials) = (5, 4, 50, 200);
    let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let mut rng = Rng::new(77);
    let unit = |n: usize, rng: &mut Rng| {
        let t = Tensor::new(vec![n, 6], (0..n * 6).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        row_normalize(&t, NORM_EPS)
    };
    let mut total = 0.0;
    for _ in 0..trials {
        let g = unit(classes * per_class, &mut rng);
        let q = unit(queries, &mut rng);
        let gl = LabeledEmbeddings::new(
            "g",
            g.clone(),
            (0..classes * per_class).map(|i| i / per_class).collect(),
            (0..classes * per_class).collect(),
            names.clone(),
        )
        .unwrap();
        let ql = LabeledEmbeddings::new(
            "q",
            q.clone(),
            (0..queries).map(|_| rng.below(classes)).collect(),
            (0..queries).collect(),
            names.clone(),
        )
        .unwrap();
        let topk = retrieve_topk(&q, &g, 1).unwrap();
        total += RetrievalReport::from_topk("q->g".into(), 1, MatchMode::Class, topk, &ql, &gl).accuracy;
    }
    let mean = total / trials as f64;
    // standard error is sqrt(0.16 / 10000) = 0.004
    assert!((mean - 1.0 / classes as f64).abs() < 0.02, "mean {mean}");
}

#[test]
fn embedding_files_reproduce_retrieval() {
    let spec = SyntheticSpec::default();
    let (data, model) = trained(&spec, 2);
    let dir = tempfile::tempdir().unwrap();
    let mut reread = BTreeMap::new();
    for (tag, d) in &data {
        let p = dir.path().join(format!("{tag}.spne"));
        write_embeddings(d, &p).unwrap();
        reread.insert(tag.clone(), read_embeddings(&p).unwrap());
    }
    assert_eq!(reread, data);
    let a = retrieval_accuracy(&model, &data["vision"], &data["text"], 3, MatchMode::Class).unwrap();
    let b = retrieval_accuracy(&model, &reread["vision"], &reread["text"], 3, MatchMode::Class).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.accuracy));
}

#[test]
fn checkpoint_round_trip_preserves_embeddings() {
    let spec = SyntheticSpec::default();
    let (data, model) = trained(&spec, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.spnr");
    checkpoint::save(&model, &serde_json::json!({"note": "test"}), &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    let values = |m: &SpanerModel| -> Vec<(String, Tensor)> {
        m.parameters().into_iter().map(|(n, p)| (n, p.value.clone())).collect()
    };
    assert_eq!(values(&back.model), values(&model));
    assert_eq!(
        embed_all(&back.model, &data["text"]).unwrap(),
        embed_all(&model, &data["text"]).unwrap()
    );
}

#[test]
fn extension_registers_new_branch() {
    let spec = SyntheticSpec::default();
    let data = gen_synthetic(&spec).unwrap();
    let split = kshot_split_paired(&data, 10, &Rng::new(4)).unwrap();
    let cfg = small_train(20);
    let mut model = init_model(&cfg, &[("vision", 32), ("text", 32)], &Rng::new(2)).unwrap();
    fit(&mut model, &pair(&split["vision"].support, &split["text"].support).unwrap(), &cfg).unwrap();

    let ext = ExtensionConfig {
        modality: "audio".into(),
        input_dim: 48,
        anchor: "vision".into(),
        train: cfg.clone(),
    };
    let paired = pair(&split["audio"].support, &split["vision"].support).unwrap();
    let (extended, _) = extend(&model, &ext, &paired, &Rng::new(5)).unwrap();
    assert!(extended.branch("audio").unwrap().adapter.is_some());
    let mut batch = BTreeMap::new();
    for (tag, s) in &split {
        batch.insert(tag.clone(), s.query.vectors.clone());
    }
    let out = extended.forward(&batch).unwrap();
    for (z, f) in out.values() {
        assert_eq!(z.shape(), &[100, 16]);
        assert_eq!(f.shape(), &[100, 16]);
    }
    let chance = 0.1;
    for other in ["vision", "text"] {
        let acc = retrieval_accuracy(&extended, &split["audio"].query, &split[other].query, 1, MatchMode::Class)
            .unwrap()
            .accuracy;
        assert!(acc > chance, "audio->{other} {acc}");
    }
}

#[test]
fn matching_width_needs_no_adapter() {
    let cfg = small_train(1);
    let model = init_model(&cfg, &[("vision", 32), ("text", 16)], &Rng::new(2)).unwrap();
    assert!(model.branch("vision").unwrap().adapter.is_some());
    assert!(model.branch("text").unwrap().adapter.is_none());
    let mut rng = Rng::new(3);
    let x = |n: usize, rng: &mut Rng| Tensor::new(vec![6, n], (0..6 * n).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
    let paired = spaner::model::train::PairedData::new("depth", x(16, &mut rng), "vision", x(32, &mut rng)).unwrap();
    let ext = ExtensionConfig {
        modality: "depth".into(),
        input_dim: 16,
        anchor: "vision".into(),
        train: cfg,
    };
    let (extended, _) = extend(&model, &ext, &paired, &Rng::new(4)).unwrap();
    assert!(extended.branch("depth").unwrap().adapter.is_none());
    assert!(extended.parameter("depth.adapter").is_none());
}

#[test]
fn projection_of_trained_embeddings_is_stable() {
    let spec = SyntheticSpec::default();
    let (data, model) = trained(&spec, 2);
    let z = embed_all(&model, &data["vision"]).unwrap();
    let a = pca_project_2d(&z).unwrap();
    assert_eq!(a, pca_project_2d(&z).unwrap());
    assert_eq!(a.coords.shape(), &[200, 2]);
    assert!(a.variances[0] >= a.variances[1]);
}
