use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spaner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spaner")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = spaner(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Run {
    fn new(text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("cfg.json");
        std::fs::write(&config, text).unwrap();
        Self { _dir: dir, root, config }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn gen(&self) {
        ok(&["gen-data", "--config", s(&self.config), "--out", s(&self.path("data"))]);
    }

    fn train(&self) {
        ok(&[
            "train", "--config", s(&self.config), "--data", s(&self.path("data")),
            "--out", s(&self.path("base.spnr")),
        ]);
    }

    fn extend(&self) {
        ok(&[
            "extend", "--config", s(&self.config), "--checkpoint", s(&self.path("base.spnr")),
            "--data", s(&self.path("data")), "--out", s(&self.path("ext.spnr")),
        ]);
    }
}

const SPLIT: &str = r#"{"seed": 2, "split_k": 10, "semantic": "text", "train": {"epochs": 4, "lambda": 0.25},
  "extend": {"modality": "audio", "anchor": "vision", "train": {"epochs": 4}}}"#;

#[test]
fn gen_data_writes_one_file_per_modality() {
    let r = Run::new("{}");
    r.gen();
    let mut names: Vec<String> = std::fs::read_dir(r.path("data"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["audio.spne", "manifest.json", "text.spne", "vision.spne"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(r.path("data/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);

    ok(&["gen-data", "--config", s(&r.config), "--out", s(&r.path("again"))]);
    for f in names {
        assert_eq!(
            std::fs::read(r.path("data").join(&f)).unwrap(),
            std::fs::read(r.path("again").join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let r = Run::new(r#"{"seed": 1}"#);
    ok(&["gen-data", "--config", s(&r.config), "--seed", "9", "--out", s(&r.path("a"))]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(r.path("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["data"]["seed"], 9);
}

#[test]
fn invalid_configs_exit_2() {
    let r = Run::new(r#"{"data": {"modalities": [{"tag": "vision", "dim": 4, "noise": -0.5}, {"tag": "text", "dim": 4, "noise": 0.1}]}}"#);
    let out = spaner(&["gen-data", "--config", s(&r.config), "--out", s(&r.path("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("modalities[0].noise"));

    let r = Run::new(r#"{"trian": {}}"#);
    let out = spaner(&["gen-data", "--config", s(&r.config), "--out", s(&r.path("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trian"));

    let out = spaner(&["train", "--data", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_history_has_one_row_per_step() {
    let r = Run::new(SPLIT);
    r.gen();
    r.train();
    let text = std::fs::read_to_string(r.path("base.history.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config: "));
    let echo: serde_json::Value = serde_json::from_str(&lines[0]["# config: ".len()..]).unwrap();
    assert_eq!(echo["config"]["train"]["lambda"], 0.25);
    assert_eq!(lines[1], "step,epoch,lambda,loss,loss_align,loss_ca");
    // 100 support rows at batch 32: three full batches and one of four
    assert_eq!(lines.len() - 2, 4 * 4);
    for row in &lines[2..] {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[2], 0.25);
        assert!((f[3] - (f[4] + 0.25 * f[5])).abs() <= 1e-12);
    }

    let again = Run::new(SPLIT);
    again.gen();
    again.train();
    assert_eq!(text, std::fs::read_to_string(again.path("base.history.csv")).unwrap());
}

#[test]
fn extend_appends_parameters_and_reports_no_changes() {
    let r = Run::new(SPLIT);
    r.gen();
    r.train();
    r.extend();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(r.path("ext.frozen.json")).unwrap()).unwrap();
    assert_eq!(report["changed"].as_array().unwrap().len(), 0);
    let before = spaner::model::checkpoint::load(&r.path("base.spnr")).unwrap();
    let after = spaner::model::checkpoint::load(&r.path("ext.spnr")).unwrap();
    assert!(after.model.parameters().len() > before.model.parameters().len());
    assert_eq!(report["checked"], before.model.parameters().len());

    let bad = r.path("bad.json");
    std::fs::write(&bad, r#"{"extend": {"modality": "audio", "anchor": "depth"}}"#).unwrap();
    let out = spaner(&[
        "extend", "--config", s(&bad), "--checkpoint", s(&r.path("base.spnr")),
        "--data", s(&r.path("data")), "--out", s(&r.path("x.spnr")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reports_and_validates_k() {
    let r = Run::new(SPLIT);
    r.gen();
    r.train();
    r.extend();
    let ck = r.path("ext.spnr");
    ok(&[
        "eval", "--checkpoint", s(&ck), "--query", s(&r.path("data/semantic.spne")),
        "--gallery", s(&r.path("data/audio.query.spne")), "--out", s(&r.path("eval.csv")),
    ]);
    let text = std::fs::read_to_string(r.path("eval.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("direction,k,accuracy,seed,match"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let acc: f64 = row[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!((row[3], row[4]), ("2", "class"));

    ok(&[
        "eval", "--checkpoint", s(&ck), "--query", s(&r.path("data/vision.query.spne")),
        "--gallery", s(&r.path("data/vision.query.spne")), "--match", "instance", "--workers", "3",
        "--out", s(&r.path("self.csv")),
    ]);
    let text = std::fs::read_to_string(r.path("self.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("vision->vision,1,1,"));

    let out = spaner(&[
        "eval", "--checkpoint", s(&ck), "--query", s(&r.path("data/vision.query.spne")),
        "--gallery", s(&r.path("data/semantic.spne")), "--k", "11", "--out", s(&r.path("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn confusion_and_projection_outputs() {
    let r = Run::new(SPLIT);
    r.gen();
    r.train();
    let ck = r.path("base.spnr");
    let stdout = ok(&[
        "confusion", "--checkpoint", s(&ck), "--query", s(&r.path("data/vision.query.spne")),
        "--gallery", s(&r.path("data/text.query.spne")), "--out", s(&r.path("conf.csv")), "--top-n", "0",
    ]);
    assert!(stdout.contains("row sums match per-class query counts: true"));
    assert_eq!(
        std::fs::read_to_string(r.path("conf.top.csv")).unwrap(),
        "query_class,retrieved_class,count\n"
    );
    let conf = std::fs::read_to_string(r.path("conf.csv")).unwrap();
    assert_eq!(conf.lines().count(), 11);
    assert!(conf.starts_with(",class_00,class_01,"));

    let args = |out: &Path| {
        ok(&[
            "project", "--checkpoint", s(&ck), "--data", s(&r.path("data/vision.spne")),
            s(&r.path("data/text.query.spne")), "--out", s(out),
        ])
    };
    args(&r.path("p1.csv"));
    args(&r.path("p2.csv"));
    let p1 = std::fs::read_to_string(r.path("p1.csv")).unwrap();
    assert_eq!(p1, std::fs::read_to_string(r.path("p2.csv")).unwrap());
    let lines: Vec<&str> = p1.lines().collect();
    assert_eq!(lines[0], "x,y,class_id,class_name,modality");
    assert_eq!(lines.len() - 1, 200 + 100);
    assert_eq!(lines.iter().filter(|l| l.ends_with(",text")).count(), 100);
}

#[test]
fn grad_check_passes_and_names_worst_parameter() {
    let stdout = ok(&["grad-check"]);
    assert!(stdout.contains("worst parameter "), "{stdout}");
    let r = Run::new(r#"{"grad_check": {"step": 0.5, "tolerance": 1e-12}}"#);
    let out = spaner(&["grad-check", "--config", s(&r.config)]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn corrupt_inputs_exit_3() {
    let r = Run::new(SPLIT);
    r.gen();
    r.train();
    let bytes = std::fs::read(r.path("data/audio.spne")).unwrap();
    std::fs::write(r.path("cut.spne"), &bytes[..bytes.len() - 5]).unwrap();
    let out = spaner(&[
        "eval", "--checkpoint", s(&r.path("base.spnr")), "--query", s(&r.path("cut.spne")),
        "--gallery", s(&r.path("data/text.spne")), "--out", s(&r.path("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error at byte"));
}
