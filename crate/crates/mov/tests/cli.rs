use std::path::Path;
use std::process::Command;

use mov::config::{parse_model, RunConfig};
use mov_core::{ModelKind, ViewSchema};

fn mov(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mov"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMALL: &str = r#"
seed = 5
[data.synthetic]
n_samples = 200
view_dims = [3, 2]
separation = 2.0
noise_std = 0.5
[protocol]
k_folds = 3
[protocol.sweep]
hidden_units = [6]
hidden_layers = [1]
lambda = [1.0]
dropout = [0.0]
[protocol.train]
max_epochs = 40
batch_size = 32
"#;

fn small_config(dir: &Path) {
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    for out in ["a", "b"] {
        let (code, _, err) = mov(dir.path(), &["generate", "--config", "small.toml", "--out", out]);
        assert_eq!(code, 0, "{err}");
    }
    let (code, _, _) = mov(dir.path(), &["generate", "--config", "small.toml", "--seed", "6", "--out", "c"]);
    assert_eq!(code, 0);
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/data.csv"), read("b/data.csv"));
    assert_eq!(read("a/data.truth.csv"), read("b/data.truth.csv"));
    assert_ne!(read("a/data.csv"), read("c/data.csv"));
}

#[test]
fn sidecar_counts_follow_the_prior() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("g.toml"),
        "seed = 9\n[data.synthetic]\nn_samples = 2000\nview_dims = [2, 2]\ninformative_prior = [0.5, 0.5]\n",
    )
    .unwrap();
    let (code, _, err) = mov(dir.path(), &["generate", "--config", "g.toml", "--out", "g"]);
    assert_eq!(code, 0, "{err}");
    let truth = std::fs::read_to_string(dir.path().join("g/data.truth.csv")).unwrap();
    let first = truth.lines().skip(1).filter(|l| l.ends_with(",v0")).count() as f64;
    // 99% binomial band: 2.576 · sqrt(2000 · 0.25)
    assert!((first - 1000.0).abs() <= 2.576 * 500f64.sqrt(), "{first}");
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    assert_eq!(mov(dir.path(), &["generate", "--config", "small.toml", "--out", "g"]).0, 0);
    std::fs::write(
        dir.path().join("csv.toml"),
        SMALL.replace("[data.synthetic]\nn_samples = 200\nview_dims = [3, 2]\nseparation = 2.0\nnoise_std = 0.5\n", "[data]\ncsv = \"g/data.csv\"\n"),
    )
    .unwrap();
    let (code, _, err) = mov(dir.path(), &["train", "--config", "csv.toml", "--out", "t"]);
    assert_eq!(code, 0, "{err}");
    for out in ["e1", "e2"] {
        let (code, _, err) = mov(dir.path(), &["evaluate", "--config", "csv.toml", "--checkpoint", "t/model.mov", "--out", out]);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["report.json", "gates.csv", "roc_mov.csv", "predictions.csv"] {
        let a = std::fs::read(dir.path().join("e1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("e2").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between evaluations");
    }
    let gates = std::fs::read_to_string(dir.path().join("e1/gates.csv")).unwrap();
    assert_eq!(gates.lines().count(), 201);
    for line in gates.lines().skip(1) {
        let w: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(w.len(), 2);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("e1/report.json")).unwrap()).unwrap();
    assert_eq!(report["positive_class"], "positive");
    let confusion = &report["report"]["confusion"];
    let positives = confusion["tp"].as_u64().unwrap() + confusion["fn_"].as_u64().unwrap();
    let majority = positives.max(200 - positives) as f64 / 200.0;
    assert!(report["report"]["accuracy"].as_f64().unwrap() >= majority);
    let histogram = &report["gate_histogram"]["views"]["v0"];
    assert_eq!(histogram.as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 200);
}

#[test]
fn compare_reports_every_model() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    std::fs::write(dir.path().join("pf.toml"), format!("delong = \"per_fold\"\n{SMALL}")).unwrap();
    let (code, stdout, err) = mov(dir.path(), &["compare", "--config", "pf.toml", "--out", "c", "--workers", "2"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("mov"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("c/report.json")).unwrap()).unwrap();
    let rows = report["summary"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["model"].as_str().unwrap()).collect();
    assert_eq!(names, ["v0", "v1", "avg", "concat", "mov"]);
    assert_eq!(report["comparison"]["delong"].as_array().unwrap().len(), 4);
    assert_eq!(report["delong_per_fold"].as_array().unwrap().len(), 4 * 3);
    assert_eq!(report["positive_class"], "positive");
    for name in names {
        assert!(dir.path().join(format!("c/roc_{name}.csv")).exists());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("c/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["fold_seeds"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["fold_plan"]["folds"].as_object().unwrap().len(), 200);
}

#[test]
fn exit_codes_by_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    std::fs::write(dir.path().join("unknown.toml"), "colour = \"red\"\n").unwrap();
    std::fs::write(dir.path().join("k1.toml"), SMALL.replace("k_folds = 3", "k_folds = 1")).unwrap();
    std::fs::write(dir.path().join("nodata.toml"), "seed = 1\n").unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a_f0,label\nnan,negative\n").unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[data]\ncsv = \"bad.csv\"\n").unwrap();
    std::fs::write(dir.path().join("missing.toml"), "[data]\ncsv = \"nope.csv\"\n").unwrap();
    std::fs::write(dir.path().join("junk.mov"), "not a checkpoint").unwrap();
    let cases: [(&[&str], i32); 7] = [
        (&["compare", "--config", "unknown.toml"], 2),
        (&["compare", "--config", "k1.toml"], 2),
        (&["compare", "--config", "nodata.toml"], 2),
        (&["compare", "--config", "bad.toml"], 3),
        (&["compare", "--config", "missing.toml"], 3),
        (&["evaluate", "--checkpoint", "junk.mov", "--config", "small.toml"], 3),
        (&["gradcheck", "--trials", "1", "--tolerance", "1e-30"], 5),
    ];
    for (args, expected) in cases {
        let (code, _, err) = mov(dir.path(), args);
        assert_eq!(code, expected, "{args:?}: {err}");
        assert!(!err.is_empty());
    }
    let (code, stdout, _) = mov(dir.path(), &["gradcheck", "--trials", "1"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("gate.layer0.weights") && stdout.contains("PASS"));
}

#[test]
fn benchmark_preset_parses() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.toml");
    let c = RunConfig::load(&p).unwrap();
    c.validate().unwrap();
    let syn = c.data.synthetic.as_ref().unwrap();
    assert_eq!((syn.n_samples, syn.view_dims.clone()), (1400, vec![14, 14]));
    assert_eq!(c.protocol.k_folds, 10);
    assert_eq!(c.protocol.sweep.points(ModelKind::Mov).len(), 4);
    assert_eq!(c.protocol.sweep.points(ModelKind::Concat).len(), 2);
}

#[test]
fn model_names_parse() {
    let schema = ViewSchema::new(vec!["cc".into(), "mlo".into()], vec![2, 2], vec!["a".into(), "b".into()]).unwrap();
    assert_eq!(parse_model("single:mlo", &schema), Ok(ModelKind::SingleView(1)));
    assert_eq!(parse_model("single:0", &schema), Ok(ModelKind::SingleView(0)));
    assert_eq!(parse_model("avg", &schema), Ok(ModelKind::Avg));
    assert!(parse_model("single:xx", &schema).is_err());
    assert!(parse_model("ensemble", &schema).is_err());
    let mut c = RunConfig {
        models: vec!["mov".into(), "mov".into()],
        ..RunConfig::default()
    };
    assert!(c.model_kinds(&schema).is_err());
    c.models.clear();
    assert_eq!(c.model_kinds(&schema).unwrap().len(), 5);
}

#[test]
fn no_signal_keeps_every_model_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.toml");
    std::fs::write(
        &path,
        r#"
seed = 4
[data.synthetic]
n_samples = 1400
view_dims = [4, 4]
separation = 0.0
[protocol]
k_folds = 10
[protocol.sweep]
hidden_units = [8]
hidden_layers = [1]
lambda = [1.0]
dropout = [0.0]
[protocol.train]
max_epochs = 60
batch_size = 32
"#,
    )
    .unwrap();
    let mut config = RunConfig::load(&path).unwrap();
    config.out = Some(dir.path().join("out"));
    let report = mov::cli::compare(&config).unwrap();
    for row in &report.summary {
        assert!((0.45..=0.55).contains(&row.auc_mean), "{}: {}", row.model, row.auc_mean);
    }
}
