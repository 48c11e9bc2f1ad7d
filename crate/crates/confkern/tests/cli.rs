mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use confkern::manifest::{manifest_path, CellRecord, RunManifest};

fn confkern(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confkern"))
        .args(args)
        .env_remove("CONFKERN_CORPUS")
        .env_remove("CONFKERN_JOBS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = [
        "synth", "--sigma", "0.5,2", "--trials", "4", "--test", "300", "--seed", "9",
    ];
    for out in [&a, &b] {
        let mut full = args.to_vec();
        full.extend(["--out", s(out)]);
        let o = confkern(&full);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("boundary,transform,sigma,trials"));
    assert!(lines[1].starts_with("sin,d2,0.50000,4,"));
    let m = RunManifest::load(&manifest_path(&a)).unwrap();
    assert_eq!(m.command, "synth");
    assert_eq!(m.seed, 9);
    assert_eq!(m.outputs, vec![a.clone()]);
    let jobs = confkern(&[
        "--jobs", "1", "synth", "--sigma", "0.5,2", "--trials", "4", "--test", "300", "--seed", "9",
    ]);
    assert_eq!(String::from_utf8(jobs.stdout).unwrap(), text);
}

#[test]
fn identity_transform_has_no_effect() {
    let o = confkern(&[
        "synth",
        "--transform",
        "d3",
        "--kappa",
        "0",
        "--sigma",
        "0.5",
        "--trials",
        "3",
        "--test",
        "200",
    ]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[5], row[6]);
    assert_eq!(row[7], "0.00000");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&confkern(&["--help"])), 0);
    assert_eq!(code(&confkern(&["synth"])), 1);
    assert_eq!(
        code(&confkern(&["synth", "--sigma", "1", "--transform", "dcos"])),
        1
    );
    assert_eq!(code(&confkern(&["synth", "--sigma", "1", "--tau", "2"])), 1);
    assert_eq!(code(&confkern(&["frobnicate"])), 1);
    let text = [
        "text",
        "--task",
        "ovr",
        "--positive",
        "earn",
        "--kernel",
        "gaussian",
        "--gamma",
        "0.01",
        "--c",
        "10",
    ];
    let missing = confkern(&text);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("CONFKERN_CORPUS"));
    let mut nodir = text.to_vec();
    nodir.extend(["--corpus", "/definitely/not/here"]);
    assert_eq!(code(&confkern(&nodir)), 2);
    let mut gc_l2 = nodir.clone();
    gc_l2[6] = "gc";
    gc_l2.extend(["--norm", "l2"]);
    assert_eq!(code(&confkern(&gc_l2)), 1);
    // A cap of one pass cannot reach the tolerance on this problem.
    let nc = confkern(&[
        "synth",
        "--sigma",
        "0.05",
        "--trials",
        "1",
        "--test",
        "10",
        "--max-passes",
        "1",
        "--tol",
        "1e-9",
    ]);
    assert_eq!(code(&nc), 3, "{}", String::from_utf8_lossy(&nc.stderr));
}

#[test]
fn data_export() {
    let o = confkern(&["data", "--boundary", "bump", "--train", "5", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,label"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!(r[0].abs() <= 1.0 && r[1].abs() <= 1.0);
        let expected = if r[1] >= 2.0 * (-4.0 * r[0] * r[0]).exp() - 1.0 {
            1.0
        } else {
            -1.0
        };
        assert_eq!(r[2], expected);
    }
}

#[test]
fn geometry_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "1,0\n0.6,0.8\n2,1\n").unwrap();
    let svs = dir.path().join("svs.csv");
    fs::write(&svs, "1,0.2\n0.1,1\n-0.5,0.4\n0.7,-0.7\n").unwrap();
    let out = dir.path().join("g.json");
    let o = confkern(&[
        "geometry",
        "--kernel",
        "gc",
        "--gamma",
        "1",
        "--points",
        s(&pts),
        "--transform",
        "dcos",
        "--svs",
        s(&svs),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    assert_eq!(
        points[0]["g_closed"],
        serde_json::json!([[0.0, 0.0], [0.0, 1.0]])
    );
    for p in points {
        assert!(p["closed_vs_fd"].as_f64().unwrap() < 1e-4);
        assert!(p["null_residual"].as_f64().unwrap() < 1e-10);
        assert!(p["conformal"]["general_vs_specialized"].as_f64().unwrap() < 1e-4);
    }
    assert!(manifest_path(&out).exists());
    let lin = confkern(&["geometry", "--kernel", "linear", "--points", s(&pts)]);
    let v: serde_json::Value = serde_json::from_slice(&lin.stdout).unwrap();
    assert!((v["points"][2]["magnification"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(
        code(&confkern(&[
            "geometry",
            "--kernel",
            "gc",
            "--gamma",
            "1",
            "--points",
            s(&pts),
            "--transform",
            "d2"
        ])),
        1
    );
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    let o = confkern(&["data", "--train", "60", "--seed", "5", "--out", s(&data)]);
    assert_eq!(code(&o), 0);
    let model = dir.path().join("model.json");
    let o = confkern(&[
        "train",
        "--data",
        s(&data),
        "--kernel",
        "gaussian",
        "--gamma",
        "12.5",
        "--c",
        "10",
        "--transform",
        "d2",
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = confkern(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--labelled",
    ]);
    assert_eq!(code(&first), 0);
    let loaded = confkern::output::load_model(&model).unwrap();
    let ts = confkern::output::read_labelled(&data).unwrap();
    let out = String::from_utf8(first.stdout).unwrap();
    for (line, p) in out.lines().skip(1).zip(&ts.points) {
        let score: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert_eq!(score.to_bits(), loaded.decision(p).unwrap().to_bits());
    }
    assert!(String::from_utf8_lossy(&first.stderr).contains("error rate"));
}

fn grid_config(dir: &Path, corpus: &Path) -> std::path::PathBuf {
    let cfg = dir.join("grid.toml");
    fs::write(
        &cfg,
        format!(
            r#"schema_version = 1
corpus = "{}"
topics = ["earn", "acq", "grain"]
min_docs = 5
folds = 3
seed = 2
gammas = [0.5, 5.0]
cs = [10]
norms = ["l1", "l2"]
weightings = ["tf"]

[[tasks]]
kind = "ovr"
positive = "grain"

[[tasks]]
kind = "ovo"
positive = "earn"
negative = "acq"

[[kernels]]
family = "gaussian"
transform = {{ kind = "cosine", m = 3 }}

[[kernels]]
family = "gc"
"#,
            corpus.display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn text_and_grid_on_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("reuters");
    common::write_corpus(&corpus, 24);

    let json = dir.path().join("text.json");
    let vocab = dir.path().join("vocab.tsv");
    let o = Command::new(env!("CARGO_BIN_EXE_confkern"))
        .args([
            "text",
            "--task",
            "ovr",
            "--positive",
            "grain",
            "--kernel",
            "gaussian",
            "--gamma",
            "1",
            "--c",
            "10",
        ])
        .args([
            "--transform",
            "dcos",
            "--folds",
            "3",
            "--topics",
            "earn,acq,grain",
            "--min-docs",
            "5",
        ])
        .args(["--json", s(&json), "--vocab-out", s(&vocab)])
        .env("CONFKERN_CORPUS", &corpus)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with(
        "model,task,norm,tfidf,gamma,C,F1_original,F1_custom,SV_original,SV_custom,p_value\n"
    ));
    assert!(csv.contains("gaussian+dcos,grain vs rest,l1,no,1.00000,10.00000,"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["documents"], 72);
    assert_eq!(report["topic_counts"]["acq"], 24 + 5);
    assert_eq!(report["result"]["folds"].as_array().unwrap().len(), 3);
    let tsv = fs::read_to_string(&vocab).unwrap();
    assert!(tsv.contains("wheat") && !tsv.contains("\tthe\t"));

    let cfg = grid_config(dir.path(), &corpus);
    let out = dir.path().join("grid.csv");
    let gjson = dir.path().join("grid.json");
    let o = confkern(&[
        "grid",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--json",
        s(&gjson),
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let full = fs::read_to_string(&out).unwrap();
    // 2 tasks × (gaussian: 2γ × 2 norms + gc: 2γ × l1 only)
    assert_eq!(full.lines().count(), 1 + 2 * (4 + 2));
    let outcome: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&gjson).unwrap()).unwrap();
    assert_eq!(outcome["shares"][0]["model"], "gaussian+dcos");
    assert_eq!(outcome["shares"][0]["cells"], 8);

    // Forget two cells, then resume: only those two run and the table is
    // byte-identical.
    let mpath = manifest_path(&out);
    let mut m = RunManifest::load(&mpath).unwrap();
    assert!(m.finished_unix.is_some());
    let keys: Vec<String> = m.cells.keys().take(2).cloned().collect();
    for k in &keys {
        m.cells.remove(k);
    }
    m.cells.insert(
        "stale|cell".into(),
        CellRecord::Failed { error: "x".into() },
    );
    m.save(&mpath).unwrap();
    fs::remove_file(&out).unwrap();
    let o = confkern(&["grid", "--config", s(&cfg), "--out", s(&out), "--resume"]);
    assert_eq!(code(&o), 0);
    let log = String::from_utf8_lossy(&o.stderr);
    assert!(log.contains("12 cells, 10 already done"), "{log}");
    assert_eq!(log.matches("] ").count(), 2);
    assert_eq!(fs::read_to_string(&out).unwrap(), full);

    // A changed config refuses to resume.
    fs::write(
        &cfg,
        fs::read_to_string(&cfg)
            .unwrap()
            .replace("seed = 2", "seed = 3"),
    )
    .unwrap();
    assert_eq!(
        code(&confkern(&[
            "grid",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--resume"
        ])),
        1
    );
}
