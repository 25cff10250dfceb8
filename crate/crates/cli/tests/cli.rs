use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use g2r_cli::run;
use g2r_core::encoder::{load_embeddings, EncoderParams};
use g2r_core::graph::load_graph;

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn ok(args: &[&str]) {
    assert_eq!(run(args.iter().copied()), 0, "g2r {}", args.join(" "));
}

/// Every file in `dir` by name, skipping `train.log`; the `seconds` column of
/// `history.tsv` is dropped since it holds wall-clock times.
fn snapshot(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name == "train.log" {
            continue;
        }
        let mut text = fs::read_to_string(&path).unwrap();
        if name == "history.tsv" {
            text = text
                .lines()
                .map(|l| l.rsplit_once('\t').unwrap().0.to_string() + "\n")
                .collect();
        }
        // Echoed paths differ between the two runs by construction.
        if name == "run_config.json" {
            let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
            v["inputs"] = serde_json::Value::Null;
            text = v.to_string();
        }
        out.insert(name, text);
    }
    out
}

fn small_dataset(dir: &Path) {
    ok(&[
        "gen-synthetic",
        "--out",
        &s(dir),
        "--seed",
        "3",
        "--communities",
        "2",
        "--nodes-per-community",
        "15",
        "--p-in",
        "0.6",
        "--p-out",
        "0.02",
        "--feature-dim",
        "6",
    ]);
}

#[test]
fn gen_synthetic_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-synthetic", "--out", &s(d), "--seed", "0"]);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for name in names {
        let x = fs::read(a.join(&name)).unwrap();
        let y = fs::read(b.join(&name)).unwrap();
        if name == "run_config.json" {
            assert_eq!(snapshot(&a)["run_config.json"], snapshot(&b)["run_config.json"]);
        } else {
            assert_eq!(x, y, "{name:?} differs");
        }
    }
    let g = load_graph(&a).unwrap();
    assert_eq!(g.num_nodes(), 300);
    let sp = g.splits().unwrap();
    assert_eq!((sp.train.len(), sp.val.len(), sp.test.len()), (180, 60, 60));
}

#[test]
fn verify_theory_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("theory");
    assert_eq!(run(["verify-theory", "--trials", "50", "--out", &s(&out)]), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("theory_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["max_residual"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["batteries"].as_array().unwrap().len(), 3);
}

#[test]
fn train_without_dataset_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(run(["train"]), 1);
    assert_eq!(run(["train", "--out", &s(&out)]), 1);
    let missing = tmp.path().join("no-such-dataset");
    assert_eq!(run(["train", "--data", &s(&missing), "--out", &s(&out)]), 1);
    assert!(!out.exists());
}

#[test]
fn validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    assert_eq!(run(["gen-synthetic", "--out", &s(&out), "--p-in", "0.1", "--p-out", "0.5"]), 1);
    assert!(!out.exists());
    assert_eq!(run(["no-such-command"]), 1);
    assert_eq!(run(["--help"]), 0);

    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"train": {"epochz": 3}}"#).unwrap();
    assert_eq!(run(["gen-synthetic", "--out", &s(&out), "--config", &s(&cfg)]), 1);
    assert!(!out.exists());

    let data = tmp.path().join("data");
    small_dataset(&data);
    let run_dir = tmp.path().join("run");
    assert_eq!(run(["train", "--data", &s(&data), "--out", &s(&run_dir), "--lr=-1"]), 1);
    assert_eq!(run(["train", "--data", &s(&data), "--out", &s(&run_dir), "--n-samples", "100000"]), 1);
    assert!(!run_dir.exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"synthetic": {"num_communities": 2, "nodes_per_community": 10, "feature_dim": 4, "seed": 9},
            "splits": {"train": 0.5}}"#,
    )
    .unwrap();
    let out = tmp.path().join("d");
    ok(&["gen-synthetic", "--config", &s(&cfg), "--out", &s(&out), "--feature-dim", "5"]);
    let g = load_graph(&out).unwrap();
    assert_eq!(g.num_nodes(), 20);
    assert_eq!(g.feature_dim(), 5);
    assert_eq!(g.splits().unwrap().train.len(), 10);

    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(echo["command"], "gen-synthetic");
    assert_eq!(echo["config"]["synthetic"]["seed"], 9);
    assert_eq!(echo["config"]["synthetic"]["feature_dim"], 5);
    assert_eq!(echo["config"]["synthetic"]["p_in"], 0.5);
    assert_eq!(echo["config"]["splits"]["val"], 0.2);
}

#[test]
fn full_pipeline_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);

    let mut snaps = Vec::new();
    for rep in 0..2 {
        let root = tmp.path().join(format!("rep{rep}"));
        let (train, embed, probe, comm, diag) = (
            root.join("train"),
            root.join("embed"),
            root.join("probe"),
            root.join("communities"),
            root.join("diagnose"),
        );
        ok(&[
            "train",
            "--data",
            &s(&data),
            "--out",
            &s(&train),
            "--epochs",
            "15",
            "--lr",
            "0.01",
            "--hidden-dim",
            "16",
            "--output-dim",
            "4",
        ]);
        ok(&[
            "embed",
            "--data",
            &s(&data),
            "--checkpoint",
            &s(&train.join("checkpoint.json")),
            "--out",
            &s(&embed),
        ]);
        let emb = s(&embed.join("embeddings.tsv"));
        ok(&["probe", "--data", &s(&data), "--embeddings", &emb, "--out", &s(&probe)]);
        ok(&[
            "communities",
            "--data",
            &s(&data),
            "--embeddings",
            &emb,
            "--out",
            &s(&comm),
            "--k-min",
            "2",
            "--k-max",
            "4",
        ]);
        ok(&["diagnose", "--data", &s(&data), "--embeddings", &emb, "--out", &s(&diag)]);

        let params = EncoderParams::load(train.join("checkpoint.json")).unwrap();
        assert_eq!(params.dims().output, 4);
        let history = fs::read_to_string(train.join("history.tsv")).unwrap();
        assert_eq!(history.lines().count(), 16);
        assert!(history.starts_with("epoch\tobjective\tterm1\tterm2\tgrad_norm\tseconds\n"));
        assert!(fs::read_to_string(train.join("train.log")).unwrap().starts_with("started\t"));

        let z = load_embeddings(embed.join("embeddings.tsv")).unwrap();
        assert_eq!(z.shape(), (4, 30));
        assert!(z.column_norms().iter().all(|n| (n - 1.0).abs() < 1e-9 || *n == 0.0));

        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(probe.join("metrics.json")).unwrap()).unwrap();
        let acc = m["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert_eq!(m["accuracy"], m["test_accuracy"]);

        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(comm.join("metrics.json")).unwrap()).unwrap();
        assert!((2..=4).contains(&m["k"].as_u64().unwrap()));
        let table = fs::read_to_string(comm.join("communities.tsv")).unwrap();
        assert_eq!(table.lines().count(), 4);
        assert_eq!(fs::read_to_string(comm.join("assignments.tsv")).unwrap().lines().count(), 31);

        let gram = fs::read_to_string(diag.join("cosine_gram.csv")).unwrap();
        assert_eq!(gram.lines().count(), 31);
        let pca = fs::read_to_string(diag.join("pca.csv")).unwrap();
        assert!(pca.starts_with("node,pc1,pc2,label\n"));
        let sines = fs::read_to_string(diag.join("class_pair_sines.tsv")).unwrap();
        assert!(sines.starts_with("class_a\tclass_b\trank_a\trank_b\tsine_product\n"));
        assert_eq!(sines.lines().count(), 2);

        let mut snap = BTreeMap::new();
        for dir in [&train, &embed, &probe, &comm, &diag] {
            let stage = dir.file_name().unwrap().to_string_lossy().into_owned();
            for (name, text) in snapshot(dir) {
                snap.insert(format!("{stage}/{name}"), text);
            }
        }
        snaps.push(snap);
    }
    assert_eq!(snaps[0], snaps[1]);
}

#[test]
fn embed_rejects_mismatched_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (d1, d2) = (tmp.path().join("d1"), tmp.path().join("d2"));
    small_dataset(&d1);
    ok(&["gen-synthetic", "--out", &s(&d2), "--nodes-per-community", "5", "--feature-dim", "3"]);
    let train = tmp.path().join("train");
    ok(&[
        "train",
        "--data",
        &s(&d1),
        "--out",
        &s(&train),
        "--epochs",
        "1",
        "--hidden-dim",
        "4",
        "--output-dim",
        "2",
        "--encoder",
        "mlp",
    ]);
    let out = tmp.path().join("emb");
    let ckpt = s(&train.join("checkpoint.json"));
    assert_eq!(run(["embed", "--data", &s(&d2), "--checkpoint", &ckpt, "--out", &s(&out)]), 1);
    assert!(!out.exists());
}
