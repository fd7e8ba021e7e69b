use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rxkernel::kernels::read_gram;

fn rx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rxkernel"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = rx(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_cohort(dir: &Path) {
    ok(dir, &["generate", "--n", "40", "--seed", "3", "--max-events", "8"]);
}

#[test]
fn generate_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &["generate", "--preset", "dm", "--n", "60", "--seed", "11"]);
    }
    for f in ["events.tsv", "demographics.tsv", "disease.cfg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn uti_preset_matches_published_split() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["generate", "--preset", "uti", "--n", "400", "--seed", "7"]);
    let out = ok(d.path(), &["ingest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("400 cases: 188 failures"), "{text}");
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(rx(d.path(), &["generate", "--preset", "flu"]).status.code(), Some(2));
    assert_eq!(rx(d.path(), &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn missing_input_is_reported() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nowhere");
    let out = rx(d.path(), &["ingest", "--data", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("events.tsv"), "{err}");
}

#[test]
fn gram_files_round_trip_and_wl_zero_is_vertex_histogram() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path());
    ok(d.path(), &["gram", "--wl-h", "0", "--csv"]);
    for k in ["wl", "tp", "vh"] {
        let g = read_gram(fs::File::open(d.path().join(format!("{k}.kgrm"))).unwrap()).unwrap();
        assert_eq!(g.len(), 40);
        for i in 0..g.len() {
            assert!((g.values[[i, i]] - 1.0).abs() < 1e-12, "{k} diagonal");
        }
    }
    assert_eq!(
        fs::read(d.path().join("wl.csv")).unwrap(),
        fs::read(d.path().join("vh.csv")).unwrap()
    );
}

#[test]
fn train_writes_model_and_trace() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path());
    ok(d.path(), &["gram"]);
    ok(
        d.path(),
        &["train", "--metric", "cosine", "--embed-dim", "8", "--fusion-dim", "4", "--classifier-dim", "4", "--max-epochs", "5"],
    );
    assert!(d.path().join("model_cosine.knet").is_file());
    let trace = fs::read_to_string(d.path().join("trace_cosine.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6, "{trace}");
    assert!(!d.path().join("model_euclidean.knet").exists());
    ok(d.path(), &["export-embeddings", "--metric", "cosine"]);
    let csv = fs::read_to_string(d.path().join("embeddings_cosine.csv")).unwrap();
    assert!(csv.starts_with("id,split,label,e_0,e_1,e_2,e_3,x2d,y2d"));
}

#[test]
fn smoke_evaluation_is_quick_and_complete() {
    let d = tempfile::tempdir().unwrap();
    small_cohort(d.path());
    let start = Instant::now();
    ok(
        d.path(),
        &["evaluate", "--k", "2", "--embed-dim", "16", "--fusion-dim", "8", "--classifier-dim", "8"],
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "{secs} s");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
    let modes = report["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 2);
    for m in modes {
        assert_eq!(m["configurations"].as_array().unwrap().len(), 4);
    }
    let table = fs::read_to_string(d.path().join("report.txt")).unwrap();
    assert!(table.contains("lr_baseline") && table.contains(" ± "));
    for f in ["embeddings_balanced_euclidean.csv", "embeddings_imbalanced_cosine.csv", "evaluate.cfg"] {
        assert!(d.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "n = 30\nseed = 5\n").unwrap();
    ok(d.path(), &["--config", cfg.to_str().unwrap(), "generate", "--n", "24"]);
    let used = fs::read_to_string(d.path().join("generate.cfg")).unwrap();
    assert!(used.contains("n = 24") && used.contains("seed = 5"), "{used}");
    let demo = fs::read_to_string(d.path().join("demographics.tsv")).unwrap();
    assert_eq!(demo.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count(), 24);
}
