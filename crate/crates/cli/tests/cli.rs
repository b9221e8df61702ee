use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_staytime-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.toml");
    fs::write(
        &path,
        r#"
name = "tiny"
seeds = [1, 2]
output_dir = "out"

[dataset.synthetic]
n_users = 40
n_videos = 80
n_impressions = 1500

[train]
epochs = 2
batch_size = 64

[train.model]
model_dim = 8
user_embedding_dim = 4
projection_hidden = 8
head_hidden = [8, 8]
aux_hidden = [8, 4]
"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn generate_train_evaluate_compare_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");

    let msg = ok(&["generate", "--config", &cfg]);
    assert!(msg.contains("wrote 7 files"), "{msg}");
    for f in ["users.csv", "manifest.json", "video_embeddings.lcue", "comment_embeddings.lcue"] {
        assert!(out.join("data").join(f).exists(), "{f}");
    }

    ok(&["train", "--config", &cfg, "--model", "vr"]);
    ok(&["train", "--config", &cfg, "--model", "vr", "--lcu", "on"]);
    assert!(out.join("checkpoints/tiny-lcu-vr-seed2.lcuw").exists());
    let eval = ok(&["evaluate", "--config", &cfg, "--model", "vr", "--lcu", "on"]);
    assert!(eval.contains("xauc"));

    let base = out.join("tiny-vr.report.json");
    let lcu = out.join("tiny-lcu-vr.report.json");
    let csv = dir.path().join("cmp.csv");
    let table = ok(&[
        "compare",
        base.to_str().unwrap(),
        lcu.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(table.contains("tiny-lcu-vr") && table.contains("ndcg@5"));
    assert!(fs::read_to_string(&csv).unwrap().starts_with("metric,run,value,delta"));

    let curves = ok(&["curves", "--config", &cfg]);
    assert_eq!(curves.lines().count(), 4);
    let header = fs::read_to_string(out.join("curves/duration.csv")).unwrap();
    assert!(header.starts_with("bin_lo,bin_hi,mean,variance,count\n"));
}

#[test]
fn seed_override_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let missing = run(&["evaluate", "--config", &cfg, "--model", "d2q", "--seed", "9"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing checkpoint"));

    ok(&["train", "--config", &cfg, "--model", "pcr", "--seed", "9"]);
    let report = fs::read_to_string(dir.path().join("out/tiny-pcr.report.json")).unwrap();
    assert!(report.contains("\"seed\": 9"));

    assert!(!run(&["train", "--config", &cfg, "--model", "xgb"]).status.success());
    assert!(!run(&["compare", "only-one.json"]).status.success());
}
