//! Experiment runs through the harness: reproducibility, reload and comparison.

use std::fs;
use std::path::Path;

use staytime_lab::base_models::BaseKind;
use staytime_lab::harness::{cmd_compare, cmd_evaluate, cmd_train, ExperimentConfig, ExperimentReport};

fn tiny(out: &Path, model: BaseKind, lcu: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(
        r#"
        name = "tiny"
        seeds = [3, 4]

        [dataset.synthetic]
        n_users = 40
        n_videos = 80
        n_impressions = 2000

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
    cfg.output_dir = out.to_path_buf();
    cfg.model = model;
    cfg.lcu = lcu;
    cfg
}

#[test]
fn reruns_give_identical_reports_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), BaseKind::D2q, true);
    let first = cmd_train(&cfg).unwrap();
    let written = fs::read_to_string(cfg.report_path()).unwrap();
    let ckpt = fs::read(cfg.checkpoint_path(4)).unwrap();

    let second = cmd_train(&cfg).unwrap();
    assert_eq!(first.canonical_json().unwrap(), second.canonical_json().unwrap());
    assert_eq!(ckpt, fs::read(cfg.checkpoint_path(4)).unwrap());
    let reread = ExperimentReport::from_json(&written).unwrap();
    assert_eq!(reread.canonical_json().unwrap(), first.canonical_json().unwrap());
    assert!(first.generated_at.is_some());
}

#[test]
fn evaluate_reproduces_training_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), BaseKind::Wlr, true);
    let trained = cmd_train(&cfg).unwrap();
    let evaluated = cmd_evaluate(&cfg).unwrap();
    for (a, b) in trained.seeds.iter().zip(&evaluated.seeds) {
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.exposure, b.exposure);
    }
    assert!(dir.path().join("tiny-lcu-wlr.evaluate.report.json").exists());

    let other = tiny(dir.path(), BaseKind::Vr, true);
    assert!(cmd_evaluate(&other).is_err());
}

#[test]
fn compare_reports_deltas_and_wins() {
    let dir = tempfile::tempdir().unwrap();
    let base = cmd_train(&tiny(dir.path(), BaseKind::Pcr, false)).unwrap();
    let lcu = cmd_train(&tiny(dir.path(), BaseKind::Pcr, true)).unwrap();
    let cmp = cmd_compare(&[base.clone(), lcu.clone()]).unwrap();
    assert_eq!(cmp.runs, vec!["tiny-pcr".to_string(), "tiny-lcu-pcr".to_string()]);
    let row = cmp.rows.iter().find(|r| r.metric == "xauc").unwrap();
    assert_eq!(row.deltas[0], lcu.mean["xauc"] - base.mean["xauc"]);
    assert_eq!(row.wins[0].1, 2);
    assert!(cmp.to_csv().lines().count() > cmp.rows.len());
}

#[test]
fn ndt_reports_have_no_staytime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_train(&tiny(dir.path(), BaseKind::Ndt, false)).unwrap();
    assert!(r.mean.contains_key("xauc"));
    assert!(!r.mean.contains_key("rmse"));
    assert!(r.seeds.iter().all(|s| s.exposure.values().all(|g| g.rmse.is_none())));
}
