use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use goodat::cli::{cmd_detect, cmd_gradcheck, cmd_pretrain, cmd_sweep, cmd_synth, load_dataset, RunConfig};
use goodat::detector::{ood_score, EtaMode};
use goodat::diffmath::Tensor;
use goodat::graphdata::{write_tu_dataset, Graph};
use goodat::masker::init_masks;
use goodat::Error;

const BIN: &str = env!("CARGO_BIN_EXE_goodat");

fn config_in(dir: &Path) -> RunConfig {
    RunConfig {
        out: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

/// Synthetic benchmark plus checkpoint shared by the read-only tests.
fn prepared() -> &'static RunConfig {
    static DIR: OnceLock<(tempfile::TempDir, RunConfig)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config_in(dir.path());
        cmd_synth(&cfg).unwrap();
        cmd_pretrain(&cfg).unwrap();
        (dir, cfg)
    })
    .1
}

/// A config that reads the shared inputs and writes into `out`.
fn reading_prepared(out: &Path) -> RunConfig {
    let base = prepared();
    RunConfig {
        out: out.to_path_buf(),
        id_data: Some(base.id_data_dir()),
        ood_data: Some(base.ood_data_dir()),
        checkpoint: Some(base.checkpoint_path()),
        ..base.clone()
    }
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["id", "ood"] {
        let mut entries: Vec<_> = fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for p in entries {
            out.push((
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            ));
        }
    }
    out
}

#[test]
fn synth_counts_round_trip_and_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = cmd_synth(&config_in(a.path())).unwrap();
    assert_eq!((out.id_graphs, out.ood_graphs), (200, 100));
    cmd_synth(&config_in(b.path())).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));

    let id = load_dataset(a.path().join("id")).unwrap();
    assert_eq!(id.graphs.len(), 200);
    assert_eq!(id.num_classes, 2);
    assert_eq!(id.graphs.iter().filter(|g| g.label == Some(1)).count(), 100);
    assert_eq!(load_dataset(a.path().join("ood")).unwrap().graphs.len(), 100);
}

#[test]
fn pretrain_is_accurate_and_reproducible() {
    let base = prepared();
    let dir = tempfile::tempdir().unwrap();
    let again = cmd_pretrain(&RunConfig {
        out: dir.path().to_path_buf(),
        id_data: Some(base.id_data_dir()),
        ..base.clone()
    })
    .unwrap();
    assert!(
        again.summary.final_train_accuracy >= 0.95,
        "{}",
        again.summary.final_train_accuracy
    );
    assert_eq!(again.summary.train_graphs, 180);
    assert_eq!(
        fs::read(base.checkpoint_path()).unwrap(),
        fs::read(&again.checkpoint_path).unwrap()
    );
    let log = fs::read_to_string(dir.path().join("pretrain_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), base.gin.epochs);
}

#[test]
fn missing_label_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path());
    cmd_synth(&cfg).unwrap();
    fs::remove_file(dir.path().join("id/SYNTH_ID_graph_labels.txt")).unwrap();
    match cmd_pretrain(&cfg) {
        Err(Error::MissingFile(p)) => assert!(p.ends_with("SYNTH_ID_graph_labels.txt")),
        other => panic!("{other:?}"),
    }
    let status = Command::new(BIN)
        .args(["pretrain", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("graph_labels"));
}

#[test]
fn malformed_grid_is_a_usage_error() {
    let mut cfg = RunConfig::default();
    assert!(matches!(cfg.set("sweep.alphas", "0.1,,0.3"), Err(Error::Usage(_))));
    assert!(matches!(cfg.set("sweep.betas", "-0.1"), Err(Error::Usage(_))));
    let out = Command::new(BIN)
        .args(["sweep", "--alpha-grid", "0.1;0.2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_cell_sweep_matches_detect() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reading_prepared(dir.path());
    cfg.loss.alpha = 0.1;
    cfg.sweep_alphas = vec![0.1];
    cfg.sweep_betas = vec![cfg.loss.beta];
    let table = cmd_sweep(&cfg).unwrap().table;
    let detected = cmd_detect(&cfg).unwrap().summary.auc.unwrap();
    assert_eq!(table.auc, vec![vec![detected]]);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn zero_epochs_scores_the_initial_masks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reading_prepared(dir.path());
    cfg.detector.epochs = 0;
    let out = cmd_detect(&cfg).unwrap();
    assert!(out.detection.run.history.is_empty());
    let det = cfg.detector_config();
    let ckpt = goodat::gnn::GinCheckpoint::load(cfg.checkpoint_path()).unwrap();
    let masks = init_masks(&out.test_graphs, det.init_logit, det.seed);
    for (i, g) in out.test_graphs.iter().enumerate() {
        let expected = ood_score(&ckpt, g, &masks[i], ckpt.pseudo_label(g).unwrap(), &det.loss).unwrap();
        assert_eq!(out.detection.report.graphs[i].score, expected);
    }
}

#[test]
fn disabled_losses_report_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["detect", "--disable-lm", "--disable-ld", "--epochs", "5", "--out"])
        .arg(dir.path())
        .arg("--id-data")
        .arg(prepared().id_data_dir())
        .arg("--ood-data")
        .arg(prepared().ood_data_dir())
        .arg("--checkpoint")
        .arg(prepared().checkpoint_path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let losses = &summary["final_losses"];
    assert_eq!(losses["l_m"], 0.0);
    assert_eq!(losses["l_d"], 0.0);
    assert_eq!(losses["l_g"], losses["l_s"]);
    assert_eq!(summary["config"]["loss"]["enable_masked"], false);
    for line in fs::read_to_string(dir.path().join("loss_history.jsonl"))
        .unwrap()
        .lines()
    {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["l_m"], 0.0);
    }
}

#[test]
fn detect_writes_and_echoes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reading_prepared(dir.path());
    cfg.detector.dump_embeddings = true;
    cfg.detector.eta = EtaMode::Fixed(5.0);
    cmd_detect(&cfg).unwrap();
    for f in [
        "scores.csv",
        "summary.json",
        "loss_history.jsonl",
        "masks.json",
        "embeddings.csv",
        "detect.cfg",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let mut echoed = RunConfig::default();
    echoed.apply_file(dir.path().join("detect.cfg")).unwrap();
    assert_eq!(echoed, cfg);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["eta_used"], 5.0);
    assert_eq!(summary["detector"]["epochs"], 50);
    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().next(), Some("graph_index,score,decision,ood_flag"));
    assert_eq!(scores.lines().count(), 41);
}

#[test]
fn flags_override_the_file_and_env_sets_the_default_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_file = dir.path().join("run.cfg");
    fs::write(
        &cfg_file,
        "synth.id_per_class = 6\nsynth.ood_count = 4\nseed.data = 3\n",
    )
    .unwrap();
    let env_out = dir.path().join("from-env");
    let out = Command::new(BIN)
        .args(["synth", "--seed-data", "9", "--config"])
        .arg(&cfg_file)
        .env("GOODAT_OUT", &env_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut echoed = RunConfig::default();
    echoed.apply_file(env_out.join("synth.cfg")).unwrap();
    assert_eq!(echoed.seed.data, 9);
    assert_eq!(echoed.synth.id_per_class, 6);
    assert_eq!(echoed.out, env_out);
    assert_eq!(load_dataset(env_out.join("ood")).unwrap().graphs.len(), 4);

    let explicit = dir.path().join("explicit");
    fs::write(&cfg_file, format!("out = {}\n", explicit.display())).unwrap();
    let cfg = RunConfig::resolve(Some(&cfg_file), &[]).unwrap();
    assert_eq!(cfg.out, explicit);
}

#[test]
fn feature_width_mismatch_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let wide: Vec<Graph> = (0..30)
        .map(|i| {
            Graph::from_edges(Tensor::new(vec![3, 3], vec![0.5; 9]).unwrap(), 3, &[(0, 1), (1, 2)])
                .unwrap()
                .with_label(i % 2)
        })
        .collect();
    write_tu_dataset(dir.path().join("wide"), "WIDE", &wide).unwrap();
    let mut cfg = reading_prepared(dir.path());
    cfg.ood_data = Some(dir.path().join("wide"));
    match cmd_detect(&cfg) {
        Err(Error::Contract(msg)) => assert!(msg.contains("features"), "{msg}"),
        other => panic!("{:?}", other.map(|o| o.summary)),
    }
    assert!(!dir.path().join("scores.csv").exists());
}

#[test]
fn gradcheck_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_gradcheck(&config_in(dir.path())).unwrap();
    assert!(out.passed);
    let status = Command::new(BIN)
        .args(["gradcheck", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success());
    let text = String::from_utf8_lossy(&status.stdout);
    assert_eq!(
        text.lines().filter(|l| l.contains("worst rel")).count(),
        out.results.len()
    );
}
