//! Run configuration and the commands behind the `goodat` binary.
//!
//! Commands share one output directory. With no explicit paths the stages
//! chain through it: `synth` writes `id/` and `ood/`, `pretrain` reads
//! `id/` and writes `checkpoint.json`, and `detect` and `sweep` read all
//! three. Each command also writes `<command>.cfg`, the fully resolved
//! configuration in the same `key = value` form the `--config` file uses.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

pub use config::{
    format_eta, parse_eta, DetectorParams, GinParams, RunConfig, Seeds, SynthParams, DEFAULT_OUT, OUT_ENV,
};

use crate::detector::{detect, dump_embeddings, sweep, Detection, DetectorConfig, SweepTable};
use crate::error::{Error, Result};
use crate::giblosses::LossBreakdown;
use crate::gnn::{pretrain_logged, GinCheckpoint, GinConfig, PretrainEpoch};
use crate::gradcheck::{all_checks, run_checks, CheckResult};
use crate::graphdata::{
    detect_dataset_name, feature_align, parse_tu_dataset, split_id_dataset, synth_benchmark, write_tu_dataset,
    DatasetBundle, Graph, TuDataset,
};
use crate::masker::write_mask_dump;

pub const SYNTH_ID_NAME: &str = "SYNTH_ID";
pub const SYNTH_OOD_NAME: &str = "SYNTH_OOD";

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::contract(format!("serialization failed: {e}")))
}

fn to_json_lines<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out += &serde_json::to_string(r).map_err(|e| Error::contract(format!("serialization failed: {e}")))?;
        out.push('\n');
    }
    Ok(out)
}

fn write_echo(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let path = cfg.out.join(format!("{command}.cfg"));
    write_file(&path, cfg.to_key_values())?;
    Ok(path)
}

impl RunConfig {
    pub fn id_data_dir(&self) -> PathBuf {
        self.id_data.clone().unwrap_or_else(|| self.out.join("id"))
    }

    pub fn ood_data_dir(&self) -> PathBuf {
        self.ood_data.clone().unwrap_or_else(|| self.out.join("ood"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("checkpoint.json"))
    }
}

/// Reads the single TU dataset stored in `dir`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<TuDataset> {
    let dir = dir.as_ref();
    let name = detect_dataset_name(dir)?;
    parse_tu_dataset(dir, &name)
}

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub id_dir: PathBuf,
    pub ood_dir: PathBuf,
    pub id_graphs: usize,
    pub ood_graphs: usize,
}

/// Writes the synthetic benchmark: `id/` with two motif classes of
/// `synth.id_per_class` graphs each, and `ood/` with `synth.ood_count`
/// dense motif-free graphs.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthOutcome> {
    let s = &cfg.synth;
    let (id, ood) = synth_benchmark(
        s.id_per_class,
        s.ood_count,
        (s.id_min_nodes, s.id_max_nodes),
        (s.ood_min_nodes, s.ood_max_nodes),
        cfg.seed.data,
    )?;

    let id_dir = cfg.out.join("id");
    let ood_dir = cfg.out.join("ood");
    write_tu_dataset(&id_dir, SYNTH_ID_NAME, &id)?;
    write_tu_dataset(&ood_dir, SYNTH_OOD_NAME, &ood)?;
    write_echo(cfg, "synth")?;
    Ok(SynthOutcome {
        id_dir,
        ood_dir,
        id_graphs: id.len(),
        ood_graphs: ood.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PretrainSummary {
    pub config: RunConfig,
    pub gin: GinConfig,
    pub id_dataset: String,
    pub train_graphs: usize,
    pub held_out_graphs: usize,
    pub final_train_accuracy: f64,
    pub final_train_loss: f64,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub checkpoint_path: PathBuf,
    pub checkpoint: GinCheckpoint,
    pub log: Vec<PretrainEpoch>,
    pub summary: PretrainSummary,
}

/// Splits the ID dataset 90/10 under `seed.data` and pretrains on the
/// larger part. When an OOD directory is configured its feature width is
/// folded in, so the checkpoint matches the padded test graphs later.
///
/// Writes `checkpoint.json`, `pretrain_log.jsonl` (one line per epoch) and
/// `pretrain.json` under the output directory.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PretrainOutcome> {
    let start = Instant::now();
    let id = load_dataset(cfg.id_data_dir())?;
    let mut graphs = id.graphs;
    if let Some(dir) = &cfg.ood_data {
        let mut ood = load_dataset(dir)?.graphs;
        feature_align(&mut graphs, &mut ood);
    }
    if graphs.iter().any(|g| g.label.is_none()) {
        return Err(Error::contract("every ID graph needs a label"));
    }
    let total = graphs.len();
    let (train, _) = split_id_dataset(graphs, cfg.seed.data)?;
    let feature_dim = train[0].feature_dim();
    let gin = cfg.gin_config(feature_dim, id.num_classes);
    let (checkpoint, log) = pretrain_logged(&train, &gin)?;

    let checkpoint_path = cfg.out.join("checkpoint.json");
    write_file(&checkpoint_path, checkpoint.to_json()?)?;
    write_file(&cfg.out.join("pretrain_log.jsonl"), to_json_lines(&log)?)?;
    let summary = PretrainSummary {
        config: cfg.clone(),
        gin,
        id_dataset: id.name,
        train_graphs: train.len(),
        held_out_graphs: total - train.len(),
        final_train_accuracy: checkpoint.meta().final_train_accuracy,
        final_train_loss: checkpoint.meta().final_train_loss,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    write_file(&cfg.out.join("pretrain.json"), to_json(&summary)?)?;
    write_echo(cfg, "pretrain")?;
    Ok(PretrainOutcome {
        checkpoint_path,
        checkpoint,
        log,
        summary,
    })
}

/// Checkpoint and test set as `detect` and `sweep` see them.
#[derive(Clone, Debug)]
pub struct DetectInputs {
    pub checkpoint: GinCheckpoint,
    pub bundle: DatasetBundle,
    pub id_dataset: String,
    pub ood_dataset: String,
}

/// Loads the checkpoint and rebuilds the test set: the same 90/10 split
/// `pretrain` used, with the held-out tenth paired with as many OOD graphs.
pub fn load_detect_inputs(cfg: &RunConfig) -> Result<DetectInputs> {
    let checkpoint = GinCheckpoint::load(cfg.checkpoint_path())?;
    let id = load_dataset(cfg.id_data_dir())?;
    let ood = load_dataset(cfg.ood_data_dir())?;
    if id.num_classes != checkpoint.num_classes() {
        return Err(Error::contract(format!(
            "checkpoint has {} classes, dataset {} has {}",
            checkpoint.num_classes(),
            id.name,
            id.num_classes
        )));
    }
    let provenance = format!("{} (ID) vs {} (OOD)", id.name, ood.name);
    let bundle = DatasetBundle::from_protocol(id.graphs, id.num_classes, ood.graphs, cfg.seed.data, provenance)?;
    if bundle.feature_dim != checkpoint.feature_dim() {
        return Err(Error::contract(format!(
            "test graphs have {} features, checkpoint expects {}",
            bundle.feature_dim,
            checkpoint.feature_dim()
        )));
    }
    Ok(DetectInputs {
        checkpoint,
        bundle,
        id_dataset: id.name,
        ood_dataset: ood.name,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectSummary {
    pub config: RunConfig,
    pub detector: DetectorConfig,
    pub checkpoint: PathBuf,
    pub provenance: String,
    pub test_graphs: usize,
    pub ood_graphs: usize,
    pub eta_used: Option<f64>,
    pub auc: Option<f64>,
    pub mean_score_id: Option<f64>,
    pub mean_score_ood: Option<f64>,
    pub final_losses: LossBreakdown,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug)]
pub struct DetectOutcome {
    pub detection: Detection,
    pub test_graphs: Vec<Graph>,
    pub summary: DetectSummary,
    pub scores_path: PathBuf,
}

/// Trains one mask per test graph and scores it. Writes `scores.csv`,
/// `summary.json`, `loss_history.jsonl`, `masks.json` and, with
/// `detector.dump_embeddings`, `embeddings.csv`.
pub fn cmd_detect(cfg: &RunConfig) -> Result<DetectOutcome> {
    let start = Instant::now();
    let inputs = load_detect_inputs(cfg)?;
    let det_cfg = cfg.detector_config();
    let detection = detect(&inputs.checkpoint, &inputs.bundle.test_graphs, &det_cfg)?;
    let report = &detection.report;

    let scores_path = cfg.out.join("scores.csv");
    write_file(&scores_path, report.scores_csv())?;
    write_file(
        &cfg.out.join("loss_history.jsonl"),
        to_json_lines(&detection.run.history)?,
    )?;
    write_mask_dump(cfg.out.join("masks.json"), &detection.run.masks)?;
    if cfg.detector.dump_embeddings {
        dump_embeddings(
            &inputs.checkpoint,
            &inputs.bundle.test_graphs,
            &detection.run.masks,
            cfg.out.join("embeddings.csv"),
        )?;
    }
    let test = &inputs.bundle.test_graphs;
    let summary = DetectSummary {
        config: cfg.clone(),
        detector: det_cfg,
        checkpoint: cfg.checkpoint_path(),
        provenance: inputs.bundle.provenance.clone(),
        test_graphs: test.len(),
        ood_graphs: test.iter().filter(|g| g.ood_flag == Some(true)).count(),
        eta_used: report.eta_used,
        auc: report.auc,
        mean_score_id: report.mean_score(false),
        mean_score_ood: report.mean_score(true),
        final_losses: detection.run.final_losses.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    write_file(&cfg.out.join("summary.json"), to_json(&summary)?)?;
    write_echo(cfg, "detect")?;
    Ok(DetectOutcome {
        detection,
        test_graphs: inputs.bundle.test_graphs,
        summary,
        scores_path,
    })
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub table: SweepTable,
    pub path: PathBuf,
}

/// AUC over the `sweep.alphas × sweep.betas` grid, written to `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let inputs = load_detect_inputs(cfg)?;
    let table = sweep(
        &inputs.checkpoint,
        &inputs.bundle.test_graphs,
        &cfg.sweep_alphas,
        &cfg.sweep_betas,
        &cfg.detector_config(),
    )?;
    let path = cfg.out.join("sweep.csv");
    write_file(&path, table.to_csv())?;
    write_echo(cfg, "sweep")?;
    Ok(SweepOutcome { table, path })
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckOutcome {
    pub results: Vec<CheckResult>,
    pub passed: bool,
    pub elapsed: Duration,
}

/// Runs every finite-difference check at `gradcheck.points` sample points
/// seeded by `seed.detect`, and writes `gradcheck.json`.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<GradcheckOutcome> {
    let start = Instant::now();
    let results = run_checks(&all_checks()?, cfg.gradcheck_points, cfg.seed.detect)?;
    let outcome = GradcheckOutcome {
        passed: results.iter().all(|r| r.passed),
        results,
        elapsed: start.elapsed(),
    };
    #[derive(Serialize)]
    struct Report<'a> {
        config: &'a RunConfig,
        #[serde(flatten)]
        outcome: &'a GradcheckOutcome,
    }
    write_file(
        &cfg.out.join("gradcheck.json"),
        to_json(&Report {
            config: cfg,
            outcome: &outcome,
        })?,
    )?;
    write_echo(cfg, "gradcheck")?;
    Ok(outcome)
}
