//! Test-time masker training, OOD scoring, thresholds, AUC and sweeps.
//!
//! The score of a test graph is its subgraph loss `l_s` after the graph's
//! mask has been trained; higher means more likely OOD. A graph is flagged
//! when `score ≥ η`.

mod embeddings;
mod metrics;
mod sweep;
mod train;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use embeddings::{
    cloud_separation, dump_embeddings, mask_embeddings, read_embedding_dump, CloudSeparation, EmbeddingRow,
};
pub use metrics::{auc, decide, quantile};
pub use sweep::{parse_grid, sweep, SweepTable, DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID};
pub use train::{ood_score, train_masker, EpochLosses, MaskerRun};

use crate::error::{Error, Result};
use crate::giblosses::LossConfig;
use crate::gnn::GinCheckpoint;
use crate::graphdata::Graph;
use crate::masker::DEFAULT_INIT_LOGIT;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum EtaMode {
    Quantile(f64),
    Fixed(f64),
    None,
}

impl Default for EtaMode {
    fn default() -> Self {
        EtaMode::Quantile(0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub epochs: usize,
    /// Adam step size on the mask logits.
    pub learning_rate: f64,
    pub loss: LossConfig,
    pub eta_mode: EtaMode,
    pub seed: u64,
    pub init_logit: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-2,
            loss: LossConfig::default(),
            eta_mode: EtaMode::default(),
            seed: 0,
            init_logit: DEFAULT_INIT_LOGIT,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract("detector learning rate must be positive"));
        }
        if let EtaMode::Quantile(q) = self.eta_mode {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::contract(format!("quantile {q} outside (0, 1)")));
            }
        }
        self.loss.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphScore {
    pub graph_index: usize,
    pub score: f64,
    pub decision: Option<bool>,
    pub ood_flag: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub graphs: Vec<GraphScore>,
    pub auc: Option<f64>,
    pub eta_used: Option<f64>,
    pub config: DetectorConfig,
    pub wall_time_secs: f64,
}

impl OodReport {
    pub fn scores(&self) -> Vec<f64> {
        self.graphs.iter().map(|g| g.score).collect()
    }

    /// Mean score over graphs with the given ground-truth flag.
    pub fn mean_score(&self, ood: bool) -> Option<f64> {
        let picked: Vec<f64> = self
            .graphs
            .iter()
            .filter(|g| g.ood_flag == Some(ood))
            .map(|g| g.score)
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }

    /// `graph_index,score,decision,ood_flag` rows; unknown fields are empty.
    pub fn scores_csv(&self) -> String {
        let bit = |b: Option<bool>| b.map_or(String::new(), |b| (b as u8).to_string());
        let mut out = String::from("graph_index,score,decision,ood_flag\n");
        for g in &self.graphs {
            out.push_str(&format!(
                "{},{:?},{},{}\n",
                g.graph_index,
                g.score,
                bit(g.decision),
                bit(g.ood_flag)
            ));
        }
        out
    }
}

/// Report plus the trained masks it was computed from.
#[derive(Clone, Debug)]
pub struct Detection {
    pub report: OodReport,
    pub run: MaskerRun,
}

/// Trains the masks, scores every graph, applies the threshold and, when
/// every graph carries a ground-truth flag, computes the AUC.
pub fn detect(ckpt: &GinCheckpoint, test_graphs: &[Graph], config: &DetectorConfig) -> Result<Detection> {
    let start = Instant::now();
    let run = train_masker(ckpt, test_graphs, config)?;
    let scores = run.scores.clone();
    let (decisions, eta_used) = decide(&scores, config.eta_mode)?;
    let flags: Option<Vec<bool>> = test_graphs.iter().map(|g| g.ood_flag).collect();
    let auc = match &flags {
        Some(f) if f.iter().any(|&b| b) && f.iter().any(|&b| !b) => Some(auc(&scores, f)?),
        _ => None,
    };
    let graphs = scores
        .iter()
        .enumerate()
        .map(|(i, &score)| GraphScore {
            graph_index: i,
            score,
            decision: decisions.as_ref().map(|d| d[i]),
            ood_flag: test_graphs[i].ood_flag,
        })
        .collect();
    let report = OodReport {
        graphs,
        auc,
        eta_used,
        config: config.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(Detection { report, run })
}
