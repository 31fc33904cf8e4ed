use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::diffmath::{AdamConfig, AdamState, Tape};
use crate::error::{Error, Result};
use crate::giblosses::{graph_losses, loss_total, subgraph_loss, GraphLossValues, LossBreakdown, LossConfig};
use crate::gnn::GinCheckpoint;
use crate::graphdata::Graph;
use crate::masker::{init_masks, mask_graph, GraphMask};

/// Batch losses of the masks entering one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub l_s: f64,
    pub l_m: f64,
    pub l_d: f64,
    pub l_g: f64,
    pub mean_overlap: f64,
}

#[derive(Clone, Debug)]
pub struct MaskerRun {
    pub masks: Vec<GraphMask>,
    /// Pseudo-labels of the unmasked graphs, fixed before training.
    pub surrogate_labels: Vec<usize>,
    pub history: Vec<EpochLosses>,
    /// Batch losses of the trained masks.
    pub final_losses: LossBreakdown,
    /// Per-graph `l_s` of the trained masks.
    pub scores: Vec<f64>,
}

/// Per-graph `l_s` on `Z = G ⊙ M`. Reads nothing but the graph structure,
/// the mask and the surrogate label.
pub fn ood_score(
    ckpt: &GinCheckpoint,
    graph: &Graph,
    mask: &GraphMask,
    surrogate_label: usize,
    loss: &LossConfig,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (_, pair) = mask_graph(&mut tape, graph, mask, false)?;
    let z = ckpt.forward_on(&mut tape, pair.subgraph_x, pair.subgraph_a)?;
    let l = subgraph_loss(&mut tape, z, surrogate_label, loss)?;
    Ok(tape.scalar(l))
}

fn check_inputs(ckpt: &GinCheckpoint, graphs: &[Graph]) -> Result<()> {
    if graphs.is_empty() {
        return Err(Error::contract("no test graphs"));
    }
    if let Some((i, g)) = graphs
        .iter()
        .enumerate()
        .find(|(_, g)| g.feature_dim() != ckpt.feature_dim())
    {
        return Err(Error::contract(format!(
            "test graph {i} has feature width {}, checkpoint expects {}",
            g.feature_dim(),
            ckpt.feature_dim()
        )));
    }
    Ok(())
}

struct Lane {
    mask: GraphMask,
    history: Vec<(GraphLossValues, f64)>,
    last: GraphLossValues,
}

/// Minimizes `l_g` over the masks with Adam. Every graph's mask is an
/// independent lane whose objective is its share `(l_s + l_m + l_d) / N` of
/// the batch loss, so the lanes run in parallel and agree exactly with
/// full-batch training.
pub fn train_masker(ckpt: &GinCheckpoint, test_graphs: &[Graph], config: &DetectorConfig) -> Result<MaskerRun> {
    config.validate()?;
    check_inputs(ckpt, test_graphs)?;
    let labels = test_graphs
        .par_iter()
        .map(|g| ckpt.pseudo_label(g))
        .collect::<Result<Vec<_>>>()?;
    let masks = init_masks(test_graphs, config.init_logit, config.seed);
    let share = 1.0 / test_graphs.len() as f64;
    let loss = &config.loss;

    let lanes = test_graphs
        .par_iter()
        .zip(masks)
        .zip(labels.par_iter())
        .map(|((graph, mut mask), &label)| -> Result<Lane> {
            let mut adam = AdamState::new(
                AdamConfig::with_learning_rate(config.learning_rate),
                &[&mask.feature_logits, &mask.edge_logits],
            );
            let mut history = Vec::with_capacity(config.epochs);
            for _ in 0..config.epochs {
                let overlap = mask.overlap_size(graph);
                let mut tape = Tape::new();
                let (bound, terms) = graph_losses(&mut tape, ckpt, graph, &mask, label, loss, true)?;
                history.push((terms.values(&tape), overlap));
                let objective = terms.objective(&mut tape, loss)?;
                let root = tape.scale(objective, share);
                tape.backward(root)?;
                mask.feature_logits.collect_grad(&tape, bound.feature_logits);
                mask.edge_logits.collect_grad(&tape, bound.edge_logits);
                adam.update(&mut [&mut mask.feature_logits, &mut mask.edge_logits])?;
            }
            let mut tape = Tape::new();
            let (_, terms) = graph_losses(&mut tape, ckpt, graph, &mask, label, loss, false)?;
            Ok(Lane {
                last: terms.values(&tape),
                mask,
                history,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = lanes.len() as f64;
    let history = (0..config.epochs)
        .map(|epoch| -> Result<EpochLosses> {
            let values: Vec<GraphLossValues> = lanes.iter().map(|l| l.history[epoch].0.clone()).collect();
            let b = loss_total(&values, loss)?;
            Ok(EpochLosses {
                epoch,
                l_s: b.l_s,
                l_m: b.l_m,
                l_d: b.l_d,
                l_g: b.l_g,
                mean_overlap: lanes.iter().map(|l| l.history[epoch].1).sum::<f64>() / n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let final_values: Vec<GraphLossValues> = lanes.iter().map(|l| l.last.clone()).collect();
    let final_losses = loss_total(&final_values, loss)?;
    let scores = final_values.iter().map(|v| v.l_s).collect();
    Ok(MaskerRun {
        masks: lanes.into_iter().map(|l| l.mask).collect(),
        surrogate_labels: labels,
        history,
        final_losses,
        scores,
    })
}
