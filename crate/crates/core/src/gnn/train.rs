use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{GinCheckpoint, TrainingMeta};
use super::model::{argmax, GinConfig, GinWeights};
use crate::diffmath::{AdamConfig, AdamState, Parameter, Tape};
use crate::error::{Error, Result};
use crate::graphdata::Graph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Full-batch pretraining of a fresh GIN on labeled graphs.
pub fn pretrain(train_graphs: &[Graph], config: &GinConfig) -> Result<GinCheckpoint> {
    pretrain_logged(train_graphs, config).map(|(ckpt, _)| ckpt)
}

/// [`pretrain`] plus one record per epoch. The record for epoch `e` holds
/// loss and accuracy of the weights entering that epoch.
pub fn pretrain_logged(train_graphs: &[Graph], config: &GinConfig) -> Result<(GinCheckpoint, Vec<PretrainEpoch>)> {
    config.validate()?;
    let labels = train_graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            g.label
                .ok_or_else(|| Error::contract(format!("training graph {i} is unlabeled")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= config.num_classes) {
        return Err(Error::contract(format!(
            "label {bad} outside {} classes",
            config.num_classes
        )));
    }
    let mut present = vec![false; config.num_classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().any(|p| !p) {
        return Err(Error::contract(format!(
            "training set covers {} of {} classes",
            present.iter().filter(|p| **p).count(),
            config.num_classes
        )));
    }
    if let Some(g) = train_graphs.iter().find(|g| g.feature_dim() != config.feature_dim) {
        return Err(Error::contract(format!(
            "graph feature width {} does not match configured {}",
            g.feature_dim(),
            config.feature_dim
        )));
    }

    let mut weights = GinWeights::init(config)?;
    let trainable = trainable_mask(config);
    let mut params: Vec<Parameter> = weights
        .tensors()
        .into_iter()
        .zip(&trainable)
        .filter(|(_, &t)| t)
        .map(|(t, _)| Parameter::new(t.clone()))
        .collect();
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(config.learning_rate),
        &params.iter().collect::<Vec<_>>(),
    );

    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let pass = batch_pass(&weights, config, train_graphs, &labels, true)?;
        for (p, g) in params.iter_mut().zip(&pass.grads) {
            p.add_grad(g);
        }
        adam.update(&mut params.iter_mut().collect::<Vec<_>>())?;
        let mut updated = params.iter();
        for (t, train) in weights.tensors_mut().into_iter().zip(&trainable) {
            if *train {
                *t = updated
                    .next()
                    .expect("one parameter per trainable tensor")
                    .value
                    .clone();
            }
        }
        log.push(PretrainEpoch {
            epoch,
            mean_loss: pass.mean_loss,
            accuracy: pass.accuracy,
        });
    }

    let last = batch_pass(&weights, config, train_graphs, &labels, false)?;
    let meta = TrainingMeta {
        final_train_accuracy: last.accuracy,
        final_train_loss: last.mean_loss,
        seed: config.seed,
        epochs_run: config.epochs,
    };
    Ok((GinCheckpoint::new(config.clone(), weights, meta)?, log))
}

fn trainable_mask(config: &GinConfig) -> Vec<bool> {
    config
        .tensor_layout()
        .iter()
        .map(|(name, _)| !name.ends_with(".eps") || config.train_eps)
        .collect()
}

struct BatchPass {
    mean_loss: f64,
    accuracy: f64,
    grads: Vec<Vec<f64>>,
}

/// Mean cross-entropy over the batch and, when asked, its gradient with
/// respect to every trainable tensor. Graphs are processed independently and
/// reduced in index order.
fn batch_pass(
    weights: &GinWeights,
    config: &GinConfig,
    graphs: &[Graph],
    labels: &[usize],
    with_grad: bool,
) -> Result<BatchPass> {
    let scale = 1.0 / graphs.len().max(1) as f64;
    let per_graph = graphs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(g, &label)| -> Result<(f64, bool, Vec<Vec<f64>>)> {
            let mut tape = Tape::new();
            let bound = weights.bind(&mut tape, with_grad, config.train_eps);
            let x = tape.constant(g.features().clone());
            let a = tape.constant(g.adjacency().clone());
            let out = bound.forward(&mut tape, x, a)?;
            let ce = tape.cross_entropy(out.logits, label)?;
            let correct = argmax(tape.value(out.logits).data()) == label;
            let loss = tape.scalar(ce);
            if !with_grad {
                return Ok((loss, correct, vec![]));
            }
            let root = tape.scale(ce, scale);
            tape.backward(root)?;
            let grads = bound
                .vars()
                .into_iter()
                .flatten()
                .map(|v| {
                    tape.grad(v)
                        .map_or_else(|| vec![0.0; tape.value(v).numel()], <[f64]>::to_vec)
                })
                .collect();
            Ok((loss, correct, grads))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = 0.0;
    let mut correct = 0usize;
    let mut grads: Vec<Vec<f64>> = Vec::new();
    for (loss, ok, g) in per_graph {
        total += loss;
        correct += ok as usize;
        if grads.is_empty() {
            grads = g;
        } else {
            for (acc, part) in grads.iter_mut().zip(g) {
                acc.iter_mut().zip(part).for_each(|(a, d)| *a += d);
            }
        }
    }
    Ok(BatchPass {
        mean_loss: total * scale,
        accuracy: correct as f64 * scale,
        grads,
    })
}
