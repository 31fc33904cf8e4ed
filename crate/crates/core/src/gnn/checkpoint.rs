//! Frozen backbone and its on-disk form.
//!
//! The file is a JSON document. Every tensor is stored as
//! `{name, shape, data}` with row-major data; numbers are written in the
//! shortest decimal form that parses back to the same `f64`. A small
//! reference graph and the outputs it produced at save time are embedded,
//! and loading recomputes them bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{argmax, GinConfig, GinOutput, GinWeights};
use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{CheckpointCheck, Error, Result};
use crate::graphdata::Graph;

pub const CHECKPOINT_VERSION: &str = "goodat-gin/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub final_train_accuracy: f64,
    pub final_train_loss: f64,
    pub seed: u64,
    pub epochs_run: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceCheck {
    pub features: Tensor,
    pub adjacency: Tensor,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Pretrained, immutable GIN classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct GinCheckpoint {
    config: GinConfig,
    weights: GinWeights,
    meta: TrainingMeta,
    reference: ReferenceCheck,
}

/// Plain-value result of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GinForward {
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
}

impl GinCheckpoint {
    pub fn new(config: GinConfig, weights: GinWeights, meta: TrainingMeta) -> Result<Self> {
        let (features, adjacency) = reference_graph(config.feature_dim);
        let mut ckpt = Self {
            config,
            weights,
            meta,
            reference: ReferenceCheck {
                features,
                adjacency,
                embedding: vec![],
                logits: vec![],
            },
        };
        let out = ckpt.forward(&ckpt.reference.features, &ckpt.reference.adjacency)?;
        ckpt.reference.embedding = out.embedding;
        ckpt.reference.logits = out.logits;
        Ok(ckpt)
    }

    pub fn config(&self) -> &GinConfig {
        &self.config
    }

    pub fn weights(&self) -> &GinWeights {
        &self.weights
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn reference(&self) -> &ReferenceCheck {
        &self.reference
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Binds the frozen weights as constants on `tape` and runs the GIN.
    pub fn forward_on(&self, tape: &mut Tape, features: Var, adjacency: Var) -> Result<GinOutput> {
        let width = tape.value(features).cols();
        if width != self.config.feature_dim {
            return Err(Error::contract(format!(
                "graph has feature width {width}, checkpoint expects {}",
                self.config.feature_dim
            )));
        }
        self.weights.bind(tape, false, false).forward(tape, features, adjacency)
    }

    /// Forward pass on a possibly weighted adjacency with entries in
    /// `[0, 1]`, symmetric, zero diagonal.
    pub fn forward(&self, features: &Tensor, adjacency: &Tensor) -> Result<GinForward> {
        check_weighted_adjacency(adjacency)?;
        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let a = tape.constant(adjacency.clone());
        let out = self.forward_on(&mut tape, x, a)?;
        Ok(GinForward {
            embedding: tape.value(out.embedding).data().to_vec(),
            logits: tape.value(out.logits).data().to_vec(),
        })
    }

    pub fn forward_graph(&self, graph: &Graph) -> Result<GinForward> {
        self.forward(graph.features(), graph.adjacency())
    }

    /// Argmax class of the unmasked graph; ties go to the smaller index.
    pub fn pseudo_label(&self, graph: &Graph) -> Result<usize> {
        Ok(argmax(&self.forward_graph(graph)?.logits))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_json()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let tensors = self
            .config
            .tensor_layout()
            .into_iter()
            .zip(self.weights.tensors())
            .map(|((name, _), t)| NamedTensor::new(name, t))
            .collect::<Result<Vec<_>>>()?;
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION.to_string(),
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors,
            reference: ReferenceFile {
                features: NamedTensor::new("reference.features".into(), &self.reference.features)?,
                adjacency: NamedTensor::new("reference.adjacency".into(), &self.reference.adjacency)?,
                embedding: self.reference.embedding.clone(),
                logits: self.reference.logits.clone(),
            },
        };
        let mut text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::contract(format!("checkpoint serialization: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let reject = |check, detail: String| Error::Checkpoint { check, detail };
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| reject(CheckpointCheck::Syntax, e.to_string()))?;
        if file.version != CHECKPOINT_VERSION {
            return Err(reject(
                CheckpointCheck::Version,
                format!("found {:?}, expected {CHECKPOINT_VERSION:?}", file.version),
            ));
        }
        file.config
            .validate()
            .map_err(|e| reject(CheckpointCheck::Shape, e.to_string()))?;

        let layout = file.config.tensor_layout();
        if layout.len() != file.tensors.len() {
            return Err(reject(
                CheckpointCheck::Shape,
                format!("expected {} tensors, found {}", layout.len(), file.tensors.len()),
            ));
        }
        let mut tensors = Vec::with_capacity(layout.len());
        for ((name, shape), stored) in layout.iter().zip(file.tensors) {
            if &stored.name != name || &stored.shape != shape {
                return Err(reject(
                    CheckpointCheck::Shape,
                    format!(
                        "tensor {:?} {:?} where the configuration implies {name:?} {shape:?}",
                        stored.name, stored.shape
                    ),
                ));
            }
            tensors.push(
                stored
                    .into_tensor()
                    .map_err(|e| reject(CheckpointCheck::Shape, e.to_string()))?,
            );
        }
        let weights = GinWeights::from_tensors(&file.config, tensors)
            .map_err(|e| reject(CheckpointCheck::Shape, e.to_string()))?;

        let reference = ReferenceCheck {
            features: file
                .reference
                .features
                .into_tensor()
                .map_err(|e| reject(CheckpointCheck::Shape, e.to_string()))?,
            adjacency: file
                .reference
                .adjacency
                .into_tensor()
                .map_err(|e| reject(CheckpointCheck::Shape, e.to_string()))?,
            embedding: file.reference.embedding,
            logits: file.reference.logits,
        };
        let ckpt = Self {
            config: file.config,
            weights,
            meta: file.meta,
            reference,
        };
        let out = ckpt
            .forward(&ckpt.reference.features, &ckpt.reference.adjacency)
            .map_err(|e| reject(CheckpointCheck::ReferenceOutput, e.to_string()))?;
        if !bitwise_eq(&out.embedding, &ckpt.reference.embedding) || !bitwise_eq(&out.logits, &ckpt.reference.logits) {
            return Err(reject(
                CheckpointCheck::ReferenceOutput,
                "stored reference outputs differ from a fresh forward pass".into(),
            ));
        }
        Ok(ckpt)
    }
}

fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub(crate) fn check_weighted_adjacency(a: &Tensor) -> Result<()> {
    let n = a.rows();
    if !a.is_matrix() || a.cols() != n {
        return Err(Error::contract(format!(
            "adjacency must be square, got {:?}",
            a.shape()
        )));
    }
    for i in 0..n {
        if a.at(i, i) != 0.0 {
            return Err(Error::contract(format!("adjacency diagonal ({i},{i}) is nonzero")));
        }
        for j in i + 1..n {
            let v = a.at(i, j);
            if !(0.0..=1.0).contains(&v) || v != a.at(j, i) {
                return Err(Error::contract(format!("adjacency entry ({i},{j}) = {v} invalid")));
            }
        }
    }
    Ok(())
}

/// Five nodes: a path with one chord, features varying per node and column.
fn reference_graph(feature_dim: usize) -> (Tensor, Tensor) {
    let n = 5;
    let mut x = Tensor::zeros(vec![n, feature_dim]);
    for i in 0..n {
        for k in 0..feature_dim {
            x.set(i, k, ((i * 7 + k * 3) % 5) as f64 * 0.25 + 0.125);
        }
    }
    let mut a = Tensor::zeros(vec![n, n]);
    for (u, v) in [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)] {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    (x, a)
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NamedTensor {
    fn new(name: String, t: &Tensor) -> Result<Self> {
        if t.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("tensor {name} holds non-finite values")));
        }
        Ok(Self {
            name,
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        })
    }

    fn into_tensor(self) -> Result<Tensor> {
        Tensor::new(self.shape, self.data)
    }
}

#[derive(Serialize, Deserialize)]
struct ReferenceFile {
    features: NamedTensor,
    adjacency: NamedTensor,
    embedding: Vec<f64>,
    logits: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: String,
    config: GinConfig,
    meta: TrainingMeta,
    tensors: Vec<NamedTensor>,
    reference: ReferenceFile,
}
