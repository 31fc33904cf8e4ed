//! Test-time out-of-distribution detection for graphs.
//!
//! A frozen GIN classifier is paired with one learnable mask per test graph.
//! Each mask splits its graph into an informative subgraph `Z = G ⊙ M` and a
//! remainder `Z' = G - Z`. The masks are trained on the unlabeled test set
//! against three information-bottleneck losses, and the subgraph loss of each
//! trained mask becomes the graph's OOD score.
//!
//! Module map:
//!
//! - [`diffmath`]: dense tensors, a define-by-run reverse-mode tape and Adam.
//! - [`graphdata`]: graphs, the TU text format, split protocol, synthetic data.
//! - [`gnn`]: the GIN backbone, pretraining and checkpoint files.
//! - [`masker`]: per-graph feature/edge masks.
//! - [`giblosses`]: subgraph, masked-graph and separation losses.
//! - [`detector`]: masker training, scoring, thresholds, AUC, sweeps.
//! - [`cli`]: run configuration and the command implementations behind the
//!   `goodat` binary.
//! - [`gradcheck`]: finite-difference verification of every differentiable op.

pub mod cli;
pub mod detector;
pub mod diffmath;
pub mod error;
pub mod giblosses;
pub mod gnn;
pub mod gradcheck;
pub mod graphdata;
pub mod masker;

pub use error::{Error, Result};
