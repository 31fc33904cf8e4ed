//! Graphs, the TU text format, the ID/OOD split protocol and synthetic data.

mod graph;
mod split;
mod synth;
mod tu;

pub use graph::{feature_align, Graph};
pub use split::{build_test_set, split_id_dataset, DatasetBundle};
pub use synth::{synth_benchmark, synth_generate, SynthKind, MAX_SYNTH_NODES, MIN_SYNTH_NODES};
pub use tu::{detect_dataset_name, parse_tu_dataset, write_tu_dataset, TuDataset};
