//! AUC over the α × β grid used for parameter sensitivity.

use goodat::detector::{sweep, DetectorConfig, DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID};
use goodat::gnn::{pretrain, GinConfig};
use goodat::graphdata::{synth_benchmark, DatasetBundle};

fn main() -> goodat::Result<()> {
    let (id, ood) = synth_benchmark(100, 100, (10, 20), (20, 30), 1)?;
    let bundle = DatasetBundle::from_protocol(id, 2, ood, 1, "synthetic")?;
    let ckpt = pretrain(&bundle.train_graphs, &GinConfig::new(bundle.feature_dim, 2))?;
    let table = sweep(
        &ckpt,
        &bundle.test_graphs,
        &DEFAULT_ALPHA_GRID,
        &DEFAULT_BETA_GRID,
        &DetectorConfig::default(),
    )?;
    print!("{}", table.to_csv());
    Ok(())
}
