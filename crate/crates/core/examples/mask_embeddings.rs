//! Dumps the subgraph and remainder embeddings of every trained mask for
//! external plotting, and summarizes how far apart the two clouds sit.

use goodat::detector::{cloud_separation, detect, dump_embeddings, DetectorConfig};
use goodat::gnn::{pretrain, GinConfig};
use goodat::graphdata::{synth_benchmark, DatasetBundle};

fn main() -> goodat::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "embeddings.csv".into());
    let (id, ood) = synth_benchmark(100, 100, (10, 20), (20, 30), 0)?;
    let bundle = DatasetBundle::from_protocol(id, 2, ood, 0, "synthetic")?;
    let ckpt = pretrain(&bundle.train_graphs, &GinConfig::new(bundle.feature_dim, 2))?;

    for epochs in [0, 50] {
        let cfg = DetectorConfig {
            epochs,
            ..DetectorConfig::default()
        };
        let d = detect(&ckpt, &bundle.test_graphs, &cfg)?;
        let rows = dump_embeddings(&ckpt, &bundle.test_graphs, &d.run.masks, &path)?;
        let sep = cloud_separation(&rows)?;
        println!(
            "{epochs:>2} epochs: centroid distance {:.3}, mean within-cloud spread {:.3}",
            sep.centroid_distance, sep.mean_within_spread
        );
    }
    println!("rows for the trained masks -> {path}");
    Ok(())
}
