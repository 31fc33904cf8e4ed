//! Trains the masks with every loss and with each loss alone, averaging
//! AUC over five data seeds.
//!
//! ```text
//! cargo run --release --example ablation
//! ```

use goodat::detector::{detect, DetectorConfig};
use goodat::gnn::{pretrain, GinConfig};
use goodat::graphdata::{synth_benchmark, DatasetBundle};

const CONFIGS: [(&str, bool, bool, bool); 4] = [
    ("l_s only", true, false, false),
    ("l_m only", false, true, false),
    ("l_d only", false, false, true),
    ("all three", true, true, true),
];

fn main() -> goodat::Result<()> {
    let seeds = 0..5u64;
    let mut sums = [0.0; CONFIGS.len()];
    for seed in seeds.clone() {
        let (id, ood) = synth_benchmark(100, 100, (10, 20), (20, 30), seed)?;
        let bundle = DatasetBundle::from_protocol(id, 2, ood, seed, "synthetic")?;
        let gin = GinConfig {
            seed,
            ..GinConfig::new(bundle.feature_dim, 2)
        };
        let ckpt = pretrain(&bundle.train_graphs, &gin)?;
        let mut row = Vec::new();
        for (i, &(_, s, m, d)) in CONFIGS.iter().enumerate() {
            let mut cfg = DetectorConfig {
                seed,
                ..DetectorConfig::default()
            };
            cfg.loss = cfg.loss.only(s, m, d);
            let auc = detect(&ckpt, &bundle.test_graphs, &cfg)?.report.auc.unwrap();
            sums[i] += auc;
            row.push(format!("{auc:.3}"));
        }
        println!("seed {seed}: {}", row.join("  "));
    }
    let n = seeds.count() as f64;
    for ((name, ..), sum) in CONFIGS.iter().zip(sums) {
        println!("{name:<10} mean AUC {:.3}", sum / n);
    }
    Ok(())
}
