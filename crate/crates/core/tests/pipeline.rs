use std::sync::OnceLock;

use goodat::detector::{
    cloud_separation, detect, dump_embeddings, read_embedding_dump, sweep, Detection, DetectorConfig,
};
use goodat::gnn::{pretrain, GinCheckpoint, GinConfig};
use goodat::graphdata::{synth_benchmark, DatasetBundle};

struct Fixture {
    ckpt: GinCheckpoint,
    bundle: DatasetBundle,
    detection: Detection,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (id, ood) = synth_benchmark(100, 100, (10, 20), (20, 30), 0).unwrap();
        let bundle = DatasetBundle::from_protocol(id, 2, ood, 0, "synthetic").unwrap();
        let ckpt = pretrain(&bundle.train_graphs, &GinConfig::new(bundle.feature_dim, 2)).unwrap();
        let detection = detect(&ckpt, &bundle.test_graphs, &DetectorConfig::default()).unwrap();
        Fixture {
            ckpt,
            bundle,
            detection,
        }
    })
}

#[test]
fn training_lowers_the_batch_objective() {
    let run = &fixture().detection.run;
    assert_eq!(run.history.len(), 50);
    let first = run.history[0].l_g;
    let last = run.history.last().unwrap().l_g;
    assert!(last < first, "{first} -> {last}");
    assert!(run.final_losses.l_g < first);
    let f = &run.final_losses;
    assert_eq!(f.l_g, f.l_s + f.l_m + f.l_d);
    assert_eq!(run.scores, f.per_graph_l_s);
}

#[test]
fn embedding_dump_round_trips_and_separates() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.csv");
    let rows = dump_embeddings(&f.ckpt, &f.bundle.test_graphs, &f.detection.run.masks, &path).unwrap();
    let hidden = f.ckpt.config().hidden_dim;
    assert_eq!(rows.len(), 40);
    let text = std::fs::read_to_string(&path).unwrap();
    for line in text.lines() {
        assert_eq!(line.split(',').count(), 2 + 2 * hidden);
    }
    assert_eq!(read_embedding_dump(&path).unwrap(), rows);
    let sep = cloud_separation(&rows).unwrap();
    assert!(sep.centroid_distance > sep.mean_within_spread, "{sep:?}");
}

#[test]
fn scores_never_depend_on_ground_truth_flags() {
    let f = fixture();
    let blind: Vec<_> = f
        .bundle
        .test_graphs
        .iter()
        .cloned()
        .map(|mut g| {
            g.ood_flag = None;
            g
        })
        .collect();
    let d = detect(&f.ckpt, &blind, &DetectorConfig::default()).unwrap();
    assert_eq!(d.run.scores, f.detection.run.scores);
    assert_eq!(d.report.auc, None);
    assert!(d.report.graphs.iter().all(|g| g.ood_flag.is_none()));
}

#[test]
fn repeated_sweeps_agree() {
    let f = fixture();
    let base = DetectorConfig {
        epochs: 10,
        ..DetectorConfig::default()
    };
    let a = sweep(&f.ckpt, &f.bundle.test_graphs, &[0.1, 0.5], &[0.01, 0.09], &base).unwrap();
    let b = sweep(&f.ckpt, &f.bundle.test_graphs, &[0.1, 0.5], &[0.01, 0.09], &base).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.auc.len(), 2);
    assert!(a.auc.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn held_out_graphs_are_classified() {
    let f = fixture();
    let id: Vec<_> = f
        .bundle
        .test_graphs
        .iter()
        .filter(|g| g.ood_flag == Some(false))
        .collect();
    let correct = id
        .iter()
        .filter(|g| f.ckpt.pseudo_label(g).unwrap() == g.label.unwrap())
        .count();
    assert!(correct as f64 >= 0.9 * id.len() as f64, "{correct}/{}", id.len());
}
