use proptest::prelude::*;

use goodat::detector::{auc, decide, EtaMode};
use goodat::diffmath::{Tape, Tensor};
use goodat::giblosses::{
    joint_density, kl_unit_gaussian_value, separation_stats, LossConfig, SeparationStatValues, SeparationStats,
};
use goodat::gnn::{GinCheckpoint, GinConfig, GinWeights, TrainingMeta};
use goodat::graphdata::{parse_tu_dataset, write_tu_dataset, Graph};

fn graph_strategy(max_nodes: usize, max_dim: usize) -> impl Strategy<Value = Graph> {
    (2..=max_nodes, 1..=max_dim).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-2.0..2.0f64, n * d),
            prop::collection::vec(any::<bool>(), n * (n - 1) / 2),
            Just((n, d)),
        )
            .prop_map(|(x, bits, (n, d))| {
                let mut edges = Vec::new();
                let mut k = 0;
                for u in 0..n {
                    for v in u + 1..n {
                        if bits[k] {
                            edges.push((u, v));
                        }
                        k += 1;
                    }
                }
                Graph::from_edges(Tensor::new(vec![n, d], x).unwrap(), n, &edges).unwrap()
            })
    })
}

fn checkpoint(d: usize, seed: u64) -> GinCheckpoint {
    let cfg = GinConfig {
        hidden_dim: 8,
        seed,
        ..GinConfig::new(d, 3)
    };
    let meta = TrainingMeta {
        final_train_accuracy: 0.0,
        final_train_loss: 0.0,
        seed,
        epochs_run: 0,
    };
    GinCheckpoint::new(cfg.clone(), GinWeights::init(&cfg).unwrap(), meta).unwrap()
}

fn row(v: &[f64]) -> Tensor {
    Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
}

fn density(z: &[f64], r: &[f64], stats: SeparationStatValues) -> f64 {
    let mut tape = Tape::new();
    let zv = tape.constant(row(z));
    let rv = tape.constant(row(r));
    let s = SeparationStats::constants(&mut tape, stats);
    let d = joint_density(&mut tape, zv, rv, s).unwrap();
    tape.scalar(d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gin_is_permutation_invariant(g in graph_strategy(10, 3), seed in 0u64..50, shuffle in any::<u64>()) {
        let ckpt = checkpoint(g.feature_dim(), seed);
        let n = g.num_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = shuffle;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = ckpt.forward_graph(&g).unwrap();
        let b = ckpt.forward_graph(&g.permuted(&perm).unwrap()).unwrap();
        for (x, y) in a.embedding.iter().zip(&b.embedding) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn tu_files_round_trip(graphs in prop::collection::vec(graph_strategy(8, 2), 1..6), labels in prop::collection::vec(0usize..3, 6)) {
        let dim = graphs[0].feature_dim();
        let graphs: Vec<Graph> = graphs
            .into_iter()
            .filter(|g| g.feature_dim() == dim)
            .zip(&labels)
            .map(|(g, &l)| g.with_label(l))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        write_tu_dataset(dir.path(), "RT", &graphs).unwrap();
        let back = parse_tu_dataset(dir.path(), "RT").unwrap();
        prop_assert_eq!(back.graphs.len(), graphs.len());
        let mut values: Vec<usize> = graphs.iter().map(|g| g.label.unwrap()).collect();
        values.sort();
        values.dedup();
        for (a, b) in graphs.iter().zip(&back.graphs) {
            prop_assert_eq!(a.adjacency(), b.adjacency());
            prop_assert_eq!(a.features(), b.features());
            prop_assert_eq!(values[b.label.unwrap()], a.label.unwrap());
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_origin(h in prop::collection::vec(-5.0..5.0f64, 1..16)) {
        let kl = kl_unit_gaussian_value(&h, 50.0);
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl == 0.0, h.iter().all(|&v| v == 0.0));
        prop_assert_eq!(kl_unit_gaussian_value(&vec![0.0; h.len()], 50.0), 0.0);
    }

    #[test]
    fn density_is_positive_and_falls_along_rays(
        dir in prop::collection::vec(-1.0..1.0f64, 6),
        s1 in 0.2..3.0f64,
        s2 in 0.2..3.0f64,
        rho in -0.9..0.9f64,
    ) {
        prop_assume!(dir.iter().any(|v| v.abs() > 1e-3));
        let stats = SeparationStatValues { sigma_z: s1, sigma_remainder: s2, rho };
        let mut last = f64::INFINITY;
        for step in 0..8 {
            let t = step as f64 * 0.5;
            let z: Vec<f64> = dir[..3].iter().map(|v| v * t).collect();
            let r: Vec<f64> = dir[3..].iter().map(|v| v * t).collect();
            let d = density(&z, &r, stats);
            prop_assert!(d > 0.0 || t > 0.0);
            prop_assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn quantile_flags_roughly_the_upper_tail(scores in prop::collection::vec(-10.0..10.0f64, 2..80), q in 0.05..0.95f64) {
        let (decisions, eta) = decide(&scores, EtaMode::Quantile(q)).unwrap();
        let decisions = decisions.unwrap();
        let eta = eta.unwrap();
        for (s, d) in scores.iter().zip(&decisions) {
            prop_assert_eq!(*d, *s >= eta);
        }
        let n = scores.len() as f64;
        let frac = decisions.iter().filter(|&&d| d).count() as f64 / n;
        prop_assert!((frac - (1.0 - q)).abs() <= 1.0 / n + 1e-12, "{} vs {}", frac, 1.0 - q);
    }

    #[test]
    fn auc_ignores_monotone_rescaling(
        scores in prop::collection::vec(0u8..10, 4..40),
        flags in prop::collection::vec(any::<bool>(), 40),
    ) {
        let mut flags = flags[..scores.len()].to_vec();
        flags[0] = true;
        flags[1] = false;
        let raw: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
        let squashed: Vec<f64> = raw.iter().map(|s| (s * 0.3).tanh() * 7.0 - 2.0).collect();
        let a = auc(&raw, &flags).unwrap();
        prop_assert_eq!(a, auc(&squashed, &flags).unwrap());
        let flipped: Vec<bool> = flags.iter().map(|f| !f).collect();
        prop_assert!((a + auc(&raw, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn all_equal_scores_are_all_flagged() {
    let scores = [0.7; 5];
    for eta in [EtaMode::Fixed(0.7), EtaMode::Fixed(0.1), EtaMode::Quantile(0.5)] {
        let (d, _) = decide(&scores, eta).unwrap();
        assert!(d.unwrap().iter().all(|&b| b));
    }
    let (d, eta) = decide(&scores, EtaMode::None).unwrap();
    assert!(d.is_none() && eta.is_none());
}

#[test]
fn separation_statistics_edge_cases() {
    let cfg = LossConfig::default();
    let stats = |z: &[f64], r: &[f64]| {
        let mut tape = Tape::new();
        let zv = tape.constant(row(z));
        let rv = tape.constant(row(r));
        separation_stats(&mut tape, zv, rv, &cfg).map(|s| s.values(&tape))
    };
    let same = stats(&[0.5, 1.5, -2.0], &[0.5, 1.5, -2.0]).unwrap();
    assert_eq!(same.rho, 0.99);
    let constant = stats(&[3.0, 3.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
    assert_eq!(constant.sigma_z, 1e-4);
    let opposite = stats(&[1.0, -1.0], &[-1.0, 1.0]).unwrap();
    assert_eq!(
        (opposite.sigma_z, opposite.sigma_remainder, opposite.rho),
        (1.0, 1.0, -0.99)
    );
    assert!(stats(&[1.0], &[2.0]).is_err());
}

#[test]
fn density_vanishes_in_the_tails() {
    let stats = SeparationStatValues {
        sigma_z: 1.0,
        sigma_remainder: 1.0,
        rho: 0.0,
    };
    assert!(density(&[40.0, -40.0], &[40.0, 35.0], stats) < 1e-300);
}
