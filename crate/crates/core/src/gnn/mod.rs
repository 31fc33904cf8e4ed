//! GIN backbone: sum aggregation over a (possibly weighted) adjacency, a
//! two-transform MLP per layer, sum pooling and a linear classifier head.
//!
//! After [`pretrain`] the weights are frozen inside a [`GinCheckpoint`];
//! nothing outside pretraining can mutate them.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{GinCheckpoint, GinForward, ReferenceCheck, TrainingMeta, CHECKPOINT_VERSION};
pub use model::{argmax, BoundGin, GinConfig, GinLayer, GinOutput, GinWeights};
pub use train::{pretrain, pretrain_logged, PretrainEpoch};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Tensor;
    use crate::error::{CheckpointCheck, Error};
    use crate::graphdata::Graph;

    fn untrained(feature_dim: usize, classes: usize) -> GinCheckpoint {
        let cfg = GinConfig {
            hidden_dim: 8,
            seed: 4,
            ..GinConfig::new(feature_dim, classes)
        };
        let meta = TrainingMeta {
            final_train_accuracy: 0.0,
            final_train_loss: 0.0,
            seed: 4,
            epochs_run: 0,
        };
        GinCheckpoint::new(cfg.clone(), GinWeights::init(&cfg).unwrap(), meta).unwrap()
    }

    fn sample_graph() -> Graph {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 1.0]]).unwrap();
        Graph::from_edges(x, 4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap()
    }

    #[test]
    fn isolated_identical_nodes_stay_identical() {
        let ckpt = untrained(1, 2);
        let g = Graph::from_edges(Tensor::ones(vec![2, 1]), 2, &[]).unwrap();
        // embedding of the pair is twice that of one node
        let single = Graph::from_edges(Tensor::ones(vec![1, 1]), 1, &[]).unwrap();
        let e2 = ckpt.forward_graph(&g).unwrap().embedding;
        let e1 = ckpt.forward_graph(&single).unwrap().embedding;
        for (a, b) in e2.iter().zip(&e1) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn disjoint_union_doubles_embedding() {
        let ckpt = untrained(2, 3);
        let g = sample_graph();
        let gg = g.disjoint_union(&g).unwrap();
        let e = ckpt.forward_graph(&g).unwrap().embedding;
        let ee = ckpt.forward_graph(&gg).unwrap().embedding;
        for (a, b) in ee.iter().zip(&e) {
            assert!((a - 2.0 * b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn feature_width_mismatch_rejected() {
        let ckpt = untrained(3, 2);
        assert!(matches!(ckpt.forward_graph(&sample_graph()), Err(Error::Contract(_))));
    }

    #[test]
    fn weighted_adjacency_validated() {
        let ckpt = untrained(2, 2);
        let g = sample_graph();
        let mut a = g.adjacency().clone();
        a.set(0, 1, 0.3);
        assert!(ckpt.forward(g.features(), &a).is_err());
        a.set(1, 0, 0.3);
        assert!(ckpt.forward(g.features(), &a).is_ok());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let ckpt = untrained(2, 3);
        let back = GinCheckpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn load_rejections() {
        let ckpt = untrained(2, 3);
        let text = ckpt.to_json().unwrap();

        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            GinCheckpoint::from_json(truncated),
            Err(Error::Checkpoint {
                check: CheckpointCheck::Syntax,
                ..
            })
        ));

        let wrong_version = text.replace(CHECKPOINT_VERSION, "goodat-gin/0");
        assert!(matches!(
            GinCheckpoint::from_json(&wrong_version),
            Err(Error::Checkpoint {
                check: CheckpointCheck::Version,
                ..
            })
        ));

        let wrong_hidden = text.replacen("\"hidden_dim\": 8", "\"hidden_dim\": 9", 1);
        assert_ne!(wrong_hidden, text);
        assert!(matches!(
            GinCheckpoint::from_json(&wrong_hidden),
            Err(Error::Checkpoint {
                check: CheckpointCheck::Shape,
                ..
            })
        ));

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let first = &mut value["reference"]["embedding"][0];
        *first = serde_json::json!(first.as_f64().unwrap() + 1e-9);
        assert!(matches!(
            GinCheckpoint::from_json(&value.to_string()),
            Err(Error::Checkpoint {
                check: CheckpointCheck::ReferenceOutput,
                ..
            })
        ));
    }

    #[test]
    fn pretrain_zero_epochs_records_accuracy() {
        let graphs: Vec<Graph> = (0..4).map(|i| sample_graph().with_label(i % 2)).collect();
        let cfg = GinConfig {
            epochs: 0,
            hidden_dim: 4,
            ..GinConfig::new(2, 2)
        };
        let ckpt = pretrain(&graphs, &cfg).unwrap();
        assert_eq!(ckpt.weights(), &GinWeights::init(&cfg).unwrap());
        let acc = ckpt.meta().final_train_accuracy;
        assert!(acc == 0.5, "{acc}");
    }

    #[test]
    fn pretrain_rejects_unlabeled_or_missing_class() {
        let cfg = GinConfig::new(2, 2);
        assert!(pretrain(&[sample_graph()], &cfg).is_err());
        assert!(pretrain(&[sample_graph().with_label(0)], &cfg).is_err());
    }
}
