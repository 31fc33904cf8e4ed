//! Pretrains the GIN classifier on 90% of the synthetic ID graphs, saves
//! the checkpoint and verifies that it reloads to the same predictions.

use goodat::gnn::{argmax, pretrain_logged, GinCheckpoint, GinConfig};
use goodat::graphdata::{split_id_dataset, synth_benchmark};

fn main() -> goodat::Result<()> {
    let (id, _) = synth_benchmark(100, 0, (10, 20), (20, 30), 0)?;
    let (train, held_out) = split_id_dataset(id, 0)?;
    let config = GinConfig::new(train[0].feature_dim(), 2);
    let (ckpt, log) = pretrain_logged(&train, &config)?;
    for e in log.iter().step_by(10).chain(log.last()) {
        println!(
            "epoch {:>3}  loss {:.4}  accuracy {:.3}",
            e.epoch, e.mean_loss, e.accuracy
        );
    }

    let correct = held_out
        .iter()
        .filter(|g| argmax(ckpt.forward_graph(g).unwrap().logits.as_slice()) == g.label.unwrap())
        .count();
    println!("held-out accuracy {}/{}", correct, held_out.len());

    let path = std::env::temp_dir().join("goodat-example-checkpoint.json");
    ckpt.save(&path)?;
    let reloaded = GinCheckpoint::load(&path)?;
    for g in &held_out {
        assert_eq!(ckpt.pseudo_label(g)?, reloaded.pseudo_label(g)?);
    }
    println!("checkpoint round-trips through {}", path.display());
    Ok(())
}
