use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{feature_align, Graph};
use crate::error::{Error, Result};

/// Seeded shuffle into `floor(0.9 N)` training graphs and the held-out rest.
pub fn split_id_dataset(graphs: Vec<Graph>, seed: u64) -> Result<(Vec<Graph>, Vec<Graph>)> {
    if graphs.is_empty() {
        return Err(Error::contract("cannot split an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.shuffle(&mut rng);
    let n_train = graphs.len() * 9 / 10;

    let mut slots: Vec<Option<Graph>> = graphs.into_iter().map(Some).collect();
    let mut take = |i: &usize| slots[*i].take().expect("permutation visits each index once");
    let train = order[..n_train].iter().map(&mut take).collect();
    let held_out = order[n_train..].iter().map(&mut take).collect();
    Ok((train, held_out))
}

/// All held-out ID graphs plus as many OOD graphs drawn without replacement
/// from `ood_pool`, flagged and shuffled together.
pub fn build_test_set(id_held_out: Vec<Graph>, ood_pool: Vec<Graph>, seed: u64) -> Result<Vec<Graph>> {
    let k = id_held_out.len();
    if ood_pool.len() < k {
        return Err(Error::contract(format!(
            "OOD pool has {} graphs, the test set needs {k}",
            ood_pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, ood_pool.len(), k).into_vec();

    let mut pool: Vec<Option<Graph>> = ood_pool.into_iter().map(Some).collect();
    let mut test: Vec<Graph> = id_held_out.into_iter().map(|g| g.with_ood_flag(false)).collect();
    test.extend(
        picked
            .iter()
            .map(|&i| pool[i].take().expect("sampled without replacement").with_ood_flag(true)),
    );
    test.shuffle(&mut rng);
    Ok(test)
}

/// Training and test graphs assembled by the evaluation protocol.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub train_graphs: Vec<Graph>,
    pub test_graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub provenance: String,
}

impl DatasetBundle {
    /// Aligns feature widths, splits the ID graphs 90/10 and pairs the
    /// held-out tenth with an equal number of OOD graphs.
    pub fn from_protocol(
        mut id_graphs: Vec<Graph>,
        num_classes: usize,
        mut ood_pool: Vec<Graph>,
        seed: u64,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if id_graphs.iter().any(|g| g.label.is_none()) {
            return Err(Error::contract("every ID graph needs a label"));
        }
        let feature_dim = feature_align(&mut id_graphs, &mut ood_pool);
        let (train, held_out) = split_id_dataset(id_graphs, seed)?;
        let train_graphs = train.into_iter().map(|g| g.with_ood_flag(false)).collect();
        let test_graphs = build_test_set(held_out, ood_pool, seed.wrapping_add(1))?;
        Ok(Self {
            train_graphs,
            test_graphs,
            num_classes,
            feature_dim,
            provenance: provenance.into(),
        })
    }
}
