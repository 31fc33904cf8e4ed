use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const MIN_SYNTH_NODES: usize = 6;
pub const MAX_SYNTH_NODES: usize = 60;

const BACKGROUND_EDGE_PROB: f64 = 0.1;
const OOD_EDGE_PROB: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Sparse background with planted triangles, label 0.
    IdClass0,
    /// Sparse background with planted 4-stars, label 1.
    IdClass1,
    /// Dense random graph without motifs, unlabeled.
    Ood,
}

/// `count` graphs of `kind` with node counts drawn uniformly from
/// `size_range` (inclusive). Every node carries the single constant feature
/// 1, so only structure tells the classes apart.
///
/// ID graphs receive `max(1, n / 5)` motifs (fewer when the graph is too
/// small) on disjoint node sets. The background is random on the remaining
/// nodes, and each motif hangs off it by one edge from its first node
/// (a triangle corner or the star center).
pub fn synth_generate(kind: SynthKind, count: usize, size_range: (usize, usize), seed: u64) -> Result<Vec<Graph>> {
    let (lo, hi) = size_range;
    if lo > hi || lo < MIN_SYNTH_NODES || hi > MAX_SYNTH_NODES {
        return Err(Error::contract(format!(
            "size range [{lo}, {hi}] must lie within [{MIN_SYNTH_NODES}, {MAX_SYNTH_NODES}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(lo..=hi);
            let g = match kind {
                SynthKind::IdClass0 => motif_graph(&mut rng, n, Motif::Triangle)?.with_label(0),
                SynthKind::IdClass1 => motif_graph(&mut rng, n, Motif::Star)?.with_label(1),
                SynthKind::Ood => {
                    Graph::from_edges(Tensor::ones(vec![n, 1]), n, &random_edges(&mut rng, n, OOD_EDGE_PROB))?
                }
            };
            Ok(g)
        })
        .collect()
}

/// The labeled ID set (`id_per_class` triangle graphs, then as many star
/// graphs) and an OOD pool of `ood_count` dense graphs. The three parts are
/// drawn from `seed`, `seed + 1` and `seed + 2`.
pub fn synth_benchmark(
    id_per_class: usize,
    ood_count: usize,
    id_range: (usize, usize),
    ood_range: (usize, usize),
    seed: u64,
) -> Result<(Vec<Graph>, Vec<Graph>)> {
    let mut id = synth_generate(SynthKind::IdClass0, id_per_class, id_range, seed)?;
    id.extend(synth_generate(
        SynthKind::IdClass1,
        id_per_class,
        id_range,
        seed.wrapping_add(1),
    )?);
    let ood = synth_generate(SynthKind::Ood, ood_count, ood_range, seed.wrapping_add(2))?;
    Ok((id, ood))
}

#[derive(Clone, Copy)]
enum Motif {
    Triangle,
    Star,
}

fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn motif_graph(rng: &mut ChaCha8Rng, n: usize, motif: Motif) -> Result<Graph> {
    let size = match motif {
        Motif::Triangle => 3,
        Motif::Star => 5,
    };
    let mut count = (n / 5).max(1);
    while count * size > n - 1 {
        count -= 1;
    }
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let (planted, background) = nodes.split_at(count * size);

    let mut edges: Vec<(usize, usize)> = random_edges(rng, background.len(), BACKGROUND_EDGE_PROB)
        .into_iter()
        .map(|(u, v)| (background[u], background[v]))
        .collect();
    for c in planted.chunks_exact(size) {
        match motif {
            Motif::Triangle => edges.extend([(c[0], c[1]), (c[1], c[2]), (c[0], c[2])]),
            Motif::Star => edges.extend(c[1..].iter().map(|&leaf| (c[0], leaf))),
        }
        let anchor = background[rng.gen_range(0..background.len())];
        edges.push((c[0], anchor));
    }
    Graph::from_edges(Tensor::ones(vec![n, 1]), n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn has_triangle(g: &Graph) -> bool {
        let a = g.adjacency();
        let n = g.num_nodes();
        (0..n).any(|i| {
            (i + 1..n).any(|j| a.at(i, j) == 1.0 && (j + 1..n).any(|k| a.at(i, k) == 1.0 && a.at(j, k) == 1.0))
        })
    }

    fn has_four_star(g: &Graph) -> bool {
        let a = g.adjacency();
        (0..g.num_nodes()).any(|i| a.row(i).iter().sum::<f64>() >= 4.0)
    }

    #[test]
    fn class0_graphs_contain_triangles() {
        let gs = synth_generate(SynthKind::IdClass0, 5, (10, 10), 1).unwrap();
        assert_eq!(gs.len(), 5);
        for g in &gs {
            assert_eq!(g.num_nodes(), 10);
            assert!(has_triangle(g));
            assert_eq!(g.label, Some(0));
        }
        for g in synth_generate(SynthKind::IdClass1, 5, (6, 12), 1).unwrap() {
            assert!(has_four_star(&g));
            assert_eq!(g.label, Some(1));
        }
    }

    #[test]
    fn ood_density_near_target() {
        let gs = synth_generate(SynthKind::Ood, 100, (10, 30), 9).unwrap();
        let mean = gs.iter().map(Graph::density).sum::<f64>() / gs.len() as f64;
        assert!((mean - 0.4).abs() <= 0.05, "{mean}");
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synth_generate(SynthKind::IdClass1, 4, (8, 20), 77).unwrap();
        let b = synth_generate(SynthKind::IdClass1, 4, (8, 20), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_ranges() {
        assert!(synth_generate(SynthKind::Ood, 1, (5, 10), 0).is_err());
        assert!(synth_generate(SynthKind::Ood, 1, (10, 61), 0).is_err());
        assert!(synth_generate(SynthKind::Ood, 1, (12, 10), 0).is_err());
    }
}
