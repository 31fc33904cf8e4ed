//! Reads a TU benchmark directory (for example AIDS or DHFR from the TU
//! collection) and prints its shape.
//!
//! ```text
//! cargo run --example load_tu_dataset -- path/to/AIDS
//! ```

use goodat::cli::load_dataset;

fn main() -> goodat::Result<()> {
    let Some(dir) = std::env::args().nth(1) else {
        eprintln!("usage: load_tu_dataset DIR");
        std::process::exit(2);
    };
    let ds = load_dataset(&dir)?;
    let nodes: usize = ds.graphs.iter().map(|g| g.num_nodes()).sum();
    let edges: usize = ds.graphs.iter().map(|g| g.num_edges()).sum();
    println!("{}: {} graphs, {nodes} nodes, {edges} edges", ds.name, ds.graphs.len());
    println!("feature width {}", ds.graphs[0].feature_dim());
    println!("classes {:?} (remapped to 0..{})", ds.class_values, ds.num_classes);
    if ds.self_loops_dropped > 0 {
        println!("dropped {} self-loops", ds.self_loops_dropped);
    }
    let mut per_class = vec![0; ds.num_classes];
    for g in &ds.graphs {
        per_class[g.label.expect("TU graphs are labeled")] += 1;
    }
    println!("graphs per class {per_class:?}");
    Ok(())
}
