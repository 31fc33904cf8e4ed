//! Generates the synthetic benchmark, writes it in TU format and reads it
//! back.
//!
//! ```text
//! cargo run --example synth_benchmark -- [OUT_DIR]
//! ```

use goodat::graphdata::{parse_tu_dataset, synth_benchmark, write_tu_dataset, Graph};

fn describe(name: &str, graphs: &[Graph]) {
    let nodes = graphs.iter().map(Graph::num_nodes).sum::<usize>() as f64 / graphs.len() as f64;
    let density = graphs.iter().map(Graph::density).sum::<f64>() / graphs.len() as f64;
    println!(
        "{name:<4} {:>4} graphs, {nodes:5.1} nodes, density {density:.3}",
        graphs.len()
    );
}

fn main() -> goodat::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth-out".into());
    let (id, ood) = synth_benchmark(100, 100, (10, 20), (20, 30), 0)?;
    describe("ID", &id);
    describe("OOD", &ood);

    write_tu_dataset(format!("{out}/id"), "SYNTH_ID", &id)?;
    write_tu_dataset(format!("{out}/ood"), "SYNTH_OOD", &ood)?;
    let back = parse_tu_dataset(format!("{out}/id"), "SYNTH_ID")?;
    assert_eq!(back.graphs.len(), id.len());
    println!(
        "re-read {} graphs in {} classes from {out}/id",
        back.graphs.len(),
        back.num_classes
    );
    Ok(())
}
