//! Runs the `goodat` commands in-process from a configuration file with a
//! flag-style override, the way the binary does.

use std::path::Path;

use goodat::cli::{cmd_detect, cmd_pretrain, cmd_synth, RunConfig};

fn main() -> goodat::Result<()> {
    let dir = std::env::temp_dir().join("goodat-cli-example");
    let cfg_path = dir.join("run.cfg");
    std::fs::create_dir_all(&dir).expect("temp dir is writable");
    std::fs::write(
        &cfg_path,
        format!(
            "# everything lands under one directory\nout = {}\ngin.epochs = 100\ndetector.eta = quantile:0.5\n",
            dir.display()
        ),
    )
    .expect("temp dir is writable");

    let overrides = [("detector.dump_embeddings".to_string(), "true".to_string())];
    let cfg = RunConfig::resolve(Some(Path::new(&cfg_path)), &overrides)?;
    cmd_synth(&cfg)?;
    let p = cmd_pretrain(&cfg)?;
    println!("pretrain accuracy {:.3}", p.summary.final_train_accuracy);
    let d = cmd_detect(&cfg)?;
    println!("AUC {:?}", d.summary.auc);
    println!("outputs in {}:", dir.display());
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .expect("output directory exists")
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    for n in names {
        println!("  {n}");
    }
    Ok(())
}
