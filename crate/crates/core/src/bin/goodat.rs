use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use goodat::cli::{cmd_detect, cmd_gradcheck, cmd_pretrain, cmd_sweep, cmd_synth, RunConfig};
use goodat::Error;

/// Test-time OOD detection for graphs with a learnable graph masker.
///
/// Settings come from built-in defaults, then the --config file (flat
/// `key = value` lines such as `detector.epochs = 50`), then flags. The
/// output directory defaults to $GOODAT_OUT, or `goodat-out` when unset.
#[derive(Parser)]
#[command(name = "goodat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic benchmark as TU directories `<out>/id` and `<out>/ood`.
    Synth(Common),
    /// Pretrain the GIN backbone on 90% of the ID graphs.
    Pretrain(Common),
    /// Train test-time masks, score graphs and report AUC.
    Detect(Common),
    /// AUC over an alpha × beta grid.
    Sweep(Common),
    /// Finite-difference check of every differentiable operation.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// ID dataset directory [default: <out>/id].
    #[arg(long, value_name = "DIR")]
    id_data: Option<PathBuf>,
    /// OOD dataset directory [default: <out>/ood].
    #[arg(long, value_name = "DIR")]
    ood_data: Option<PathBuf>,
    /// Checkpoint to read [default: <out>/checkpoint.json].
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Output directory [default: $GOODAT_OUT or goodat-out].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Weight of the KL term in the subgraph loss [default: 0.3].
    #[arg(long, value_name = "R")]
    alpha: Option<f64>,
    /// Weight of the KL term in the masked-graph loss [default: 0.05].
    #[arg(long, value_name = "R")]
    beta: Option<f64>,
    /// Masker training epochs [default: 50].
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Adam step size on the mask logits [default: 0.01].
    #[arg(long, value_name = "R")]
    lr: Option<f64>,
    /// Threshold at this quantile of the scores [default: 0.5].
    #[arg(long, value_name = "Q", conflicts_with = "eta_fixed")]
    eta_quantile: Option<f64>,
    /// Fixed threshold on the score.
    #[arg(long, value_name = "R")]
    eta_fixed: Option<f64>,
    /// Drop the subgraph loss from training.
    #[arg(long)]
    disable_ls: bool,
    /// Drop the masked-graph loss from training.
    #[arg(long)]
    disable_lm: bool,
    /// Drop the separation loss from training.
    #[arg(long)]
    disable_ld: bool,
    /// Seed for synthesis, splitting and test-set sampling [default: 0].
    #[arg(long, value_name = "N")]
    seed_data: Option<u64>,
    /// Seed for backbone initialization [default: 0].
    #[arg(long, value_name = "N")]
    seed_pretrain: Option<u64>,
    /// Seed for mask initialization [default: 0].
    #[arg(long, value_name = "N")]
    seed_detect: Option<u64>,
    /// Also write `embeddings.csv` with h_Z and h_Z' per graph.
    #[arg(long)]
    dump_embeddings: bool,
    /// Comma-separated alpha values for `sweep` [default: 0.1,0.3,0.5,0.7,0.9].
    #[arg(long, value_name = "LIST")]
    alpha_grid: Option<String>,
    /// Comma-separated beta values for `sweep` [default: 0.01,0.03,0.05,0.07,0.09].
    #[arg(long, value_name = "LIST")]
    beta_grid: Option<String>,
}

impl Common {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut out: Vec<(&str, String)> = Vec::new();
        let path = |p: &PathBuf| p.display().to_string();
        out.extend(self.out.as_ref().map(|p| ("out", path(p))));
        out.extend(self.id_data.as_ref().map(|p| ("id_data", path(p))));
        out.extend(self.ood_data.as_ref().map(|p| ("ood_data", path(p))));
        out.extend(self.checkpoint.as_ref().map(|p| ("checkpoint", path(p))));
        out.extend(self.alpha.map(|v| ("loss.alpha", v.to_string())));
        out.extend(self.beta.map(|v| ("loss.beta", v.to_string())));
        out.extend(self.epochs.map(|v| ("detector.epochs", v.to_string())));
        out.extend(self.lr.map(|v| ("detector.learning_rate", v.to_string())));
        out.extend(self.eta_quantile.map(|v| ("detector.eta", format!("quantile:{v}"))));
        out.extend(self.eta_fixed.map(|v| ("detector.eta", format!("fixed:{v}"))));
        for (off, key) in [
            (self.disable_ls, "loss.enable_subgraph"),
            (self.disable_lm, "loss.enable_masked"),
            (self.disable_ld, "loss.enable_separation"),
        ] {
            if off {
                out.push((key, "false".into()));
            }
        }
        out.extend(self.seed_data.map(|v| ("seed.data", v.to_string())));
        out.extend(self.seed_pretrain.map(|v| ("seed.pretrain", v.to_string())));
        out.extend(self.seed_detect.map(|v| ("seed.detect", v.to_string())));
        if self.dump_embeddings {
            out.push(("detector.dump_embeddings", "true".into()));
        }
        out.extend(self.alpha_grid.clone().map(|v| ("sweep.alphas", v)));
        out.extend(self.beta_grid.clone().map(|v| ("sweep.betas", v)));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let (Command::Synth(c) | Command::Pretrain(c) | Command::Detect(c) | Command::Sweep(c) | Command::Gradcheck(c)) =
        &cli.command;
    let cfg = RunConfig::resolve(c.config.as_deref(), &c.overrides())?;
    match cli.command {
        Command::Synth(_) => {
            let o = cmd_synth(&cfg)?;
            println!("{} ID graphs -> {}", o.id_graphs, o.id_dir.display());
            println!("{} OOD graphs -> {}", o.ood_graphs, o.ood_dir.display());
        }
        Command::Pretrain(_) => {
            let o = cmd_pretrain(&cfg)?;
            println!(
                "trained on {} graphs: accuracy {:.4}, loss {:.4}",
                o.summary.train_graphs, o.summary.final_train_accuracy, o.summary.final_train_loss
            );
            println!("checkpoint -> {}", o.checkpoint_path.display());
        }
        Command::Detect(_) => {
            let o = cmd_detect(&cfg)?;
            let s = &o.summary;
            println!("{} test graphs ({} OOD), {}", s.test_graphs, s.ood_graphs, s.provenance);
            if let Some(auc) = s.auc {
                println!("AUC {auc:.4}");
            }
            if let (Some(id), Some(ood)) = (s.mean_score_id, s.mean_score_ood) {
                println!("mean score ID {id:.4}, OOD {ood:.4}");
            }
            if let Some(eta) = s.eta_used {
                println!("eta {eta:.6}");
            }
            println!("scores -> {}", o.scores_path.display());
        }
        Command::Sweep(_) => {
            let o = cmd_sweep(&cfg)?;
            print!("{}", o.table.to_csv());
            println!("table -> {}", o.path.display());
        }
        Command::Gradcheck(_) => {
            let o = cmd_gradcheck(&cfg)?;
            for r in &o.results {
                let status = if r.passed { "ok" } else { "FAIL" };
                println!(
                    "{:<18} {:<4} worst rel {:.2e}  worst abs {:.2e}",
                    r.name, status, r.worst_rel_error, r.worst_abs_error
                );
            }
            println!("{} checks in {:.2?}", o.results.len(), o.elapsed);
            return Ok(o.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
