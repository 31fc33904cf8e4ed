//! Acceptance criteria, one PASS/FAIL/SKIP line each. Exits nonzero when
//! any criterion fails.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use goodat::cli::{cmd_detect, cmd_gradcheck, cmd_pretrain, cmd_synth, RunConfig};
use goodat::detector::{auc, detect, DetectorConfig};
use goodat::diffmath::{Parameter, Tape, Tensor};
use goodat::giblosses::{joint_density, kl_unit_gaussian_value, SeparationStatValues, SeparationStats};
use goodat::gnn::{pretrain, GinConfig};
use goodat::graphdata::{synth_benchmark, DatasetBundle};
use goodat::masker::{init_masks, split_graph, GraphMask};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn lib<T>(r: goodat::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn verdict(r: Check) -> Verdict {
    match r {
        Ok(detail) => Verdict::Pass(detail),
        Err(reason) => Verdict::Fail(reason),
    }
}

fn scratch_root() -> PathBuf {
    std::env::temp_dir().join(format!("goodat-acceptance-{}", std::process::id()))
}

fn scratch_dir(tag: &str) -> Result<PathBuf, String> {
    let dir = scratch_root().join(tag);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    Ok(dir)
}

fn config_in(dir: &Path) -> RunConfig {
    RunConfig {
        out: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn gradient_oracle() -> Verdict {
    verdict((|| {
        let dir = scratch_dir("gradcheck")?;
        let out = lib(cmd_gradcheck(&config_in(&dir)))?;
        let names: HashSet<&str> = out.results.iter().map(|r| r.name.as_str()).collect();
        if names.len() != out.results.len() {
            return Err("an operation is reported more than once".into());
        }
        for required in [
            "materialize",
            "loss_subgraph",
            "loss_masked",
            "loss_separation",
            "loss_total",
        ] {
            if !names.contains(required) {
                return Err(format!("{required} is not checked"));
            }
        }
        let failed: Vec<&str> = out
            .results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.name.as_str())
            .collect();
        if !failed.is_empty() {
            return Err(format!("failing: {}", failed.join(", ")));
        }
        if out.elapsed >= Duration::from_secs(10) {
            return Err(format!("took {:.2?}", out.elapsed));
        }
        let worst = out.results.iter().map(|r| r.worst_rel_error).fold(0.0, f64::max);
        Ok(format!(
            "{} checks, worst relative error {worst:.1e}, {:.2?}",
            out.results.len(),
            out.elapsed
        ))
    })())
}

// composite Simpson rule for KL(N(mu, 1) || N(0, 1))
fn kl_quadrature(mu: f64) -> f64 {
    let (lo, hi, steps) = (mu - 15.0, mu + 15.0, 30_000);
    let h = (hi - lo) / steps as f64;
    let f = |x: f64| {
        let p = (-(x - mu).powi(2) / 2.0).exp() / (2.0 * PI).sqrt();
        p * (x * x / 2.0 - (x - mu).powi(2) / 2.0)
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..steps {
        sum += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn density_at(hz: &[f64], hr: &[f64], stats: SeparationStatValues) -> Result<f64, String> {
    let mut tape = Tape::new();
    let z = tape.constant(lib(Tensor::new(vec![1, hz.len()], hz.to_vec()))?);
    let r = tape.constant(lib(Tensor::new(vec![1, hr.len()], hr.to_vec()))?);
    let s = SeparationStats::constants(&mut tape, stats);
    let d = lib(joint_density(&mut tape, z, r, s))?;
    Ok(tape.scalar(d))
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

fn closed_form_oracles() -> Verdict {
    verdict((|| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst_kl: f64 = 0.0;
        for _ in 0..10 {
            let mu: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let quad = mu.iter().map(|&m| kl_quadrature(m)).sum::<f64>() / mu.len() as f64;
            worst_kl = worst_kl.max((kl_unit_gaussian_value(&mu, f64::INFINITY) - quad).abs());
        }
        if worst_kl >= 1e-6 {
            return Err(format!("KL differs from quadrature by {worst_kl:e}"));
        }

        let standard = SeparationStatValues {
            sigma_z: 1.0,
            sigma_remainder: 1.0,
            rho: 0.0,
        };
        let origin = density_at(&[0.0; 4], &[0.0; 4], standard)?;
        let origin_err = (origin - 1.0 / (2.0 * PI)).abs();
        if origin_err >= 1e-9 {
            return Err(format!("density at the origin is {origin}, off by {origin_err:e}"));
        }

        let mut worst_factor: f64 = 0.0;
        for _ in 0..10 {
            let stats = SeparationStatValues {
                sigma_z: rng.gen_range(0.3..3.0),
                sigma_remainder: rng.gen_range(0.3..3.0),
                rho: 0.0,
            };
            let (z, r) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let product = normal_pdf(z, stats.sigma_z) * normal_pdf(r, stats.sigma_remainder);
            worst_factor = worst_factor.max((density_at(&[z], &[r], stats)? - product).abs());
        }
        if worst_factor >= 1e-9 {
            return Err(format!(
                "rho = 0 density differs from the product of marginals by {worst_factor:e}"
            ));
        }
        Ok(format!(
            "KL error {worst_kl:.1e}, origin error {origin_err:.1e}, factorization error {worst_factor:.1e}"
        ))
    })())
}

fn auc_brute_force(scores: &[f64], flags: &[bool]) -> f64 {
    let mut wins = 0.0;
    let (mut p, mut n) = (0.0, 0.0);
    for (i, &fi) in flags.iter().enumerate() {
        if fi {
            p += 1.0;
        } else {
            n += 1.0;
        }
        if !fi {
            continue;
        }
        for (j, &fj) in flags.iter().enumerate() {
            if !fj {
                wins += match scores[i].partial_cmp(&scores[j]) {
                    Some(std::cmp::Ordering::Greater) => 1.0,
                    Some(std::cmp::Ordering::Equal) => 0.5,
                    _ => 0.0,
                };
            }
        }
    }
    wins / (p * n)
}

fn auc_oracle() -> Verdict {
    verdict((|| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tied = 0;
        for instance in 0..1000 {
            let len = rng.gen_range(2..60);
            let levels = rng.gen_range(2..12);
            let scores: Vec<f64> = (0..len).map(|_| rng.gen_range(0..levels) as f64 * 0.25).collect();
            let mut flags: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.5)).collect();
            flags[0] = true;
            flags[1] = false;
            let fast = lib(auc(&scores, &flags))?;
            let slow = auc_brute_force(&scores, &flags);
            if fast != slow {
                return Err(format!("instance {instance}: rank AUC {fast} vs pair count {slow}"));
            }
            let distinct: HashSet<u64> = scores.iter().map(|s| s.to_bits()).collect();
            tied += usize::from(distinct.len() < scores.len());
        }
        Ok(format!("1000 instances equal bit for bit, {tied} with ties"))
    })())
}

/// Synthetic benchmark, already pretrained, in its own directory.
fn pretrained_fixture(tag: &str) -> Result<RunConfig, String> {
    let cfg = config_in(&scratch_dir(tag)?);
    lib(cmd_synth(&cfg))?;
    lib(cmd_pretrain(&cfg))?;
    Ok(cfg)
}

fn with_logits(mut mask: GraphMask, rng: &mut ChaCha8Rng) -> Result<GraphMask, String> {
    for p in [&mut mask.feature_logits, &mut mask.edge_logits] {
        let shape = p.value.shape().to_vec();
        let data = (0..p.value.numel()).map(|_| rng.gen_range(-6.0..6.0)).collect();
        *p = Parameter::new(lib(Tensor::new(shape, data))?);
    }
    Ok(mask)
}

fn masking_invariants() -> Verdict {
    verdict((|| {
        let cfg = pretrained_fixture("invariants")?;
        let inputs = lib(goodat::cli::load_detect_inputs(&cfg))?;
        let graphs = &inputs.bundle.test_graphs;
        let ckpt = &inputs.checkpoint;
        let mut rng = ChaCha8Rng::seed_from_u64(4);

        let mut recon: f64 = 0.0;
        for (g, m) in graphs.iter().zip(init_masks(graphs, 0.0, 4)) {
            let m = with_logits(m, &mut rng)?;
            let ((zx, za), (rx, ra)) = lib(split_graph(g, &m))?;
            for (z, r, full) in [(&zx, &rx, g.features()), (&za, &ra, g.adjacency())] {
                for ((a, b), c) in z.data().iter().zip(r.data()).zip(full.data()) {
                    recon = recon.max((a + b - c).abs());
                }
            }
            let (_, ma) = m.materialized();
            let n = ma.rows();
            if (0..n).any(|i| (0..n).any(|j| ma.at(i, j).to_bits() != ma.at(j, i).to_bits())) {
                return Err(format!("M_A of graph {} is not symmetric", m.graph_index));
            }
        }
        if recon > 1e-12 {
            return Err(format!("Z + Z' misses G by {recon:e}"));
        }

        let mut saturated: f64 = 0.0;
        for (g, m) in graphs.iter().zip(init_masks(graphs, 40.0, 4)) {
            let ((zx, za), _) = lib(split_graph(g, &m))?;
            let masked = lib(ckpt.forward(&zx, &za))?;
            let plain = lib(ckpt.forward_graph(g))?;
            for (a, b) in masked.embedding.iter().zip(&plain.embedding) {
                saturated = saturated.max((a - b).abs());
            }
        }
        if saturated > 1e-9 {
            return Err(format!("saturated mask moves the embedding by {saturated:e}"));
        }

        let ckpt_path = cfg.checkpoint_path();
        let before = fs::read(&ckpt_path).map_err(|e| e.to_string())?;
        lib(cmd_detect(&cfg))?;
        let after = fs::read(&ckpt_path).map_err(|e| e.to_string())?;
        if before != after {
            return Err("detection rewrote the checkpoint".into());
        }
        Ok(format!(
            "reconstruction error {recon:.1e}, saturated embedding error {saturated:.1e}, M_A symmetric, checkpoint bytes unchanged"
        ))
    })())
}

fn synthetic_detection() -> Verdict {
    verdict((|| {
        let start = Instant::now();
        let cfg = config_in(&scratch_dir("end-to-end")?);
        let synth = lib(cmd_synth(&cfg))?;
        let pre = lib(cmd_pretrain(&cfg))?;
        let out = lib(cmd_detect(&cfg))?;
        let elapsed = start.elapsed();
        let s = &out.summary;
        if (synth.id_graphs, synth.ood_graphs) != (200, 100) || (s.test_graphs, s.ood_graphs) != (40, 20) {
            return Err(format!(
                "benchmark shape {}+{} graphs, test set {} with {} OOD",
                synth.id_graphs, synth.ood_graphs, s.test_graphs, s.ood_graphs
            ));
        }
        let auc = s.auc.ok_or("no AUC reported")?;
        let (id, ood) = (
            s.mean_score_id.ok_or("no ID scores")?,
            s.mean_score_ood.ok_or("no OOD scores")?,
        );
        let detail = format!(
            "AUC {auc:.4}, mean score ID {id:.4} / OOD {ood:.4}, pretrain accuracy {:.3}, {:.1?}",
            pre.summary.final_train_accuracy, elapsed
        );
        if auc < 0.8 || ood <= id || elapsed >= Duration::from_secs(120) {
            return Err(detail);
        }
        Ok(detail)
    })())
}

fn ablation_trend() -> Verdict {
    verdict((|| {
        let configs = [
            (true, true, true),
            (true, false, false),
            (false, true, false),
            (false, false, true),
        ];
        let mut sums = [0.0; 4];
        for seed in 0..5u64 {
            let (id, ood) = lib(synth_benchmark(100, 100, (10, 20), (20, 30), seed))?;
            let bundle = lib(DatasetBundle::from_protocol(id, 2, ood, seed, "synthetic"))?;
            let gin = GinConfig {
                seed,
                ..GinConfig::new(bundle.feature_dim, 2)
            };
            let ckpt = lib(pretrain(&bundle.train_graphs, &gin))?;
            for (sum, &(s, m, d)) in sums.iter_mut().zip(&configs) {
                let mut cfg = DetectorConfig {
                    seed,
                    ..DetectorConfig::default()
                };
                cfg.loss = cfg.loss.only(s, m, d);
                let report = lib(detect(&ckpt, &bundle.test_graphs, &cfg))?.report;
                *sum += report.auc.ok_or("no AUC reported")?;
            }
        }
        let means = sums.map(|s| s / 5.0);
        let best_single = means[1..].iter().cloned().fold(f64::MIN, f64::max);
        let detail = format!(
            "mean AUC full {:.3}, l_s {:.3}, l_m {:.3}, l_d {:.3}",
            means[0], means[1], means[2], means[3]
        );
        if means[0] < best_single - 0.03 {
            return Err(detail);
        }
        Ok(detail)
    })())
}

fn determinism() -> Verdict {
    verdict((|| {
        let cfg = pretrained_fixture("determinism")?;
        let first = lib(cmd_detect(&cfg))?;
        let a = fs::read(&first.scores_path).map_err(|e| e.to_string())?;
        let second_cfg = RunConfig {
            out: cfg.out.join("again"),
            id_data: Some(cfg.id_data_dir()),
            ood_data: Some(cfg.ood_data_dir()),
            checkpoint: Some(cfg.checkpoint_path()),
            ..cfg.clone()
        };
        let second = lib(cmd_detect(&second_cfg))?;
        let b = fs::read(&second.scores_path).map_err(|e| e.to_string())?;
        if a != b {
            return Err("score files differ".into());
        }
        Ok(format!("{} byte score files identical", a.len()))
    })())
}

fn real_data() -> Verdict {
    let (Some(id), Some(ood)) = (std::env::var_os("GOODAT_TU_ID"), std::env::var_os("GOODAT_TU_OOD")) else {
        return Verdict::Skip("set GOODAT_TU_ID and GOODAT_TU_OOD to TU dataset directories to run".into());
    };
    verdict((|| {
        let mut cfg = config_in(&scratch_dir("real")?);
        cfg.id_data = Some(id.into());
        cfg.ood_data = Some(ood.into());
        lib(cmd_pretrain(&cfg))?;
        let s = lib(cmd_detect(&cfg))?.summary;
        let auc = s.auc.ok_or("no AUC reported")?;
        let detail = format!("{}: AUC {auc:.4}", s.provenance);
        if auc < 0.9 {
            return Err(detail);
        }
        Ok(detail)
    })())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("#1 gradient oracle", gradient_oracle),
        ("#2 closed-form oracles", closed_form_oracles),
        ("#3 AUC oracle", auc_oracle),
        ("#4 reconstruction and masking invariants", masking_invariants),
        ("#5 end-to-end synthetic detection", synthetic_detection),
        ("#6 ablation trend over 5 seeds", ablation_trend),
        ("#7 determinism", determinism),
        ("#8 real-data check", real_data),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        match v {
            Verdict::Pass(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
            Verdict::Skip(d) => println!("SKIP {name}: {d}"),
        }
    }
    let _ = fs::remove_dir_all(scratch_root());
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
