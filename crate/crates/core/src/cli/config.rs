use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::{parse_grid, DetectorConfig, EtaMode, DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID};
use crate::error::{Error, Result};
use crate::giblosses::LossConfig;
use crate::gnn::GinConfig;
use crate::gradcheck::DEFAULT_POINTS;
use crate::masker::DEFAULT_INIT_LOGIT;

/// Environment variable that replaces the default output directory.
pub const OUT_ENV: &str = "GOODAT_OUT";
pub const DEFAULT_OUT: &str = "goodat-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    /// Synthetic generation, the 90/10 split and the test-set draw.
    pub data: u64,
    /// Backbone initialization.
    pub pretrain: u64,
    /// Mask initialization and the gradient-check sample points.
    pub detect: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub id_per_class: usize,
    pub ood_count: usize,
    pub id_min_nodes: usize,
    pub id_max_nodes: usize,
    pub ood_min_nodes: usize,
    pub ood_max_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GinParams {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub train_eps: bool,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_logit: f64,
    pub eta: EtaMode,
    pub dump_embeddings: bool,
}

/// Every setting a command can read, after defaults, the configuration
/// file and flag overrides have been applied in that order.
///
/// Each field has a flat dotted key (`detector.epochs`, `loss.alpha`, ...);
/// [`RunConfig::keys`] lists them all. The file format is one
/// `key = value` per line with `#` comments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub out: PathBuf,
    pub id_data: Option<PathBuf>,
    pub ood_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub seed: Seeds,
    pub synth: SynthParams,
    pub gin: GinParams,
    pub detector: DetectorParams,
    pub loss: LossConfig,
    pub sweep_alphas: Vec<f64>,
    pub sweep_betas: Vec<f64>,
    pub gradcheck_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gin = GinConfig::new(1, 2);
        let det = DetectorConfig::default();
        Self {
            out: PathBuf::from(DEFAULT_OUT),
            id_data: None,
            ood_data: None,
            checkpoint: None,
            seed: Seeds {
                data: 0,
                pretrain: 0,
                detect: 0,
            },
            synth: SynthParams {
                id_per_class: 100,
                ood_count: 100,
                id_min_nodes: 10,
                id_max_nodes: 20,
                ood_min_nodes: 20,
                ood_max_nodes: 30,
            },
            gin: GinParams {
                num_layers: gin.num_layers,
                hidden_dim: gin.hidden_dim,
                train_eps: gin.train_eps,
                epochs: gin.epochs,
                learning_rate: gin.learning_rate,
            },
            detector: DetectorParams {
                epochs: det.epochs,
                learning_rate: det.learning_rate,
                init_logit: DEFAULT_INIT_LOGIT,
                eta: det.eta_mode,
                dump_embeddings: false,
            },
            loss: det.loss,
            sweep_alphas: DEFAULT_ALPHA_GRID.to_vec(),
            sweep_betas: DEFAULT_BETA_GRID.to_vec(),
            gradcheck_points: DEFAULT_POINTS,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Usage(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// `quantile:Q`, `fixed:R` or `none`.
pub fn parse_eta(value: &str) -> Result<EtaMode> {
    let bad = || Error::Usage(format!("eta: expected quantile:Q, fixed:R or none, got {value:?}"));
    match value.split_once(':') {
        None if value == "none" => Ok(EtaMode::None),
        Some(("quantile", q)) => Ok(EtaMode::Quantile(q.trim().parse().map_err(|_| bad())?)),
        Some(("fixed", r)) => Ok(EtaMode::Fixed(r.trim().parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

pub fn format_eta(eta: EtaMode) -> String {
    match eta {
        EtaMode::Quantile(q) => format!("quantile:{q:?}"),
        EtaMode::Fixed(r) => format!("fixed:{r:?}"),
        EtaMode::None => "none".into(),
    }
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn format_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    /// Defaults, with the output directory taken from `GOODAT_OUT` when set.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(out) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            cfg.out = PathBuf::from(out);
        }
        cfg
    }

    /// Sets one value by its dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "out" => self.out = PathBuf::from(v),
            "id_data" => self.id_data = optional_path(v),
            "ood_data" => self.ood_data = optional_path(v),
            "checkpoint" => self.checkpoint = optional_path(v),
            "seed.data" => self.seed.data = parse(key, v)?,
            "seed.pretrain" => self.seed.pretrain = parse(key, v)?,
            "seed.detect" => self.seed.detect = parse(key, v)?,
            "synth.id_per_class" => self.synth.id_per_class = parse(key, v)?,
            "synth.ood_count" => self.synth.ood_count = parse(key, v)?,
            "synth.id_min_nodes" => self.synth.id_min_nodes = parse(key, v)?,
            "synth.id_max_nodes" => self.synth.id_max_nodes = parse(key, v)?,
            "synth.ood_min_nodes" => self.synth.ood_min_nodes = parse(key, v)?,
            "synth.ood_max_nodes" => self.synth.ood_max_nodes = parse(key, v)?,
            "gin.num_layers" => self.gin.num_layers = parse(key, v)?,
            "gin.hidden_dim" => self.gin.hidden_dim = parse(key, v)?,
            "gin.train_eps" => self.gin.train_eps = parse_bool(key, v)?,
            "gin.epochs" => self.gin.epochs = parse(key, v)?,
            "gin.learning_rate" => self.gin.learning_rate = parse(key, v)?,
            "detector.epochs" => self.detector.epochs = parse(key, v)?,
            "detector.learning_rate" => self.detector.learning_rate = parse(key, v)?,
            "detector.init_logit" => self.detector.init_logit = parse(key, v)?,
            "detector.eta" => self.detector.eta = parse_eta(v)?,
            "detector.dump_embeddings" => self.detector.dump_embeddings = parse_bool(key, v)?,
            "loss.alpha" => self.loss.alpha = parse(key, v)?,
            "loss.beta" => self.loss.beta = parse(key, v)?,
            "loss.ce_clamp" => self.loss.ce_clamp = parse(key, v)?,
            "loss.kl_clamp" => self.loss.kl_clamp = parse(key, v)?,
            "loss.sigma_floor" => self.loss.sigma_floor = parse(key, v)?,
            "loss.rho_cap" => self.loss.rho_cap = parse(key, v)?,
            "loss.enable_subgraph" => self.loss.enable_subgraph = parse_bool(key, v)?,
            "loss.enable_masked" => self.loss.enable_masked = parse_bool(key, v)?,
            "loss.enable_separation" => self.loss.enable_separation = parse_bool(key, v)?,
            "sweep.alphas" => self.sweep_alphas = parse_grid(v)?,
            "sweep.betas" => self.sweep_betas = parse_grid(v)?,
            "gradcheck.points" => self.gradcheck_points = parse(key, v)?,
            _ => return Err(Error::Usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn keys(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let g = &self.gin;
        let d = &self.detector;
        let l = &self.loss;
        vec![
            ("out", self.out.display().to_string()),
            ("id_data", format_path(&self.id_data)),
            ("ood_data", format_path(&self.ood_data)),
            ("checkpoint", format_path(&self.checkpoint)),
            ("seed.data", self.seed.data.to_string()),
            ("seed.pretrain", self.seed.pretrain.to_string()),
            ("seed.detect", self.seed.detect.to_string()),
            ("synth.id_per_class", s.id_per_class.to_string()),
            ("synth.ood_count", s.ood_count.to_string()),
            ("synth.id_min_nodes", s.id_min_nodes.to_string()),
            ("synth.id_max_nodes", s.id_max_nodes.to_string()),
            ("synth.ood_min_nodes", s.ood_min_nodes.to_string()),
            ("synth.ood_max_nodes", s.ood_max_nodes.to_string()),
            ("gin.num_layers", g.num_layers.to_string()),
            ("gin.hidden_dim", g.hidden_dim.to_string()),
            ("gin.train_eps", g.train_eps.to_string()),
            ("gin.epochs", g.epochs.to_string()),
            ("gin.learning_rate", format!("{:?}", g.learning_rate)),
            ("detector.epochs", d.epochs.to_string()),
            ("detector.learning_rate", format!("{:?}", d.learning_rate)),
            ("detector.init_logit", format!("{:?}", d.init_logit)),
            ("detector.eta", format_eta(d.eta)),
            ("detector.dump_embeddings", d.dump_embeddings.to_string()),
            ("loss.alpha", format!("{:?}", l.alpha)),
            ("loss.beta", format!("{:?}", l.beta)),
            ("loss.ce_clamp", format!("{:?}", l.ce_clamp)),
            ("loss.kl_clamp", format!("{:?}", l.kl_clamp)),
            ("loss.sigma_floor", format!("{:?}", l.sigma_floor)),
            ("loss.rho_cap", format!("{:?}", l.rho_cap)),
            ("loss.enable_subgraph", l.enable_subgraph.to_string()),
            ("loss.enable_masked", l.enable_masked.to_string()),
            ("loss.enable_separation", l.enable_separation.to_string()),
            ("sweep.alphas", format_list(&self.sweep_alphas)),
            ("sweep.betas", format_list(&self.sweep_betas)),
            ("gradcheck.points", self.gradcheck_points.to_string()),
        ]
    }

    /// Applies `key = value` lines from `text`; `origin` names the source in
    /// errors.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                file: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            self.set(key.trim(), value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        self.apply_text(&text, path)
    }

    /// Environment default, then `file`, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::from_env();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// The same `key = value` text [`RunConfig::apply_text`] reads.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.keys() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn gin_config(&self, feature_dim: usize, num_classes: usize) -> GinConfig {
        GinConfig {
            num_layers: self.gin.num_layers,
            hidden_dim: self.gin.hidden_dim,
            feature_dim,
            num_classes,
            train_eps: self.gin.train_eps,
            epochs: self.gin.epochs,
            learning_rate: self.gin.learning_rate,
            seed: self.seed.pretrain,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            epochs: self.detector.epochs,
            learning_rate: self.detector.learning_rate,
            loss: self.loss.clone(),
            eta_mode: self.detector.eta,
            seed: self.seed.detect,
            init_logit: self.detector.init_logit,
        }
    }
}
