//! Information-bottleneck losses on the masked graphs.
//!
//! With `h` the frozen encoder's embedding and `q(Y|·)` its classifier:
//!
//! - subgraph loss `l_s = CE(q(·|Z), y) + α · KL(N(h_Z, I) ‖ N(0, I))`,
//! - masked loss `l_m = -min(CE(q(·|Z'), y), ce_clamp) - β · min(KL_Z', kl_clamp)`,
//! - separation loss `l_d`: the bivariate Gaussian density of the pairs
//!   `(h_Z[k], h_Z'[k])`, averaged over embedding dimensions, with
//!   `σ₁, σ₂, ρ` estimated per graph across those dimensions,
//! - total `l_g = l_s + l_m + l_d`, each term averaged over the batch.
//!
//! Every term is per graph, so graphs can be optimized independently.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gnn::{GinCheckpoint, GinOutput};
use crate::graphdata::Graph;
use crate::masker::{mask_graph, BoundMask, GraphMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub ce_clamp: f64,
    pub kl_clamp: f64,
    pub sigma_floor: f64,
    pub rho_cap: f64,
    pub enable_subgraph: bool,
    pub enable_masked: bool,
    pub enable_separation: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.05,
            ce_clamp: 10.0,
            kl_clamp: 50.0,
            sigma_floor: 1e-4,
            rho_cap: 0.99,
            enable_subgraph: true,
            enable_masked: true,
            enable_separation: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::contract("alpha and beta must be non-negative"));
        }
        if !(self.rho_cap > 0.0 && self.rho_cap < 1.0) {
            return Err(Error::contract("rho_cap must lie in (0, 1)"));
        }
        if self.sigma_floor <= 0.0 {
            return Err(Error::contract("sigma_floor must be positive"));
        }
        if !(self.enable_subgraph || self.enable_masked || self.enable_separation) {
            return Err(Error::contract("at least one loss must be enabled"));
        }
        Ok(())
    }

    /// Only the subgraph loss, only the masked loss, only separation.
    pub fn only(mut self, subgraph: bool, masked: bool, separation: bool) -> Self {
        self.enable_subgraph = subgraph;
        self.enable_masked = masked;
        self.enable_separation = separation;
        self
    }
}

/// `½ · mean(h²)` clamped at `kl_clamp`: KL of `N(h, I)` from `N(0, I)`
/// per dimension.
pub fn kl_unit_gaussian(tape: &mut Tape, embedding: Var, kl_clamp: f64) -> Var {
    let sq = tape.square(embedding);
    let mean = tape.reduce_mean(sq);
    let half = tape.scale(mean, 0.5);
    tape.min_const(half, kl_clamp)
}

pub fn kl_unit_gaussian_value(embedding: &[f64], kl_clamp: f64) -> f64 {
    let mean = embedding.iter().map(|h| h * h).sum::<f64>() / embedding.len() as f64;
    (0.5 * mean).min(kl_clamp)
}

/// Per-graph `l_s` from the encoder output on `Z`.
pub fn subgraph_loss(tape: &mut Tape, z: GinOutput, label: usize, cfg: &LossConfig) -> Result<Var> {
    let ce = tape.cross_entropy(z.logits, label)?;
    let kl = kl_unit_gaussian(tape, z.embedding, cfg.kl_clamp);
    let weighted = tape.scale(kl, cfg.alpha);
    tape.add(ce, weighted)
}

/// Per-graph `l_m` from the encoder output on `Z'`.
pub fn masked_loss(tape: &mut Tape, remainder: GinOutput, label: usize, cfg: &LossConfig) -> Result<Var> {
    let ce = tape.cross_entropy(remainder.logits, label)?;
    let ce = tape.min_const(ce, cfg.ce_clamp);
    let kl = kl_unit_gaussian(tape, remainder.embedding, cfg.kl_clamp);
    let kl = tape.min_const(kl, cfg.kl_clamp);
    let weighted = tape.scale(kl, cfg.beta);
    let sum = tape.add(ce, weighted)?;
    Ok(tape.neg(sum))
}

/// Scalar tape values `σ₁`, `σ₂`, `ρ`.
#[derive(Clone, Copy, Debug)]
pub struct SeparationStats {
    pub sigma_z: Var,
    pub sigma_remainder: Var,
    pub rho: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationStatValues {
    pub sigma_z: f64,
    pub sigma_remainder: f64,
    pub rho: f64,
}

impl SeparationStats {
    pub fn values(&self, tape: &Tape) -> SeparationStatValues {
        SeparationStatValues {
            sigma_z: tape.scalar(self.sigma_z),
            sigma_remainder: tape.scalar(self.sigma_remainder),
            rho: tape.scalar(self.rho),
        }
    }

    /// Records fixed statistics as constants.
    pub fn constants(tape: &mut Tape, v: SeparationStatValues) -> Self {
        Self {
            sigma_z: tape.constant(Tensor::scalar(v.sigma_z)),
            sigma_remainder: tape.constant(Tensor::scalar(v.sigma_remainder)),
            rho: tape.constant(Tensor::scalar(v.rho)),
        }
    }
}

fn centered(tape: &mut Tape, h: Var) -> Result<Var> {
    let mean = tape.reduce_mean(h);
    let ones = tape.constant(Tensor::ones(tape.shape(h).to_vec()));
    let spread = tape.mul_scalar(mean, ones)?;
    tape.sub(h, spread)
}

/// Population standard deviations across embedding dimensions, floored at
/// `sigma_floor`, and their Pearson correlation capped to `±rho_cap`.
pub fn separation_stats(tape: &mut Tape, h_z: Var, h_remainder: Var, cfg: &LossConfig) -> Result<SeparationStats> {
    let dims = tape.value(h_z).numel();
    if dims < 2 {
        return Err(Error::contract(format!(
            "separation statistics need at least 2 embedding dimensions, got {dims}"
        )));
    }
    if tape.shape(h_z) != tape.shape(h_remainder) {
        return Err(Error::Dimension {
            op: "separation_stats",
            left: tape.shape(h_z).to_vec(),
            right: tape.shape(h_remainder).to_vec(),
        });
    }
    let cz = centered(tape, h_z)?;
    let cr = centered(tape, h_remainder)?;
    let sigma = |tape: &mut Tape, c: Var| {
        let sq = tape.square(c);
        let var = tape.reduce_mean(sq);
        let sd = tape.sqrt(var);
        tape.max_const(sd, cfg.sigma_floor)
    };
    let sigma_z = sigma(tape, cz);
    let sigma_remainder = sigma(tape, cr);
    let prod = tape.hadamard(cz, cr)?;
    let cov = tape.reduce_mean(prod);
    let scale = tape.hadamard(sigma_z, sigma_remainder)?;
    let raw = tape.div(cov, scale)?;
    let rho = tape.clamp(raw, -cfg.rho_cap, cfg.rho_cap);
    Ok(SeparationStats {
        sigma_z,
        sigma_remainder,
        rho,
    })
}

/// Mean over dimensions of the zero-mean bivariate Gaussian density
///
/// `1/(2π|σ₁σ₂|√(1-ρ²)) · exp(-[z²/σ₁² - 2ρ z z'/|σ₁σ₂| + z'²/σ₂²] / (2(1-ρ²)))`
///
/// at `z = h_z[k]`, `z' = h_remainder[k]`.
pub fn joint_density(tape: &mut Tape, h_z: Var, h_remainder: Var, stats: SeparationStats) -> Result<Var> {
    let one = tape.constant(Tensor::scalar(1.0));
    let s12 = tape.hadamard(stats.sigma_z, stats.sigma_remainder)?;
    let r2 = tape.square(stats.rho);
    let neg_r2 = tape.neg(r2);
    let one_minus_r2 = tape.add_const(neg_r2, 1.0);

    let s1sq = tape.square(stats.sigma_z);
    let s2sq = tape.square(stats.sigma_remainder);
    let inv_s1sq = tape.div(one, s1sq)?;
    let inv_s2sq = tape.div(one, s2sq)?;
    let cross_coef = tape.div(stats.rho, s12)?;

    let zz = tape.square(h_z);
    let rr = tape.square(h_remainder);
    let zr = tape.hadamard(h_z, h_remainder)?;
    let a = tape.mul_scalar(inv_s1sq, zz)?;
    let b = tape.mul_scalar(cross_coef, zr)?;
    let b = tape.scale(b, 2.0);
    let c = tape.mul_scalar(inv_s2sq, rr)?;
    let ab = tape.sub(a, b)?;
    let quad = tape.add(ab, c)?;

    let minus_half = tape.constant(Tensor::scalar(-0.5));
    let k = tape.div(minus_half, one_minus_r2)?;
    let expo = tape.mul_scalar(k, quad)?;
    let dens = tape.exp(expo);
    let mean = tape.reduce_mean(dens);

    let root = tape.sqrt(one_minus_r2);
    let denom = tape.hadamard(s12, root)?;
    let denom = tape.scale(denom, 2.0 * PI);
    let norm = tape.div(one, denom)?;
    tape.hadamard(norm, mean)
}

/// Per-graph `l_d` with statistics estimated from the same embeddings.
pub fn separation_loss(
    tape: &mut Tape,
    h_z: Var,
    h_remainder: Var,
    cfg: &LossConfig,
) -> Result<(Var, SeparationStats)> {
    let stats = separation_stats(tape, h_z, h_remainder, cfg)?;
    Ok((joint_density(tape, h_z, h_remainder, stats)?, stats))
}

/// Loss terms of one graph on one tape. Disabled terms are `None`;
/// `subgraph` is always present because it is also the OOD score.
#[derive(Clone, Copy, Debug)]
pub struct GraphLossTerms {
    pub subgraph: Var,
    pub masked: Option<Var>,
    pub separation: Option<Var>,
    pub stats: Option<SeparationStats>,
    pub z: GinOutput,
    pub remainder: GinOutput,
}

/// Plain values of [`GraphLossTerms`], disabled terms reported as 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphLossValues {
    pub l_s: f64,
    pub l_m: f64,
    pub l_d: f64,
    pub stats: Option<SeparationStatValues>,
}

impl GraphLossTerms {
    pub fn values(&self, tape: &Tape) -> GraphLossValues {
        GraphLossValues {
            l_s: tape.scalar(self.subgraph),
            l_m: self.masked.map_or(0.0, |v| tape.scalar(v)),
            l_d: self.separation.map_or(0.0, |v| tape.scalar(v)),
            stats: self.stats.map(|s| s.values(tape)),
        }
    }

    /// Sum of the enabled terms in the order s, m, d.
    pub fn objective(&self, tape: &mut Tape, cfg: &LossConfig) -> Result<Var> {
        let parts = [
            cfg.enable_subgraph.then_some(self.subgraph),
            self.masked,
            self.separation,
        ];
        let mut acc: Option<Var> = None;
        for part in parts.into_iter().flatten() {
            acc = Some(match acc {
                None => part,
                Some(sum) => tape.add(sum, part)?,
            });
        }
        acc.ok_or_else(|| Error::contract("at least one loss must be enabled"))
    }
}

/// Masks `graph`, runs the frozen encoder on `Z` and `Z'` and records every
/// enabled loss term.
pub fn graph_losses(
    tape: &mut Tape,
    ckpt: &GinCheckpoint,
    graph: &Graph,
    mask: &GraphMask,
    label: usize,
    cfg: &LossConfig,
    trainable: bool,
) -> Result<(BoundMask, GraphLossTerms)> {
    let (bound, pair) = mask_graph(tape, graph, mask, trainable)?;
    let z = ckpt.forward_on(tape, pair.subgraph_x, pair.subgraph_a)?;
    let remainder = ckpt.forward_on(tape, pair.remainder_x, pair.remainder_a)?;
    let subgraph = subgraph_loss(tape, z, label, cfg)?;
    let masked = if cfg.enable_masked {
        Some(masked_loss(tape, remainder, label, cfg)?)
    } else {
        None
    };
    let (separation, stats) = if cfg.enable_separation {
        let (l, s) = separation_loss(tape, z.embedding, remainder.embedding, cfg)?;
        (Some(l), Some(s))
    } else {
        (None, None)
    };
    Ok((
        bound,
        GraphLossTerms {
            subgraph,
            masked,
            separation,
            stats,
            z,
            remainder,
        },
    ))
}

/// Batch-level losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_s: f64,
    pub l_m: f64,
    pub l_d: f64,
    pub l_g: f64,
    /// Raw subgraph loss per graph, kept even when `l_s` is disabled.
    pub per_graph_l_s: Vec<f64>,
    /// Separation statistics per graph, when that loss is enabled.
    pub stats: Vec<Option<SeparationStatValues>>,
}

/// Averages enabled terms over the batch and sums them in the order s, m, d.
/// Disabled terms contribute exactly 0.
pub fn loss_total(per_graph: &[GraphLossValues], cfg: &LossConfig) -> Result<LossBreakdown> {
    if !(cfg.enable_subgraph || cfg.enable_masked || cfg.enable_separation) {
        return Err(Error::contract("at least one loss must be enabled"));
    }
    let n = per_graph.len().max(1) as f64;
    let mean = |enabled: bool, f: fn(&GraphLossValues) -> f64| {
        if enabled {
            per_graph.iter().map(f).sum::<f64>() / n
        } else {
            0.0
        }
    };
    let l_s = mean(cfg.enable_subgraph, |v| v.l_s);
    let l_m = mean(cfg.enable_masked, |v| v.l_m);
    let l_d = mean(cfg.enable_separation, |v| v.l_d);
    Ok(LossBreakdown {
        l_s,
        l_m,
        l_d,
        l_g: l_s + l_m + l_d,
        per_graph_l_s: per_graph.iter().map(|v| v.l_s).collect(),
        stats: per_graph.iter().map(|v| v.stats).collect(),
    })
}

/// Differentiable batch `l_g` over terms recorded on one shared tape.
pub fn loss_total_on_tape(tape: &mut Tape, terms: &[GraphLossTerms], cfg: &LossConfig) -> Result<Var> {
    if terms.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let inv_n = 1.0 / terms.len() as f64;
    let batch_mean = |tape: &mut Tape, pick: &dyn Fn(&GraphLossTerms) -> Option<Var>| -> Result<Option<Var>> {
        let mut acc: Option<Var> = None;
        for t in terms {
            if let Some(v) = pick(t) {
                acc = Some(match acc {
                    None => v,
                    Some(s) => tape.add(s, v)?,
                });
            }
        }
        Ok(acc.map(|s| tape.scale(s, inv_n)))
    };
    let s = if cfg.enable_subgraph {
        batch_mean(tape, &|t| Some(t.subgraph))?
    } else {
        None
    };
    let m = batch_mean(tape, &|t| t.masked)?;
    let d = batch_mean(tape, &|t| t.separation)?;
    let mut total: Option<Var> = None;
    for part in [s, m, d].into_iter().flatten() {
        total = Some(match total {
            None => part,
            Some(acc) => tape.add(acc, part)?,
        });
    }
    total.ok_or_else(|| Error::contract("at least one loss must be enabled"))
}
