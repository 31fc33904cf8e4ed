//! Central finite-difference verification of analytic gradients.
//!
//! A [`GradCheck`] pairs a scalar-valued tape function with samplers for its
//! inputs. [`run_checks`] evaluates the reverse-mode gradient at random points
//! and compares it element by element against `(f(x+h) - f(x-h)) / 2h`.
//! An element passes when its relative error is below `1e-4` or its absolute
//! error is below `1e-6`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffmath::{ElementwiseFn, Tape, Tensor, Var};
use crate::error::Result;
use crate::giblosses::{joint_density, masked_loss, separation_stats, subgraph_loss, LossConfig};
use crate::gnn::{GinCheckpoint, GinConfig, GinOutput, GinWeights, TrainingMeta};
use crate::graphdata::Graph;
use crate::masker::{apply_mask, materialize, BoundMask};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-6;
pub const DEFAULT_POINTS: usize = 20;
/// Gradients smaller than this are left out of the reported relative error.
const REPORT_FLOOR: f64 = 1e-3;

/// How one input tensor is drawn at each check point.
#[derive(Clone, Copy, Debug)]
pub enum Sampler {
    Uniform(f64, f64),
    /// Uniform magnitude in `[lo, hi]` with a random sign; keeps clear of
    /// kinks at zero.
    Signed(f64, f64),
}

impl Sampler {
    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Uniform(lo, hi) => rng.gen_range(lo..hi),
            Sampler::Signed(lo, hi) => {
                let m = rng.gen_range(lo..hi);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            }
        }
    }
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync>;

pub struct GradCheck {
    pub name: String,
    inputs: Vec<(Vec<usize>, Sampler)>,
    build: Build,
}

impl GradCheck {
    /// `build` receives one var per input and must return a scalar.
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<(Vec<usize>, Sampler)>,
        build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            inputs,
            build: Box::new(build),
        }
    }

    fn eval(&self, values: &[Tensor]) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = (self.build)(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    }

    fn analytic(&self, values: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let out = (self.build)(&mut tape, &vars)?;
        tape.backward(out)?;
        Ok(vars
            .iter()
            .zip(values)
            .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub points: usize,
    /// Largest relative error among elements with a gradient of at least
    /// `1e-3` in magnitude.
    pub worst_rel_error: f64,
    pub worst_abs_error: f64,
    pub passed: bool,
}

/// Runs every check at `points` random points drawn from `seed`.
pub fn run_checks(checks: &[GradCheck], points: usize, seed: u64) -> Result<Vec<CheckResult>> {
    checks
        .iter()
        .enumerate()
        .map(|(i, check)| run_one(check, points, seed.wrapping_add(i as u64)))
        .collect()
}

fn run_one(check: &GradCheck, points: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut passed = true;
    for _ in 0..points {
        let values: Vec<Tensor> = check
            .inputs
            .iter()
            .map(|(shape, sampler)| {
                let len = shape.iter().product();
                let data = (0..len).map(|_| sampler.draw(&mut rng)).collect();
                Tensor::new(shape.clone(), data).expect("shape matches length")
            })
            .collect();
        let analytic = check.analytic(&values)?;
        for (i, grads) in analytic.iter().enumerate() {
            for (k, &a) in grads.iter().enumerate() {
                let mut shifted = values.clone();
                let x = values[i].data()[k];
                shifted[i].data_mut()[k] = x + STEP;
                let up = check.eval(&shifted)?;
                shifted[i].data_mut()[k] = x - STEP;
                let down = check.eval(&shifted)?;
                let numeric = (up - down) / (2.0 * STEP);
                let abs = (a - numeric).abs();
                let scale = a.abs().max(numeric.abs());
                let rel = abs / scale.max(f64::MIN_POSITIVE);
                worst_abs = worst_abs.max(abs);
                if scale >= REPORT_FLOOR {
                    worst_rel = worst_rel.max(rel);
                }
                if !(abs < ABS_TOL || rel < REL_TOL) {
                    passed = false;
                }
            }
        }
    }
    Ok(CheckResult {
        name: check.name.clone(),
        points,
        worst_rel_error: worst_rel,
        worst_abs_error: worst_abs,
        passed,
    })
}

/// Fixed weights `1 + 0.5 sin(1.7 k)` contracted against `out`, so a
/// tensor-valued op reduces to a scalar with a nontrivial upstream gradient.
fn contract(tape: &mut Tape, out: Var) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let len = shape.iter().product();
    let w = (0..len).map(|k| 1.0 + 0.5 * (1.7 * k as f64).sin()).collect();
    let w = tape.constant(Tensor::new(shape, w)?);
    let prod = tape.hadamard(out, w)?;
    Ok(tape.reduce_sum(prod))
}

fn unary(
    name: &str,
    shape: Vec<usize>,
    sampler: Sampler,
    op: impl Fn(&mut Tape, Var) -> Var + Send + Sync + 'static,
) -> GradCheck {
    GradCheck::new(name, vec![(shape, sampler)], move |tape, v| {
        let out = op(tape, v[0]);
        contract(tape, out)
    })
}

fn binary(
    name: &str,
    a: (Vec<usize>, Sampler),
    b: (Vec<usize>, Sampler),
    op: impl Fn(&mut Tape, Var, Var) -> Result<Var> + Send + Sync + 'static,
) -> GradCheck {
    GradCheck::new(name, vec![a, b], move |tape, v| {
        let out = op(tape, v[0], v[1])?;
        contract(tape, out)
    })
}

fn tanh_fn() -> ElementwiseFn {
    ElementwiseFn {
        name: "tanh",
        value: f64::tanh,
        derivative: |x| 1.0 - x.tanh().powi(2),
    }
}

/// Every differentiable tape operation.
pub fn op_checks() -> Vec<GradCheck> {
    let wide = Sampler::Uniform(-2.0, 2.0);
    let off_zero = Sampler::Signed(0.2, 2.0);
    let positive = Sampler::Uniform(0.3, 3.0);
    let m = |r: usize, c: usize| vec![r, c];
    vec![
        binary("matmul", (m(3, 4), wide), (m(4, 2), wide), |t, a, b| t.matmul(a, b)),
        unary("transpose", m(2, 3), wide, |t, a| t.transpose(a).expect("matrix input")),
        binary("add", (m(2, 3), wide), (m(2, 3), wide), |t, a, b| t.add(a, b)),
        binary("sub", (m(2, 3), wide), (m(2, 3), wide), |t, a, b| t.sub(a, b)),
        binary("hadamard", (m(2, 3), wide), (m(2, 3), wide), |t, a, b| t.hadamard(a, b)),
        binary(
            "div",
            (m(2, 3), wide),
            (m(2, 3), Sampler::Signed(0.5, 2.0)),
            |t, a, b| t.div(a, b),
        ),
        binary("mul_scalar", (vec![1], wide), (m(2, 3), wide), |t, s, a| {
            t.mul_scalar(s, a)
        }),
        unary("scale", m(2, 3), wide, |t, a| t.scale(a, -1.7)),
        unary("neg", m(2, 3), wide, |t, a| t.neg(a)),
        unary("add_const", m(2, 3), wide, |t, a| t.add_const(a, 0.3)),
        unary("sigmoid", m(2, 3), Sampler::Uniform(-4.0, 4.0), |t, a| t.sigmoid(a)),
        unary("relu", m(2, 3), off_zero, |t, a| t.relu(a)),
        unary("exp", m(2, 3), wide, |t, a| t.exp(a)),
        unary("sqrt", m(2, 3), positive, |t, a| t.sqrt(a)),
        unary("square", m(2, 3), wide, |t, a| t.square(a)),
        unary("reduce_sum", m(2, 3), wide, |t, a| t.reduce_sum(a)),
        unary("reduce_mean", m(2, 3), wide, |t, a| t.reduce_mean(a)),
        unary("clamp", m(2, 3), Sampler::Signed(0.2, 1.0), |t, a| {
            t.clamp(a, -0.5, 0.5)
        }),
        unary("min_const", m(2, 3), Sampler::Signed(0.2, 2.0), |t, a| {
            t.min_const(a, 0.0)
        }),
        unary("max_const", m(2, 3), Sampler::Signed(0.2, 2.0), |t, a| {
            t.max_const(a, 0.0)
        }),
        unary("map", m(2, 3), wide, |t, a| t.map(a, tanh_fn())),
        GradCheck::new("cross_entropy", vec![(m(1, 4), Sampler::Uniform(-3.0, 3.0))], |t, v| {
            t.cross_entropy(v[0], 2)
        }),
    ]
}

/// The 6-node graph and random 2-layer checkpoint used by the loss checks.
pub fn loss_fixture() -> Result<(Graph, GinCheckpoint)> {
    let x = Tensor::from_rows(&[
        vec![1.0, 0.5],
        vec![0.2, 1.0],
        vec![0.7, 0.3],
        vec![1.0, 1.0],
        vec![0.4, 0.9],
        vec![0.8, 0.1],
    ])?;
    let g = Graph::from_edges(x, 6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3), (1, 4)])?;
    let config = GinConfig {
        num_layers: 2,
        hidden_dim: 4,
        seed: 11,
        ..GinConfig::new(2, 3)
    };
    let meta = TrainingMeta {
        final_train_accuracy: 0.0,
        final_train_loss: 0.0,
        seed: config.seed,
        epochs_run: 0,
    };
    let weights = GinWeights::init(&config)?;
    Ok((g, GinCheckpoint::new(config, weights, meta)?))
}

/// Masker materialization and the three losses, differentiated with respect
/// to the mask logits on [`loss_fixture`].
pub fn loss_checks() -> Result<Vec<GradCheck>> {
    let (graph, ckpt) = loss_fixture()?;
    let label = ckpt.pseudo_label(&graph)?;
    let n = graph.num_nodes();
    let d = graph.feature_dim();
    let logits = Sampler::Uniform(-1.5, 1.5);
    let inputs = vec![(vec![n, d], logits), (vec![n, n], logits)];
    let cfg = LossConfig::default();

    let materialize_check = GradCheck::new("materialize", inputs.clone(), |tape, v| {
        let m = materialize(
            tape,
            BoundMask {
                feature_logits: v[0],
                edge_logits: v[1],
            },
        )?;
        let fx = contract(tape, m.features)?;
        let fa = contract(tape, m.edges)?;
        tape.add(fx, fa)
    });

    // binds the graph and runs both encoders on tape-provided logits
    let setup = move |tape: &mut Tape, v: &[Var]| -> Result<(GinOutput, GinOutput)> {
        let x = tape.constant(graph.features().clone());
        let a = tape.constant(graph.adjacency().clone());
        let m = materialize(
            tape,
            BoundMask {
                feature_logits: v[0],
                edge_logits: v[1],
            },
        )?;
        let pair = apply_mask(tape, x, a, m)?;
        let z = ckpt.forward_on(tape, pair.subgraph_x, pair.subgraph_a)?;
        let r = ckpt.forward_on(tape, pair.remainder_x, pair.remainder_a)?;
        Ok((z, r))
    };
    let setup = std::sync::Arc::new(setup);

    let (s1, c1) = (setup.clone(), cfg.clone());
    let subgraph = GradCheck::new("loss_subgraph", inputs.clone(), move |tape, v| {
        let (z, _) = s1(tape, v)?;
        subgraph_loss(tape, z, label, &c1)
    });
    let (s2, c2) = (setup.clone(), cfg.clone());
    let masked = GradCheck::new("loss_masked", inputs.clone(), move |tape, v| {
        let (_, r) = s2(tape, v)?;
        masked_loss(tape, r, label, &c2)
    });
    let (s3, c3) = (setup.clone(), cfg.clone());
    let separation = GradCheck::new("loss_separation", inputs.clone(), move |tape, v| {
        let (z, r) = s3(tape, v)?;
        let stats = separation_stats(tape, z.embedding, r.embedding, &c3)?;
        joint_density(tape, z.embedding, r.embedding, stats)
    });

    let (s4, c4) = (setup, cfg);
    let total = GradCheck::new("loss_total", inputs, move |tape, v| {
        let (z, r) = s4(tape, v)?;
        let ls = subgraph_loss(tape, z, label, &c4)?;
        let lm = masked_loss(tape, r, label, &c4)?;
        let stats = separation_stats(tape, z.embedding, r.embedding, &c4)?;
        let ld = joint_density(tape, z.embedding, r.embedding, stats)?;
        let sm = tape.add(ls, lm)?;
        tape.add(sm, ld)
    });

    Ok(vec![materialize_check, subgraph, masked, separation, total])
}

/// Every registered check: tape ops, then masker and losses.
pub fn all_checks() -> Result<Vec<GradCheck>> {
    let mut checks = op_checks();
    checks.extend(loss_checks()?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_rule_is_caught() {
        let bad = ElementwiseFn {
            name: "bad_tanh",
            value: f64::tanh,
            derivative: |x| 1.0 - x.tanh().powi(2) + 0.01,
        };
        let checks = vec![
            unary("bad_map", vec![2, 2], Sampler::Uniform(-1.0, 1.0), move |t, a| {
                t.map(a, bad)
            }),
            unary("map", vec![2, 2], Sampler::Uniform(-1.0, 1.0), |t, a| {
                t.map(a, tanh_fn())
            }),
        ];
        let results = run_checks(&checks, 3, 0).unwrap();
        assert!(!results[0].passed);
        assert!(results[1].passed);
    }

    #[test]
    fn names_are_unique() {
        let checks = all_checks().unwrap();
        let mut names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
    }
}
