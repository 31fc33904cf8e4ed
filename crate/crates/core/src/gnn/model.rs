use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GinConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Learn the self-loop weight ε; otherwise it stays at 0.
    pub train_eps: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl GinConfig {
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 32,
            feature_dim,
            num_classes,
            train_eps: false,
            epochs: 100,
            learning_rate: 1e-2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(Error::contract("GIN needs at least one layer and one hidden unit"));
        }
        if self.feature_dim == 0 || self.num_classes == 0 {
            return Err(Error::contract("GIN needs a positive feature width and class count"));
        }
        Ok(())
    }

    /// Expected `(name, shape)` of every stored tensor, in canonical order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden_dim;
        let mut out = Vec::new();
        for l in 0..self.num_layers {
            let input = if l == 0 { self.feature_dim } else { h };
            out.push((format!("layer{l}.w1"), vec![input, h]));
            out.push((format!("layer{l}.b1"), vec![1, h]));
            out.push((format!("layer{l}.w2"), vec![h, h]));
            out.push((format!("layer{l}.b2"), vec![1, h]));
            out.push((format!("layer{l}.eps"), vec![1]));
        }
        out.push(("head.w".into(), vec![h, self.num_classes]));
        out.push(("head.b".into(), vec![1, self.num_classes]));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub eps: Tensor,
}

/// All backbone weights: one two-transform MLP per layer plus a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct GinWeights {
    pub layers: Vec<GinLayer>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl GinWeights {
    /// Uniform in `±1/sqrt(fan_in)` from `config.seed`; ε starts at 0.
    pub fn init(config: &GinConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut uniform = |shape: Vec<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let len = shape.iter().product();
            let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::new(shape, data).expect("shape matches length")
        };
        let h = config.hidden_dim;
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.feature_dim } else { h };
                GinLayer {
                    w1: uniform(vec![input, h], input),
                    b1: uniform(vec![1, h], input),
                    w2: uniform(vec![h, h], h),
                    b2: uniform(vec![1, h], h),
                    eps: Tensor::scalar(0.0),
                }
            })
            .collect();
        Ok(Self {
            layers,
            head_w: uniform(vec![h, config.num_classes], h),
            head_b: uniform(vec![1, config.num_classes], h),
        })
    }

    /// Tensors in the order of [`GinConfig::tensor_layout`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([&l.w1, &l.b1, &l.w2, &l.b2, &l.eps]);
        }
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend([&mut l.w1, &mut l.b1, &mut l.w2, &mut l.b2, &mut l.eps]);
        }
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    /// Inverse of [`GinWeights::tensors`].
    pub fn from_tensors(config: &GinConfig, mut tensors: Vec<Tensor>) -> Result<Self> {
        let layout = config.tensor_layout();
        if tensors.len() != layout.len() {
            return Err(Error::contract(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::contract(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let head_b = tensors.pop().expect("layout is non-empty");
        let head_w = tensors.pop().expect("layout is non-empty");
        let mut it = tensors.into_iter();
        let layers = (0..config.num_layers)
            .map(|_| GinLayer {
                w1: it.next().expect("layout checked"),
                b1: it.next().expect("layout checked"),
                w2: it.next().expect("layout checked"),
                b2: it.next().expect("layout checked"),
                eps: it.next().expect("layout checked"),
            })
            .collect();
        Ok(Self { layers, head_w, head_b })
    }

    /// Records the weights on `tape`. With `trainable` every tensor becomes a
    /// parameter, except ε which is trainable only when `train_eps` is set.
    pub fn bind(&self, tape: &mut Tape, trainable: bool, train_eps: bool) -> BoundGin {
        let mut leaf = |t: &Tensor, train: bool| {
            if train {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                w1: leaf(&l.w1, trainable),
                b1: leaf(&l.b1, trainable),
                w2: leaf(&l.w2, trainable),
                b2: leaf(&l.b2, trainable),
                eps: if trainable && train_eps {
                    SelfWeight::Learned(leaf(&l.eps, true))
                } else {
                    SelfWeight::Fixed(l.eps.data()[0])
                },
            })
            .collect();
        BoundGin {
            layers,
            head_w: leaf(&self.head_w, trainable),
            head_b: leaf(&self.head_b, trainable),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum SelfWeight {
    Fixed(f64),
    Learned(Var),
}

#[derive(Clone, Debug)]
struct BoundLayer {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    eps: SelfWeight,
}

/// GIN weights recorded on one tape.
#[derive(Clone, Debug)]
pub struct BoundGin {
    layers: Vec<BoundLayer>,
    head_w: Var,
    head_b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct GinOutput {
    /// `1 × hidden` sum-pooled graph embedding.
    pub embedding: Var,
    /// `1 × classes`.
    pub logits: Var,
}

impl BoundGin {
    /// Handles in [`GinConfig::tensor_layout`] order; `None` for a fixed ε.
    pub fn vars(&self) -> Vec<Option<Var>> {
        let mut out = Vec::new();
        for l in &self.layers {
            let eps = match l.eps {
                SelfWeight::Learned(v) => Some(v),
                SelfWeight::Fixed(_) => None,
            };
            out.extend([Some(l.w1), Some(l.b1), Some(l.w2), Some(l.b2), eps]);
        }
        out.extend([Some(self.head_w), Some(self.head_b)]);
        out
    }

    /// `H ← MLP((1+ε)·H + A·H)` per layer, sum pooling, linear head.
    /// `adjacency` may be real-valued.
    pub fn forward(&self, tape: &mut Tape, features: Var, adjacency: Var) -> Result<GinOutput> {
        let n = tape.value(features).rows();
        let ones_col = tape.constant(Tensor::ones(vec![n, 1]));
        let ones_row = tape.constant(Tensor::ones(vec![1, n]));

        let mut h = features;
        for layer in &self.layers {
            let agg = tape.matmul(adjacency, h)?;
            let own = match layer.eps {
                SelfWeight::Fixed(0.0) => h,
                SelfWeight::Fixed(e) => tape.scale(h, 1.0 + e),
                SelfWeight::Learned(eps) => {
                    let eh = tape.mul_scalar(eps, h)?;
                    tape.add(h, eh)?
                }
            };
            let pre = tape.add(own, agg)?;
            let hidden = affine(tape, pre, layer.w1, layer.b1, ones_col)?;
            let hidden = tape.relu(hidden);
            h = affine(tape, hidden, layer.w2, layer.b2, ones_col)?;
        }
        let embedding = tape.matmul(ones_row, h)?;
        let one = tape.constant(Tensor::ones(vec![1, 1]));
        let logits = affine(tape, embedding, self.head_w, self.head_b, one)?;
        Ok(GinOutput { embedding, logits })
    }
}

// x·W + 1·b, the bias row repeated through a ones column
fn affine(tape: &mut Tape, x: Var, w: Var, b: Var, ones_col: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let bias = tape.matmul(ones_col, b)?;
    tape.add(xw, bias)
}

/// Index of the largest logit; ties go to the smaller index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_smaller_index() {
        assert_eq!(argmax(&[2.0, -1.0]), 0);
        assert_eq!(argmax(&[0.5, 0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
        let logits = [0.3, -2.0, 1.1];
        let scaled: Vec<f64> = logits.iter().map(|l| l * 17.5).collect();
        assert_eq!(argmax(&logits), argmax(&scaled));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = GinConfig::new(3, 2);
        let a = GinWeights::init(&cfg).unwrap();
        assert_eq!(a, GinWeights::init(&cfg).unwrap());
        let bound = 1.0 / 3f64.sqrt();
        assert!(a.layers[0].w1.data().iter().all(|w| w.abs() <= bound));
        let layout = cfg.tensor_layout();
        for ((_, shape), t) in layout.iter().zip(a.tensors()) {
            assert_eq!(t.shape(), shape.as_slice());
        }
    }

    #[test]
    fn tensors_round_trip() {
        let cfg = GinConfig::new(2, 3);
        let w = GinWeights::init(&cfg).unwrap();
        let flat: Vec<Tensor> = w.tensors().into_iter().cloned().collect();
        assert_eq!(GinWeights::from_tensors(&cfg, flat).unwrap(), w);
    }
}
