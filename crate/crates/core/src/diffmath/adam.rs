use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// A trainable tensor living outside any tape.
///
/// Each step binds it onto a fresh tape with [`Parameter::bind`], and
/// [`Parameter::collect_grad`] copies the tape gradient back after backward.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        Self { value, grad: None }
    }

    pub fn bind(&self, tape: &mut Tape) -> Var {
        tape.param(self.value.clone())
    }

    /// Adds the tape gradient of `var` into this parameter's gradient.
    /// A var that backward never reached contributes zeros.
    pub fn collect_grad(&mut self, tape: &Tape, var: Var) {
        let n = self.value.numel();
        let acc = self.grad.get_or_insert_with(|| vec![0.0; n]);
        if let Some(g) = tape.grad(var) {
            acc.iter_mut().zip(g).for_each(|(a, d)| *a += d);
        }
    }

    pub fn add_grad(&mut self, g: &[f64]) {
        let n = self.value.numel();
        let acc = self.grad.get_or_insert_with(|| vec![0.0; n]);
        acc.iter_mut().zip(g).for_each(|(a, d)| *a += d);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// Bias-corrected Adam over an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Parameter]) -> Self {
        let buffers = || params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            config,
            step_count: 0,
            first_moment: buffers(),
            second_moment: buffers(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One Adam step. Every parameter must carry a gradient; gradients are
    /// reset to zero afterwards.
    pub fn update(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::contract(format!(
                "adam tracks {} parameters, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.grad.is_none() {
                return Err(Error::contract(format!("parameter {i} has no gradient")));
            }
            if p.value.numel() != self.first_moment[i].len() {
                return Err(Error::contract(format!(
                    "parameter {i} has {} values, moment buffer {}",
                    p.value.numel(),
                    self.first_moment[i].len()
                )));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps_hat,
        } = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad.as_mut().expect("checked above");
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps_hat);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64]) -> Parameter {
        Parameter::new(Tensor::vector(values.to_vec()))
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = param(&[0.5, -1.0]);
        p.grad = Some(vec![0.0, 0.0]);
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.1), &[&p]);
        adam.update(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data(), &[0.5, -1.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g and v_hat = g^2 at step 1, so the move is lr * g / |g|
        for &g in &[3.0, -0.02, 1e-3, 250.0] {
            let mut p = param(&[1.0]);
            p.grad = Some(vec![g]);
            let cfg = AdamConfig {
                eps_hat: 0.0,
                ..AdamConfig::with_learning_rate(0.05)
            };
            let mut adam = AdamState::new(cfg, &[&p]);
            adam.update(&mut [&mut p]).unwrap();
            let delta = p.value.data()[0] - 1.0;
            assert!((delta.abs() - 0.05).abs() < 1e-15, "g={g} delta={delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = param(&[0.0]);
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.01), &[&p]);
        let mut prev = 0.0;
        for _ in 0..200 {
            p.grad = Some(vec![0.7]);
            adam.update(&mut [&mut p]).unwrap();
            let now = p.value.data()[0];
            assert!(now < prev);
            prev = now;
        }
        assert_eq!(adam.step_count(), 200);
    }

    #[test]
    fn missing_gradient_is_a_contract_error() {
        let mut p = param(&[1.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]);
        assert!(matches!(adam.update(&mut [&mut p]), Err(Error::Contract(_))));
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn gradients_are_zeroed_after_update() {
        let mut p = param(&[1.0, 2.0]);
        p.grad = Some(vec![0.3, 0.4]);
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]);
        adam.update(&mut [&mut p]).unwrap();
        assert_eq!(p.grad.as_deref(), Some(&[0.0, 0.0][..]));
    }
}
