use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers and step counter for bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    pub hyper: AdamHyper,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &[Tensor<S>], hyper: AdamHyper) -> Self {
        Self {
            step: 0,
            first: params.iter().map(|p| vec![S::zero(); p.numel()]).collect(),
            second: params.iter().map(|p| vec![S::zero(); p.numel()]).collect(),
            hyper,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.hyper.learning_rate = lr;
    }

    pub fn first_moments(&self) -> &[Vec<S>] {
        &self.first
    }

    /// One update of every parameter from its gradient.
    pub fn step(&mut self, params: &mut [Tensor<S>], grads: &[Vec<S>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return dim_err(
                "adam_step",
                format!(
                    "{} params, {} gradients, state for {}",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            );
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() || p.numel() != self.first[i].len() {
                return dim_err(
                    "adam_step",
                    format!("param {i} has {} values, gradient {}", p.numel(), g.len()),
                );
            }
        }
        self.step += 1;
        let h = self.hyper;
        let t = self.step as f64;
        let b1 = S::lit(h.beta1);
        let b2 = S::lit(h.beta2);
        let c1 = S::lit(1.0 - h.beta1.powf(t));
        let c2 = S::lit(1.0 - h.beta2.powf(t));
        let lr = S::lit(h.learning_rate);
        let eps = S::lit(h.epsilon);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (S::one() - b1) * *gi;
                *vi = b2 * *vi + (S::one() - b2) * *gi * *gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
