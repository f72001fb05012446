//! Central-difference gradient oracle.
//!
//! Evaluates a scalar graph function in `f64`, compares reverse-mode gradients of
//! every input against `(f(x + eps) - f(x - eps)) / 2 eps` on a seeded subset of
//! coordinates. The oracle only calls the forward pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DiffError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const FD_EPS: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `(input, coordinate, analytic, numeric)` of the worst failing coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.failures += other.failures;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        if self.worst.is_none() {
            self.worst = other.worst;
        }
    }
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.shape(out) != [1] {
        return Err(DiffError::Contract("gradient check needs a scalar function".into()));
    }
    Ok(g.scalar(out))
}

/// Checks at most `coords_per_input` coordinates of every input.
pub fn check_gradients<F>(f: F, inputs: &[Tensor<f64>], coords_per_input: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let mut worst_err = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let n = t.numel();
        let picks: Vec<usize> = if n <= coords_per_input {
            (0..n).collect()
        } else {
            sample(&mut rng, n, coords_per_input).into_vec()
        };
        for k in picks {
            let mut shifted = inputs.to_vec();
            shifted[i].data_mut()[k] += FD_EPS;
            let up = eval(&f, &shifted)?;
            shifted[i].data_mut()[k] -= 2.0 * FD_EPS;
            let down = eval(&f, &shifted)?;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let a = analytic[i][k];
            let abs = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if abs >= ABS_TOL {
                report.max_rel_err = report.max_rel_err.max(rel);
            }
            if abs >= ABS_TOL && rel >= REL_TOL {
                report.failures += 1;
                if rel > worst_err {
                    worst_err = rel;
                    report.worst = Some((i, k, a, numeric));
                }
            }
        }
    }
    Ok(report)
}
