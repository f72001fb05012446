use std::collections::HashMap;

use hoitg_diffcore::{Graph, Scalar, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};

/// Named parameter tensors in registration order.
#[derive(Debug, Clone)]
pub struct ParamStore<S: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.position(name).map(|i| &mut self.tensors[i])
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<S>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ModelError::Config(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(t);
        Ok(())
    }

    /// Replaces every tensor, keeping names; shapes must match.
    pub fn assign(&mut self, tensors: Vec<Tensor<S>>) -> Result<()> {
        if tensors.len() != self.tensors.len() {
            return Err(ModelError::Config(format!(
                "expected {} tensors, got {}",
                self.tensors.len(),
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.shape() != self.tensors[i].shape() {
                return Err(ModelError::Config(format!(
                    "parameter {} has shape {:?}, got {:?}",
                    self.names[i],
                    self.tensors[i].shape(),
                    t.shape()
                )));
            }
        }
        self.tensors = tensors;
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Puts every tensor on the graph as a trainable leaf or a constant.
    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }
}

impl<S: Scalar> ParamStore<S> {
    /// Handles for leaves already on a graph, one per tensor in store order.
    pub fn bind_vars(&self, vars: &[Var]) -> Result<Bound> {
        if vars.len() != self.tensors.len() {
            return Err(ModelError::Config(format!("{} vars for {} parameters", vars.len(), self.tensors.len())));
        }
        Ok(Bound {
            vars: vars.to_vec(),
            index: self.index.clone(),
        })
    }
}

/// Graph handles of a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| ModelError::Config(format!("unknown parameter {name}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }
}

// ── initialization ───────────────────────────────────────────────────

/// Seeded initializer: weights uniform in ±1/√fan_in, biases zero.
pub struct Initializer<S: Scalar> {
    rng: ChaCha8Rng,
    pub store: ParamStore<S>,
}

impl<S: Scalar> Initializer<S> {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            store: ParamStore::default(),
        }
    }

    pub fn uniform(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) -> Result<()> {
        self.uniform_gain(name, shape, fan_in, 1.0)
    }

    /// Uniform in ±gain/√fan_in.
    pub fn uniform_gain(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, gain: f64) -> Result<()> {
        let bound = gain / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| S::lit(self.rng.random_range(-bound..bound))).collect();
        self.store.insert(name, Tensor::new(shape, data)?)
    }

    pub fn fill(&mut self, name: &str, shape: Vec<usize>, v: f64) -> Result<()> {
        let n = shape.iter().product();
        self.store.insert(name, Tensor::new(shape, vec![S::lit(v); n])?)
    }

    /// `{name}.w` `[din, dout]` and `{name}.b` `[dout]`.
    pub fn linear(&mut self, name: &str, din: usize, dout: usize) -> Result<()> {
        self.uniform(&format!("{name}.w"), vec![din, dout], din)?;
        self.fill(&format!("{name}.b"), vec![dout], 0.0)
    }

    pub fn linear_zero(&mut self, name: &str, din: usize, dout: usize) -> Result<()> {
        self.fill(&format!("{name}.w"), vec![din, dout], 0.0)?;
        self.fill(&format!("{name}.b"), vec![dout], 0.0)
    }

    pub fn layer_norm(&mut self, name: &str, d: usize) -> Result<()> {
        self.fill(&format!("{name}.g"), vec![d], 1.0)?;
        self.fill(&format!("{name}.b"), vec![d], 0.0)
    }

    pub fn finish(self) -> ParamStore<S> {
        self.store
    }
}
