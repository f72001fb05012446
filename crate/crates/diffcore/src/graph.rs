use crate::error::{dim_err, DiffError, Result};
use crate::ops::Op;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// One value in a computation graph together with the operation that made it.
pub struct DiffTensor<S: Scalar> {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<S>,
    pub(crate) grad: Option<Vec<S>>,
    pub(crate) op: Op<S>,
    pub(crate) requires_grad: bool,
}

impl<S: Scalar> DiffTensor<S> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }
}

/// Append-only arena recording every operation of a forward pass.
///
/// Nodes are created in topological order, so backward is a single reverse sweep.
/// A graph is single-threaded; independent graphs can live on different threads.
pub struct Graph<S: Scalar> {
    pub(crate) nodes: Vec<DiffTensor<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    /// Leaf whose gradient is accumulated by [`Graph::backward`].
    pub fn param(&mut self, t: Tensor<S>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, true)
    }

    pub fn constant_from(&mut self, shape: Vec<usize>, data: Vec<S>) -> Result<Var> {
        Ok(self.constant(Tensor::new(shape, data)?))
    }

    pub fn param_from(&mut self, shape: Vec<usize>, data: Vec<S>) -> Result<Var> {
        Ok(self.param(Tensor::new(shape, data)?))
    }

    pub fn node(&self, v: Var) -> &DiffTensor<S> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn tensor(&self, v: Var) -> Tensor<S> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.data.clone()).expect("node invariant")
    }

    /// First element; intended for `[1]`-shaped results.
    pub fn scalar(&self, v: Var) -> S {
        self.nodes[v.0].data[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<S>, op: Op<S>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(DiffTensor {
            shape,
            data,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn check(&self, v: Var, op: &'static str) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return dim_err(op, format!("unknown node {}", v.0));
        }
        Ok(())
    }

    /// Reverse sweep from a `[1]`-shaped loss. Gradients of parameter leaves are
    /// added to whatever they already hold; call [`Graph::zero_grad`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss, "backward")?;
        let shape = &self.nodes[loss.0].shape;
        if shape.as_slice() != [1] {
            return Err(DiffError::Contract(format!(
                "backward needs a loss of shape [1], got {shape:?}"
            )));
        }
        let mut pending: Vec<Option<Vec<S>>> = Vec::new();
        pending.resize_with(loss.0 + 1, || None);
        pending[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (j, gj) in self.vjp(i, &g) {
                match &mut pending[j] {
                    Some(acc) => acc.iter_mut().zip(&gj).for_each(|(a, b)| *a += *b),
                    slot @ None => *slot = Some(gj),
                }
            }
        }
        Ok(())
    }
}
