//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Node ids are
//! assigned in creation order, so inputs always precede outputs and a single
//! reverse sweep over ids is a valid topological traversal. Gradient
//! accumulation order is therefore fixed and runs are reproducible.

mod ops;

pub use ops::huber;

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) use ops::Op;

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of one forward computation.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a recorded value.
#[derive(Clone, Copy)]
pub struct Var<'g, T> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// A differentiable input (parameter).
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input (data).
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn record(&self, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.inputs().iter().any(|&i| nodes[i].requires_grad)
        };
        self.push(value, op, requires_grad)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(root.value.shape().to_vec(), T::one()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            ops::propagate(&node.op, &node.value, &g, |i| &nodes[i].value, |i, contrib| {
                if !nodes[i].requires_grad {
                    return;
                }
                match &mut grads[i] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            });
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of a scalar loss with respect to every recorded value that
/// requires them.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, zero if the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_, T>) -> Tensor<T> {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(var.value().shape().to_vec()),
        }
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Tensor<T> {
        match self.grads.get_mut(var.id).and_then(Option::take) {
            Some(g) => g,
            None => Tensor::zeros(var.value().shape().to_vec()),
        }
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor<T>> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn id(&self) -> usize {
        self.id
    }
}
