//! Reverse-mode automatic differentiation over a recorded graph.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. Node
//! ids grow monotonically, so reverse id order is a valid topological order
//! for the backward sweep. After [`Graph::backward`] the recorded pullbacks
//! are dropped and the graph refuses a second sweep.

mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod shape;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

pub use elementwise::Activation;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Upstream gradient plus a mask of which parents need a gradient; returns
/// one optional gradient per parent.
pub(crate) type Pullback<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>>>;

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    requires_grad: bool,
    pullback: Option<Pullback<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    track: bool,
    released: Cell<bool>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// Graph that records pullbacks for values reachable from tracked leaves.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            track: true,
            released: Cell::new(false),
        }
    }

    /// Graph that never records pullbacks (inference).
    pub fn no_grad() -> Self {
        Self {
            track: false,
            ..Self::new()
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.track
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf whose gradient is tracked iff the tensor's `requires_grad` is set.
    pub fn leaf(&self, t: Tensor<T>) -> Var {
        let rg = self.track && t.requires_grad();
        self.insert(Rc::new(t), Vec::new(), rg, None)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, t: Tensor<T>) -> Var {
        self.insert(Rc::new(t), Vec::new(), false, None)
    }

    pub fn value(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn insert(
        &self,
        value: Rc<Tensor<T>>,
        parents: Vec<usize>,
        requires_grad: bool,
        pullback: Option<Pullback<T>>,
    ) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            requires_grad,
            pullback,
        });
        Var(nodes.len() - 1)
    }

    /// Records the result of an operation. The pullback is kept only when a
    /// parent needs a gradient.
    pub(crate) fn push(
        &self,
        op: &'static str,
        value: Tensor<T>,
        parents: &[Var],
        pullback: Pullback<T>,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op });
        }
        let rg = self.track && parents.iter().any(|p| self.requires_grad(*p));
        let pb = if rg { Some(pullback) } else { None };
        Ok(self.insert(
            Rc::new(value),
            parents.iter().map(|p| p.0).collect(),
            rg,
            pb,
        ))
    }

    /// Back-propagates from a one-element `loss`, returning gradients for
    /// every tracked leaf. The graph is released afterwards.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.released.get() {
            return Err(Error::GraphReleased);
        }
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NotScalar { shape });
        }
        let mut nodes = self.nodes.borrow_mut();
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaves = HashMap::new();
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.pullback {
                None => {
                    leaves.insert(id, g);
                }
                Some(pb) => {
                    let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
                    let parent_grads = pb(&g, &needs);
                    for (&p, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !nodes[p].requires_grad {
                            continue;
                        }
                        match &mut grads[p] {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
            }
        }
        for node in nodes.iter_mut() {
            node.pullback = None;
        }
        self.released.set(true);
        Ok(Gradients { by_id: leaves })
    }
}

/// Leaf gradients produced by one backward sweep.
#[derive(Debug, Default)]
pub struct Gradients<T> {
    by_id: HashMap<usize, Vec<T>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.by_id.get(&v.0).map(Vec::as_slice)
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.by_id.remove(&v.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn grad_of_weighted_sum_is_input() {
        let g = Graph::new();
        let x = g.constant(t(&[3], &[1.0, -2.0, 3.5]));
        let w = g.leaf(t(&[3], &[0.3, 0.1, 0.7]).with_requires_grad(true));
        let p = g.mul(w, x).unwrap();
        let loss = g.sum(p).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[1.0, -2.0, 3.5]);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn mse_grad_vanishes_at_target() {
        let g = Graph::new();
        let target = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let w = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).with_requires_grad(true));
        let d = g.sub(w, target).unwrap();
        let sq = g.square(d).unwrap();
        let loss = g.mean(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(w).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_backward_is_rejected() {
        let g = Graph::new();
        let w = g.leaf(t(&[2], &[1.0, 2.0]).with_requires_grad(true));
        let loss = g.sum(w).unwrap();
        g.backward(loss).unwrap();
        assert!(matches!(g.backward(loss), Err(Error::GraphReleased)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let g = Graph::new();
        let w = g.leaf(t(&[2], &[1.0, 2.0]).with_requires_grad(true));
        assert!(matches!(g.backward(w), Err(Error::NotScalar { .. })));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(w * w) -> grad = 2w
        let g = Graph::new();
        let w = g.leaf(t(&[2], &[1.5, -3.0]).with_requires_grad(true));
        let p = g.mul(w, w).unwrap();
        let loss = g.sum(p).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[3.0, -6.0]);
    }

    #[test]
    fn no_grad_graph_records_nothing() {
        let g = Graph::no_grad();
        let w = g.leaf(t(&[2], &[1.0, 2.0]).with_requires_grad(true));
        assert!(!g.requires_grad(w));
        let loss = g.sum(w).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(w).is_none());
    }
}
