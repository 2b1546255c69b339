//! Reverse-mode tape.
//!
//! Every operation appends a node holding its output value, the indices of
//! its inputs and (when any input needs a gradient) a one-shot backward rule.
//! Nodes are appended in execution order, so the node list is already a
//! topological order and the backward sweep is a reverse scan.

use std::cell::{Cell, Ref, RefCell};

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Backward rule: `(grad_out, input values, output value) -> grad per input`.
pub(crate) type BackwardFn<T> = Box<dyn FnOnce(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Real> {
    op: &'static str,
    label: Option<String>,
    value: Tensor<T>,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn<T>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// A single forward pass worth of recorded operations.
///
/// Tapes are confined to one thread; build one per forward pass and drop it
/// after [`Tape::backward`].
pub struct Tape<T: Real = f32> {
    nodes: RefCell<Vec<Node<T>>>,
    spent: Cell<bool>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            spent: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_node(Node {
            op: "leaf",
            label: None,
            value,
            parents: Vec::new(),
            requires_grad,
            backward: None,
        })
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// A named trainable leaf.
    pub fn param(&self, name: &str, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_node(Node {
            op: "param",
            label: Some(name.to_string()),
            value,
            parents: Vec::new(),
            requires_grad,
            backward: None,
        })
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes.borrow()[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Copy of a recorded value.
    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        self.value(v).clone()
    }

    /// The single value of a one-element node.
    pub fn item(&self, v: Var) -> T {
        self.value(v).item()
    }

    /// Attach a human-readable label used in diagnostics.
    pub fn label(&self, v: Var, label: impl Into<String>) {
        self.nodes.borrow_mut()[v.0].label = Some(label.into());
    }

    fn push_node(&self, node: Node<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var(nodes.len() - 1)
    }

    /// Record an operation. The backward rule is dropped when no input needs
    /// a gradient.
    pub(crate) fn push<F>(&self, op: &'static str, value: Tensor<T>, parents: &[Var], backward: F) -> Var
    where
        F: FnOnce(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.0].requires_grad)
        };
        self.push_node(Node {
            op,
            label: None,
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            requires_grad,
            backward: if requires_grad { Some(Box::new(backward)) } else { None },
        })
    }

    /// First recorded node holding a NaN or infinity, as `(index, op, label)`.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str, Option<String>)> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op, n.label.clone()))
    }

    /// Propagate d(loss)/d(node) back to every leaf that requires a gradient.
    ///
    /// The seed gradient is 1. Contributions from multiple uses of a value
    /// accumulate by addition. A tape can be swept only once.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if shape.numel() != 1 {
            return Err(Error::NotScalar(shape));
        }
        if self.spent.replace(true) {
            return Err(Error::BackwardTwice);
        }
        let n = self.len();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        if !self.requires_grad(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::ones(shape));

        for i in (0..=loss.0).rev() {
            let (rule, parents) = {
                let mut nodes = self.nodes.borrow_mut();
                let node = &mut nodes[i];
                if node.parents.is_empty() || grads[i].is_none() {
                    continue;
                }
                match node.backward.take() {
                    Some(rule) => (rule, node.parents.clone()),
                    None => continue,
                }
            };
            let g = grads[i].take().expect("checked above");
            let nodes = self.nodes.borrow();
            let inputs: Vec<&Tensor<T>> = parents.iter().map(|&p| &nodes[p].value).collect();
            let parent_grads = rule(&g, &inputs, &nodes[i].value);
            debug_assert_eq!(parent_grads.len(), parents.len());
            for (&p, pg) in parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "grad shape for {}", nodes[i].op);
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar_and_second_sweep() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones([1, 1, 1, 2]), true);
        assert!(matches!(tape.backward(x), Err(Error::NotScalar(_))));
        let s = tape.sum_all(x);
        assert!(tape.backward(s).is_ok());
        assert!(matches!(tape.backward(s), Err(Error::BackwardTwice)));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::ones([1, 1, 2, 2]));
        let y = tape.leaf(Tensor::ones([1, 1, 2, 2]), true);
        let z = tape.mul(x, y).unwrap();
        let s = tape.sum_all(z);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.get(y).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn reports_first_non_finite_node() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::from_vec([1, 1, 1, 2], vec![0.0, 1.0]).unwrap(), false);
        let y = tape.div(x, x).unwrap();
        let (idx, op, _) = tape.first_non_finite().unwrap();
        assert_eq!(idx, y.index());
        assert_eq!(op, "div");
    }
}
