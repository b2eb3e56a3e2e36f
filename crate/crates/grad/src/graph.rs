use crate::ops::Op;
use crate::{GradError, Real, Result, Tensor};

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node<S> {
    pub(crate) value: Tensor<S>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<S>,
}

/// Append-only record of applied primitives. Nodes are stored in creation
/// order, which is a topological order because every op only refers to
/// handles that already exist.
pub struct Graph<S> {
    pub(crate) nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Real> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulators handed to backward rules.
pub(crate) struct GradBufs<'a, S> {
    nodes: &'a [Node<S>],
    grads: &'a mut [Option<Vec<S>>],
}

impl<S: Real> GradBufs<'_, S> {
    /// Zero-initialised accumulator for `v`, or `None` when no gradient
    /// needs to flow there.
    pub(crate) fn get(&mut self, v: Var) -> Option<&mut [S]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(
            self.grads[v.0]
                .get_or_insert_with(|| vec![S::zero(); n])
                .as_mut_slice(),
        )
    }

    pub(crate) fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }
}

impl<S: Real> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Parameters pass `requires_grad = true`.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, true)
    }

    /// Passes the value forward and blocks every gradient flowing back.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        if cfg!(debug_assertions) && !value.all_finite() {
            let inputs_finite = op
                .inputs()
                .iter()
                .all(|v| self.nodes[v.0].value.all_finite());
            assert!(
                !inputs_finite,
                "{} produced a non-finite value from finite inputs",
                op.name()
            );
        }
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar. Afterwards [`Graph::grad`] returns
    /// `∂loss/∂v` for every node that requires a gradient; contributions from
    /// multiple uses of a node are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(GradError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![S::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !matches!(node.op, Op::Leaf) {
                let mut bufs = GradBufs {
                    nodes: &self.nodes,
                    grads: &mut grads,
                };
                node.op.backward(&self.nodes, &node.value, &g, &mut bufs);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient from the most recent [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<Tensor<S>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::from_parts(
            self.nodes[v.0].value.shape().to_vec(),
            g.clone(),
        ))
    }

    /// Like [`Graph::grad`], but yields zeros for a node that requires a
    /// gradient yet received none (it did not influence the loss).
    pub fn grad_or_zero(&self, v: Var) -> Tensor<S> {
        self.grad(v)
            .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.shape()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(&[2, 2], vec![1.0, -2.0, 3.0, 4.5]).unwrap());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn square_at_three_gives_six() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(&[3]));
        assert!(matches!(g.backward(x), Err(GradError::Contract(_))));
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.stop_gradient(x);
        let z = g.mul(y, x).unwrap();
        g.backward(z).unwrap();
        // only the direct path contributes
        assert_eq!(g.grad(x).unwrap().item(), 2.0);
        assert!(g.grad(y).is_none());
    }

    #[test]
    fn reused_tensor_accumulates_both_paths() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        let a = g.tanh(x);
        let b = g.sigmoid(x);
        let s = g.add(a, b).unwrap();
        let loss = g.sum(s);
        g.backward(loss).unwrap();
        let both = g.grad(x).unwrap();

        let mut ga = Graph::<f64>::new();
        let xa = ga.param(Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        let a = ga.tanh(xa);
        let la = ga.sum(a);
        ga.backward(la).unwrap();
        let mut gb = Graph::<f64>::new();
        let xb = gb.param(Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        let b = gb.sigmoid(xb);
        let lb = gb.sum(b);
        gb.backward(lb).unwrap();
        for i in 0..3 {
            let want = ga.grad(xa).unwrap().data()[i] + gb.grad(xb).unwrap().data()[i];
            assert!((both.data()[i] - want).abs() < 1e-15);
        }
    }
}
