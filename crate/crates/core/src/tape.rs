//! Define-by-run gradient tape.
//!
//! Every operation appends one node holding its output value, the ids of its
//! inputs and (when any input needs a gradient) a backward rule. Inputs always
//! precede the node that consumes them, so [`Tape::backward`] only has to walk
//! the node list in reverse.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of one recorded operation.
///
/// Given the operation's inputs, its output and the gradient flowing into the
/// output, returns one gradient per input (`None` when the input is not
/// differentiable, e.g. integer-like index tensors).
pub trait BackwardRule<T: Scalar> {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>>;
}

struct FnRule<F> {
    name: &'static str,
    f: F,
}

impl<T, F> BackwardRule<T> for FnRule<F>
where
    T: Scalar,
    F: Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> Vec<Option<Tensor<T>>>,
{
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        (self.f)(inputs, output, grad)
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    requires_grad: bool,
    inputs: Vec<usize>,
    rule: Option<Box<dyn BackwardRule<T>>>,
    grad: Option<Tensor<T>>,
}

/// Records a forward computation so gradients can be propagated back through it.
///
/// A tape is single-threaded and rebuilt for every forward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that never records backward rules (inference mode).
    pub fn no_grad() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf that receives a gradient on `backward`.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        let requires_grad = self.grad_enabled;
        self.push_leaf(value, requires_grad)
    }

    /// Adds a leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            inputs: Vec::new(),
            rule: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient populated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    /// Name of the operation that produced `v`, or `None` for leaves.
    pub fn op_name(&self, v: Var) -> Option<&'static str> {
        self.nodes[v.0].rule.as_ref().map(|r| r.name())
    }

    /// Appends an operation node. The rule is dropped when no input requires a
    /// gradient, so inference tapes hold values only.
    pub fn record<F>(&mut self, name: &'static str, inputs: &[Var], value: Tensor<T>, rule: F) -> Var
    where
        F: Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    {
        self.record_rule(inputs, value, Box::new(FnRule { name, f: rule }))
    }

    /// Like [`Tape::record`] but with a boxed rule object.
    pub fn record_rule(&mut self, inputs: &[Var], value: Tensor<T>, rule: Box<dyn BackwardRule<T>>) -> Var {
        let requires_grad = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            inputs: inputs.iter().map(|v| v.0).collect(),
            rule: requires_grad.then_some(rule),
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates gradients from a scalar `loss` (seed gradient 1) through the
    /// tape in reverse recording order. Afterwards every node that requires a
    /// gradient holds one, zero-filled if the loss does not depend on it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let loss_numel = self.nodes[loss.0].value.numel();
        if loss_numel != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape().to_vec(), T::one()));
        }

        for id in (0..=loss.0).rev() {
            let Some(rule) = self.nodes[id].rule.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let input_grads = rule.backward(&inputs, &node.value, &g);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "rule {}", rule.name());
            for (&input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[input].requires_grad {
                    continue;
                }
                debug_assert_eq!(ig.shape(), self.nodes[input].value.shape(), "rule {}", rule.name());
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
            grads[id] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = if node.requires_grad {
                Some(g.unwrap_or_else(|| Tensor::zeros_like(&node.value)))
            } else {
                None
            };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::ones([2]));
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn backward_rejects_empty_tape() {
        let mut tape = Tape::<f64>::new();
        assert!(tape.backward(Var(0)).is_err());
    }

    #[test]
    fn unreached_params_get_zero_grads() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::ones([3]));
        let unused = tape.param(Tensor::ones([2]));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(unused).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn no_grad_tape_records_no_rules() {
        let mut tape = Tape::<f64>::no_grad();
        let x = tape.param(Tensor::ones([3]));
        let s = tape.sum(x);
        assert!(!tape.requires_grad(s));
        assert!(tape.op_name(s).is_none());
    }
}
