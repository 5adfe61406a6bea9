//! Linear reverse-mode tape.
//!
//! Every operation is evaluated eagerly when recorded and appended after its
//! inputs, so the node order is already topological. [`Tape::backward`] walks
//! that order in reverse and lets each node's [`Op`] turn its output adjoint
//! into input adjoints. Adjoints are never reused silently: a second backward
//! pass is rejected until [`Tape::zero_grad`] is called.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation: eager forward plus its vector-Jacobian
/// product. The VJP may read only the context the op saved in `forward`,
/// the input values, the output value, and the output adjoint.
pub trait Op<T: Real> {
    fn name(&self) -> &'static str;

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>>;

    /// One entry per input; `None` marks an input the op does not
    /// differentiate.
    fn vjp(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Real> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    op: Option<Box<dyn Op<T>>>,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    adjoints: Vec<Option<Tensor<T>>>,
    populated: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            adjoints: Vec::new(),
            populated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input value (parameter or constant).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, x: T) -> Var {
        self.leaf(Tensor::scalar(x))
    }

    pub fn record(&mut self, mut op: Box<dyn Op<T>>, inputs: &[Var]) -> Result<Var> {
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::InvalidArgument(format!(
                "{}: input {} is not on this tape",
                op.name(),
                bad.0
            )));
        }
        let value = {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            op.forward(&vals)?
        };
        self.nodes.push(Node {
            value,
            inputs: inputs.to_vec(),
            op: Some(op),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Adjoint of `v` after [`Tape::backward`]; `None` when nothing flowed
    /// into it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, zeros if nothing flowed into it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        match self.grad(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.value(v).shape();
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.adjoints.clear();
        self.populated = false;
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.populated {
            return Err(Error::AdjointsNotZeroed);
        }
        let (rows, cols) = self.value(loss).shape();
        if rows != 1 || cols != 1 {
            return Err(Error::NotScalar { rows, cols });
        }
        self.adjoints = (0..self.nodes.len()).map(|_| None).collect();
        self.adjoints[loss.0] = Some(Tensor::scalar(T::one()));
        self.populated = true;

        for idx in (0..=loss.0).rev() {
            let Some(grad) = self.adjoints[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Some(op) = &node.op {
                let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                let input_grads = op.vjp(&inputs, &node.value, &grad);
                debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", op.name());
                for (var, g) in node.inputs.iter().zip(input_grads) {
                    let Some(g) = g else { continue };
                    debug_assert_eq!(g.shape(), self.nodes[var.0].value.shape(), "{}", op.name());
                    match &mut self.adjoints[var.0] {
                        Some(acc) => acc.add_assign(&g),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            self.adjoints[idx] = Some(grad);
        }
        Ok(())
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("shapes checked")
}

struct Add;

impl<T: Real> Op<T> for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        same_shape("add", inputs[0], inputs[1])?;
        Ok(zip_map(inputs[0], inputs[1], |x, y| x + y))
    }

    fn vjp(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(grad.clone()), Some(grad.clone())]
    }
}

struct Sub;

impl<T: Real> Op<T> for Sub {
    fn name(&self) -> &'static str {
        "sub"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        same_shape("sub", inputs[0], inputs[1])?;
        Ok(zip_map(inputs[0], inputs[1], |x, y| x - y))
    }

    fn vjp(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(grad.clone()), Some(grad.map(|g| -g))]
    }
}

struct Mul;

impl<T: Real> Op<T> for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        same_shape("mul", inputs[0], inputs[1])?;
        Ok(zip_map(inputs[0], inputs[1], |x, y| x * y))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![
            Some(zip_map(grad, inputs[1], |g, y| g * y)),
            Some(zip_map(grad, inputs[0], |g, x| g * x)),
        ]
    }
}

struct Scale<T>(T);

impl<T: Real> Op<T> for Scale<T> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let c = self.0;
        Ok(inputs[0].map(|x| c * x))
    }

    fn vjp(&self, _: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let c = self.0;
        vec![Some(grad.map(|g| c * g))]
    }
}

struct Sum;

impl<T: Real> Op<T> for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        Ok(Tensor::scalar(inputs[0].data().iter().copied().sum()))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let g = grad.item();
        vec![Some(inputs[0].map(|_| g))]
    }
}

struct Exp;

impl<T: Real> Op<T> for Exp {
    fn name(&self) -> &'static str {
        "exp"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        Ok(inputs[0].map(T::exp))
    }

    fn vjp(&self, _: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(zip_map(grad, output, |g, y| g * y))]
    }
}

/// `scale * tanh(x)`, an odd bounded map onto `(-scale, scale)`.
struct ScaledTanh<T>(T);

impl<T: Real> Op<T> for ScaledTanh<T> {
    fn name(&self) -> &'static str {
        "scaled_tanh"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let c = self.0;
        Ok(inputs[0].map(|x| c * x.tanh()))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let c = self.0;
        vec![Some(zip_map(grad, inputs[0], |g, x| {
            let th = x.tanh();
            g * c * (T::one() - th * th)
        }))]
    }
}

/// `scale * sigmoid(x)`, onto `(0, scale)`.
struct ScaledSigmoid<T>(T);

impl<T: Real> Op<T> for ScaledSigmoid<T> {
    fn name(&self) -> &'static str {
        "scaled_sigmoid"
    }

    fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let c = self.0;
        Ok(inputs[0].map(|x| c * sigmoid(x)))
    }

    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let c = self.0;
        vec![Some(zip_map(grad, inputs[0], |g, x| {
            let s = sigmoid(x);
            g * c * s * (T::one() - s)
        }))]
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Box::new(Add), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Box::new(Sub), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Box::new(Mul), &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.record(Box::new(Scale(c)), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.record(Box::new(Sum), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.record(Box::new(Exp), &[x])
    }

    pub fn scaled_tanh(&mut self, x: Var, scale: T) -> Result<Var> {
        self.record(Box::new(ScaledTanh(scale)), &[x])
    }

    pub fn scaled_sigmoid(&mut self, x: Var, scale: T) -> Result<Var> {
        self.record(Box::new(ScaledSigmoid(scale)), &[x])
    }
}
