//! Reverse-mode differentiation over the handful of ops the network uses.
//!
//! Network code is written against [`Exec`]. [`Eager`] evaluates directly and
//! drops intermediates as they go out of scope; [`Recorder`] appends every op
//! to a [`Tape`] that can later be differentiated or partially re-evaluated.
//!
//! Convolution parameters are not tape nodes. Ops refer to them by
//! [`LayerId`], an index into a caller-owned slice of [`ConvParams`], and
//! their gradients accumulate per layer, so a layer applied twice receives
//! the sum of both contributions.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{ConvParams, Scalar, Tensor};

/// Index of a convolution layer in a parameter slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerId(pub usize);

/// The operations a network forward pass is made of.
pub trait Exec<T: Scalar> {
    type Value;

    fn conv(&mut self, x: &Self::Value, layer: LayerId) -> Result<Self::Value>;
    fn leaky_relu(&mut self, x: &Self::Value, slope: T) -> Self::Value;
    fn concat(&mut self, xs: &[&Self::Value]) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// Channel count of a value, for shape checks in network code.
    fn channels(&self, x: &Self::Value) -> usize;
}

/// Direct evaluation without recording.
pub struct Eager<'a, T> {
    layers: &'a [ConvParams<T>],
}

impl<'a, T: Scalar> Eager<'a, T> {
    pub fn new(layers: &'a [ConvParams<T>]) -> Self {
        Self { layers }
    }
}

impl<T: Scalar> Exec<T> for Eager<'_, T> {
    type Value = Tensor<T>;

    fn conv(&mut self, x: &Tensor<T>, layer: LayerId) -> Result<Tensor<T>> {
        ops::conv2d(x, &self.layers[layer.0])
    }

    fn leaky_relu(&mut self, x: &Tensor<T>, slope: T) -> Tensor<T> {
        ops::leaky_relu(x, slope)
    }

    fn concat(&mut self, xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        ops::concat_channels(xs)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ops::add(a, b)
    }

    fn channels(&self, x: &Tensor<T>) -> usize {
        x.channels()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv { input: Var, layer: LayerId },
    LeakyRelu { input: Var, slope: T },
    Concat { inputs: Vec<Var> },
    Add { a: Var, b: Var },
    L1 { pred: Var, target: Tensor<T> },
    /// Sum of `input ⊙ weights`; a plain sum when `weights` is `None`.
    WeightedSum { input: Var, weights: Option<Tensor<T>> },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Recorded forward computation, in topological order.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    /// One entry per layer of the parameter slice; untouched layers are zero.
    pub layers: Vec<ConvParams<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a leaf node, if the loss depends on it.
    /// Gradients of intermediate nodes are released during the sweep.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Starts recording ops that read parameters from `layers`.
    pub fn recorder<'t, 'l>(&'t mut self, layers: &'l [ConvParams<T>]) -> Recorder<'t, 'l, T> {
        Recorder { tape: self, layers }
    }

    /// Mean absolute error against a constant target, as a scalar node.
    pub fn l1_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let loss = ops::l1_loss(self.value(pred), target)?;
        Ok(self.push(
            Op::L1 {
                pred,
                target: target.clone(),
            },
            Tensor::scalar(loss),
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().copied().sum();
        self.push(Op::WeightedSum { input, weights: None }, Tensor::scalar(s))
    }

    /// `Σ input ⊙ weights`, a smooth scalar projection used by gradient checks.
    pub fn weighted_sum(&mut self, input: Var, weights: &Tensor<T>) -> Result<Var> {
        let x = self.value(input);
        if x.shape() != weights.shape() {
            return Err(Error::shape("weighted_sum", &x.shape(), &weights.shape()));
        }
        let s = x.data().iter().zip(weights.data()).map(|(&a, &b)| a * b).sum();
        Ok(self.push(
            Op::WeightedSum {
                input,
                weights: Some(weights.clone()),
            },
            Tensor::scalar(s),
        ))
    }

    fn evaluate(&self, op: &Op<T>, layers: &[ConvParams<T>]) -> Result<Tensor<T>> {
        let v = |x: &Var| &self.nodes[x.0].value;
        Ok(match op {
            Op::Leaf => unreachable!("leaves are not re-evaluated"),
            Op::Conv { input, layer } => ops::conv2d(v(input), &layers[layer.0])?,
            Op::LeakyRelu { input, slope } => ops::leaky_relu(v(input), *slope),
            Op::Concat { inputs } => {
                let xs: Vec<&Tensor<T>> = inputs.iter().map(v).collect();
                ops::concat_channels(&xs)?
            }
            Op::Add { a, b } => ops::add(v(a), v(b))?,
            Op::L1 { pred, target } => Tensor::scalar(ops::l1_loss(v(pred), target)?),
            Op::WeightedSum { input, weights } => Tensor::scalar(match weights {
                Some(w) => v(input).data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum(),
                None => v(input).data().iter().copied().sum(),
            }),
        })
    }

    /// Index of the first node that reads `layer`, if any.
    pub fn first_use(&self, layer: LayerId) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| matches!(n.op, Op::Conv { layer: l, .. } if l == layer))
    }

    /// Re-evaluates every non-leaf node from index `start` on, reading
    /// (possibly modified) parameters from `layers`.
    pub fn recompute_from(&mut self, start: usize, layers: &[ConvParams<T>]) -> Result<()> {
        for i in start..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.evaluate(&self.nodes[i].op, layers)?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Propagates gradients from a scalar node back to every node and layer
    /// it depends on. Nodes are visited in reverse recording order, so
    /// fan-out contributions always accumulate in the same order.
    pub fn backward(&self, loss: Var, layers: &[ConvParams<T>]) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape != [1, 1, 1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        let mut layer_grads: Vec<Option<ConvParams<T>>> = vec![None; layers.len()];
        grads[loss.0] = Some(Tensor::scalar(T::ONE));

        fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
            match slot {
                Some(existing) => existing.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => grads[i] = Some(g),
                Op::Conv { input, layer } => {
                    let params = &layers[layer.0];
                    let x = &self.nodes[input.0].value;
                    let gp = ops::conv2d_backward_params(x, &g, params)?;
                    match &mut layer_grads[layer.0] {
                        Some(acc) => acc.add_assign(&gp),
                        slot => *slot = Some(gp),
                    }
                    accumulate(&mut grads[input.0], ops::conv2d_backward_input(&g, params)?);
                }
                Op::LeakyRelu { input, slope } => {
                    let x = &self.nodes[input.0].value;
                    accumulate(&mut grads[input.0], ops::leaky_relu_backward(x, &g, *slope));
                }
                Op::Concat { inputs } => {
                    let channels: Vec<usize> =
                        inputs.iter().map(|v| self.nodes[v.0].value.channels()).collect();
                    for (v, part) in inputs.iter().zip(ops::split_channels(&g, &channels)) {
                        accumulate(&mut grads[v.0], part);
                    }
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::L1 { pred, target } => {
                    let p = &self.nodes[pred.0].value;
                    let upstream = g.data()[0];
                    accumulate(&mut grads[pred.0], ops::l1_loss_backward(p, target, upstream));
                }
                Op::WeightedSum { input, weights } => {
                    let upstream = g.data()[0];
                    let x = &self.nodes[input.0].value;
                    let gi = match weights {
                        Some(w) => w.map(|v| v * upstream),
                        None => Tensor::full(x.shape(), upstream),
                    };
                    accumulate(&mut grads[input.0], gi);
                }
            }
        }

        let layers = layer_grads
            .into_iter()
            .zip(layers)
            .map(|(g, p)| g.unwrap_or_else(|| p.zeros_like()))
            .collect();
        Ok(Gradients {
            nodes: grads,
            layers,
        })
    }
}

/// [`Exec`] implementation that records onto a [`Tape`].
pub struct Recorder<'t, 'l, T> {
    tape: &'t mut Tape<T>,
    layers: &'l [ConvParams<T>],
}

impl<T: Scalar> Recorder<'_, '_, T> {
    pub fn tape(&mut self) -> &mut Tape<T> {
        self.tape
    }
}

impl<T: Scalar> Exec<T> for Recorder<'_, '_, T> {
    type Value = Var;

    fn conv(&mut self, x: &Var, layer: LayerId) -> Result<Var> {
        let y = ops::conv2d(self.tape.value(*x), &self.layers[layer.0])?;
        Ok(self.tape.push(Op::Conv { input: *x, layer }, y))
    }

    fn leaky_relu(&mut self, x: &Var, slope: T) -> Var {
        let y = ops::leaky_relu(self.tape.value(*x), slope);
        self.tape.push(Op::LeakyRelu { input: *x, slope }, y)
    }

    fn concat(&mut self, xs: &[&Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = xs.iter().map(|v| self.tape.value(**v)).collect();
        let y = ops::concat_channels(&values)?;
        let inputs = xs.iter().map(|v| **v).collect();
        Ok(self.tape.push(Op::Concat { inputs }, y))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = ops::add(self.tape.value(*a), self.tape.value(*b))?;
        Ok(self.tape.push(Op::Add { a: *a, b: *b }, y))
    }

    fn channels(&self, x: &Var) -> usize {
        self.tape.value(*x).channels()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec([1, 1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn l1_against_zero_gives_unit_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3.0]));
        let loss = tape.l1_loss(x, &t(&[0.0])).unwrap();
        let g = tape.backward(loss, &[]).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1.0, 2.0]));
        let y = tape.recorder(&[]).add(&x, &x).unwrap();
        assert!(matches!(tape.backward(y, &[]), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn fan_out_accumulates_both_paths() {
        // loss = sum(conv(x) + conv(x)) uses the layer twice.
        let layers = vec![ConvParams::new(Tensor::from_vec([1, 1, 1, 1], vec![2.0]).unwrap(), vec![0.5]).unwrap()];
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1.0, 3.0]));
        let mut rec = tape.recorder(&layers);
        let a = rec.conv(&x, LayerId(0)).unwrap();
        let b = rec.conv(&x, LayerId(0)).unwrap();
        let s = rec.add(&a, &b).unwrap();
        let loss = tape.sum(s);
        let g = tape.backward(loss, &layers).unwrap();
        // Each path contributes sum(x) = 4 to dW and 2 to db.
        assert_eq!(g.layers[0].weight.data(), &[8.0]);
        assert_eq!(g.layers[0].bias, vec![4.0]);
        assert_eq!(g.wrt(x).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn recompute_tracks_parameter_changes() {
        let mut layers = vec![ConvParams::new(Tensor::from_vec([1, 1, 1, 1], vec![1.0]).unwrap(), vec![0.0]).unwrap()];
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1.0, -2.0]));
        let y = tape.recorder(&layers).conv(&x, LayerId(0)).unwrap();
        let loss = tape.sum(y);
        assert_eq!(tape.value(loss).data(), &[-1.0]);
        layers[0].weight.data_mut()[0] = 3.0;
        let start = tape.first_use(LayerId(0)).unwrap();
        tape.recompute_from(start, &layers).unwrap();
        assert_eq!(tape.value(loss).data(), &[-3.0]);
    }
}
