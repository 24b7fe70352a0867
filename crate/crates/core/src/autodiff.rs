//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Forward operations append nodes in execution order, so the tape is already
//! topologically sorted: each node's inputs precede it. `backward` walks the
//! nodes in reverse, propagating gradients through per-op backward closures.
//!
//! Every intermediate value lives in an arena indexed by [`ValueId`]; backward
//! closures read saved activations straight from the arena instead of cloning
//! them at record time. A tape is single-owner: one training step builds it,
//! runs backward once, and drops it.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Index of a value in the tape's arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(pub(crate) usize);

/// Backward rule: given the arena, the gradient flowing into the node's
/// output, and a sink for input gradients, accumulate each input's share.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[Tensor<T>], &Tensor<T>, &mut GradSink<'_, T>)>;

struct Node<T: Scalar> {
    output: ValueId,
    backward: BackwardFn<T>,
}

/// Accumulates gradients during the reverse sweep.
///
/// Backward rules call [`GradSink::needs`] to skip inputs that do not require
/// gradients (e.g. the raw input batch) and [`GradSink::accum`] to add their
/// contribution into a lazily-created zero buffer.
pub struct GradSink<'a, T: Scalar> {
    slots: &'a mut [Option<Tensor<T>>],
    requires: &'a [bool],
    shapes: &'a [Vec<usize>],
}

impl<T: Scalar> GradSink<'_, T> {
    pub fn needs(&self, id: ValueId) -> bool {
        self.requires[id.0]
    }

    /// Mutable gradient buffer for `id`, zero-initialized on first touch.
    pub fn accum(&mut self, id: ValueId) -> &mut Tensor<T> {
        let slot = &mut self.slots[id.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(&self.shapes[id.0]));
        }
        slot.as_mut().unwrap()
    }

    /// Convenience: add a ready-made contribution if the input needs it.
    pub fn add(&mut self, id: ValueId, contribution: &Tensor<T>) -> Result<()> {
        if self.needs(id) {
            self.accum(id).add_scaled(contribution, T::one())?;
        }
        Ok(())
    }
}

/// Gradient map produced by [`Tape::backward`], keyed by value id.
pub struct Gradients<T: Scalar> {
    slots: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ValueId) -> Option<&Tensor<T>> {
        self.slots[id.0].as_ref()
    }

    /// Gradient for `id`, zeros if no path reached it. Shape always mirrors
    /// the value's shape.
    pub fn take_or_zeros(&mut self, id: ValueId) -> Tensor<T> {
        self.slots[id.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]))
    }
}

/// The recording tape. See module docs.
#[derive(Default)]
pub struct Tape<T: Scalar> {
    values: Vec<Tensor<T>>,
    requires: Vec<bool>,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            requires: Vec::new(),
            nodes: Vec::new(),
        }
    }

    /// Register a constant/input value; no gradient will be computed for it.
    pub fn leaf(&mut self, value: Tensor<T>) -> ValueId {
        self.push_value(value, false)
    }

    /// Register a trainable value; backward will always produce a gradient
    /// tensor of identical shape for it (zeros if unreached).
    pub fn param(&mut self, value: Tensor<T>) -> ValueId {
        self.push_value(value, true)
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_ops(&self) -> usize {
        self.nodes.len()
    }

    fn push_value(&mut self, value: Tensor<T>, requires: bool) -> ValueId {
        let id = ValueId(self.values.len());
        self.values.push(value);
        self.requires.push(requires);
        id
    }

    /// Record an executed operation: store its output and its backward rule.
    /// The output requires a gradient iff any input does.
    pub(crate) fn push_op(
        &mut self,
        inputs: &[ValueId],
        output: Tensor<T>,
        backward: BackwardFn<T>,
    ) -> ValueId {
        let requires = inputs.iter().any(|id| self.requires[id.0]);
        let out = self.push_value(output, requires);
        if requires {
            self.nodes.push(Node {
                output: out,
                backward,
            });
        }
        out
    }

    /// Elementwise sum of two same-shape values (residual/skip connections).
    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push_op(
            &[a, b],
            out,
            Box::new(move |_vals, dy, sink| {
                sink.add(a, dy).expect("add backward: shape fixed at forward");
                sink.add(b, dy).expect("add backward: shape fixed at forward");
            }),
        ))
    }

    /// Scalar reduction `sum_i x[i] * (slope * i + offset)`. A cheap
    /// non-uniform objective, used to drive gradient checks of single ops.
    pub fn weighted_sum(&mut self, x: ValueId, slope: f64, offset: f64) -> Result<ValueId> {
        let v = self.value(x);
        let total = v
            .data()
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &e)| {
                acc + e * T::from_f64(slope * i as f64 + offset)
            });
        Ok(self.push_op(
            &[x],
            Tensor::scalar(total),
            Box::new(move |_vals, dy, sink| {
                if !sink.needs(x) {
                    return;
                }
                let d = dy.data()[0];
                let buf = sink.accum(x);
                for (i, g) in buf.data_mut().iter_mut().enumerate() {
                    *g = *g + d * T::from_f64(slope * i as f64 + offset);
                }
            }),
        ))
    }

    /// Reverse sweep from a scalar loss. Returns the full gradient map;
    /// gradients of intermediate values are freed as soon as they have been
    /// consumed, so what remains afterwards is essentially the leaves.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got {} elements",
                self.value(loss).numel()
            )));
        }
        let shapes: Vec<Vec<usize>> = self.values.iter().map(|v| v.shape().to_vec()).collect();
        let mut slots: Vec<Option<Tensor<T>>> = (0..self.values.len()).map(|_| None).collect();
        // d(loss)/d(loss) = 1
        slots[loss.0] = Some(Tensor::filled(&shapes[loss.0], T::one()));

        for node in self.nodes.iter().rev() {
            // Values produced by exactly one node and consumed only later in
            // the tape: by the time we reach the producer, every consumer has
            // already contributed, so the slot can be taken (and freed).
            let Some(out_grad) = slots[node.output.0].take() else {
                continue;
            };
            let mut sink = GradSink {
                slots: &mut slots,
                requires: &self.requires,
                shapes: &shapes,
            };
            (node.backward)(&self.values, &out_grad, &mut sink);
        }

        Ok(Gradients { slots, shapes })
    }
}
