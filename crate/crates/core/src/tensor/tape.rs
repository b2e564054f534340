use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::backward::propagate;
use super::value::Tensor;
use crate::error::{Error, Result};

/// Primitive operations recorded on a [`Tape`]. Parent links are node ids.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine(usize, f64),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    Sum(usize),
    Mean(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Log(usize),
    MaskedSoftmax(usize),
    SegmentSoftmax(usize, Arc<Vec<usize>>, usize),
    BroadcastRows(usize),
    TileRows(usize),
    RepeatRows(usize, usize),
    RepeatCols(usize, usize),
    GroupSumCols(usize, usize),
    Transpose(usize),
    Reshape(usize),
    GatherRows(usize, Arc<Vec<usize>>),
    ScatterRows(usize, usize, Arc<Vec<usize>>),
    ScatterAddRows(usize, Arc<Vec<usize>>),
    Conv1d {
        x: usize,
        w: usize,
        b: usize,
        kernel: usize,
        pad: usize,
    },
    Dropout(usize, Arc<Vec<f64>>),
    LayerNorm(usize, f64),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Ordered record of primitive operations. Record order is a topological
/// order, so the backward pass is a single reverse sweep.
///
/// A tape is confined to one thread; build one per forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::invalid("loss belongs to a different tape"));
        }
        let nodes = self.nodes.borrow();
        let numel = nodes[loss.id].value.numel();
        if numel != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        let mut leaves = HashMap::new();
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaves.insert(id, Tensor::from_parts(node.value.shape().to_vec(), g));
                continue;
            }
            propagate(&nodes, id, &g, &mut grads);
        }
        Ok(Gradients { leaves })
    }
}

/// Gradients of a scalar with respect to every reachable parameter leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.leaves.get(&var.id)
    }

    /// Gradient for `var`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.leaves
            .get(&var.id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.with_value(|t| t.data()[0])
    }
}
