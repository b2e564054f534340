use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Bound, Var};

/// Edge lists for attention-based message passing. Every node receives a
/// self-loop; those come first, in node order, followed by the given edges.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageGraph {
    pub num_nodes: usize,
    pub src: Arc<Vec<usize>>,
    pub dst: Arc<Vec<usize>>,
}

impl MessageGraph {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut src: Vec<usize> = (0..num_nodes).collect();
        let mut dst = src.clone();
        for &(u, v) in edges {
            src.push(u);
            dst.push(v);
        }
        Self {
            num_nodes,
            src: Arc::new(src),
            dst: Arc::new(dst),
        }
    }

    /// Disjoint union of `copies` copies, node `i` of copy `b` at `b·n + i`.
    /// Edge `e` of copy `b` sits at `b·E + e`.
    pub fn batched(&self, copies: usize) -> Self {
        let n = self.num_nodes;
        let shift = |v: &[usize]| -> Vec<usize> { (0..copies).flat_map(|b| v.iter().map(move |&i| b * n + i)).collect() };
        Self {
            num_nodes: n * copies,
            src: Arc::new(shift(&self.src)),
            dst: Arc::new(shift(&self.dst)),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Concatenated head outputs `[N, H·d_head]` plus per-edge attention `[E, H]`.
pub struct GatOutput<'t> {
    pub out: Var<'t>,
    pub attention: Var<'t>,
}

/// Multi-head additive graph attention.
///
/// With `W x` split into `heads` column blocks, head `k` scores edge `u→v` as
/// `leaky_relu(a_src·(W x_u) + a_dst·(W x_v), 0.2)`, normalizes the scores
/// over the in-neighborhood of `v` and sums the weighted `W x_u`.
pub fn gat_forward<'t>(
    graph: &MessageGraph,
    x: Var<'t>,
    weight: Var<'t>,
    a_src: Var<'t>,
    a_dst: Var<'t>,
    heads: usize,
) -> Result<GatOutput<'t>> {
    let rows = x.with_value(|t| t.rows());
    if rows != graph.num_nodes {
        return Err(Error::shape("gat_forward", &x.shape(), &[graph.num_nodes]));
    }
    let wx = x.matmul(weight)?;
    let width = wx.with_value(|t| t.cols());
    if heads == 0 || width % heads != 0 {
        return Err(Error::shape("gat_forward", &[width], &[heads]));
    }
    let dh = width / heads;
    let score = |a: Var<'t>| -> Result<Var<'t>> { wx.mul(a.broadcast_rows(rows)?)?.group_sum_cols(dh) };
    let s_src = score(a_src)?;
    let s_dst = score(a_dst)?;
    let logits = s_src
        .gather_rows(graph.src.clone())?
        .add(s_dst.gather_rows(graph.dst.clone())?)?
        .leaky_relu(0.2);
    let attention = logits.segment_softmax(graph.dst.clone(), graph.num_nodes)?;
    let messages = wx.gather_rows(graph.src.clone())?.mul(attention.repeat_cols(dh))?;
    let out = messages.scatter_add_rows(graph.dst.clone(), graph.num_nodes)?;
    Ok(GatOutput { out, attention })
}

/// Graph attention followed by the linear head-mixing layer of gate `prefix`.
pub(crate) fn gate_gat<'t>(
    graph: &MessageGraph,
    x: Var<'t>,
    p: &Bound<'t>,
    prefix: &str,
    heads: usize,
) -> Result<GatOutput<'t>> {
    let g = gat_forward(
        graph,
        x,
        p.get(&format!("{prefix}.w"))?,
        p.get(&format!("{prefix}.a_src"))?,
        p.get(&format!("{prefix}.a_dst"))?,
        heads,
    )?;
    let mixed = g
        .out
        .linear(p.get(&format!("{prefix}.mix.w"))?, Some(p.get(&format!("{prefix}.mix.b"))?))?;
    Ok(GatOutput {
        out: mixed,
        attention: g.attention,
    })
}
