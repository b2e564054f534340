use std::sync::Arc;

use super::gat::{gate_gat, MessageGraph};
use crate::error::{Error, Result};
use crate::tensor::{Bound, Var};

/// One recurrent update and its intermediates.
pub struct CellOutput<'t> {
    pub h: Var<'t>,
    pub z: Var<'t>,
    pub r: Var<'t>,
    pub candidate: Var<'t>,
    /// Per-edge attention of the z, r and candidate graph attentions.
    pub attention: [Var<'t>; 3],
}

/// GRU update whose gates are graph attentions over `graph`:
/// `z = σ(GAT_z(e))`, `r = σ(GAT_r(e))`, `c = tanh(GAT_h([e ‖ r ⊙ h]))`,
/// `h' = (1 − z) ⊙ h + z ⊙ c`. `branch` names the weight set.
pub fn gru_gat_step<'t>(
    graph: &MessageGraph,
    e_t: Var<'t>,
    h_prev: Var<'t>,
    p: &Bound<'t>,
    branch: &str,
    heads: usize,
) -> Result<CellOutput<'t>> {
    let (e_shape, h_shape) = (e_t.shape(), h_prev.shape());
    if e_shape.len() != 2 || h_shape.len() != 2 || e_shape[0] != h_shape[0] {
        return Err(Error::shape("gru_gat_step", &e_shape, &h_shape));
    }
    let gz = gate_gat(graph, e_t, p, &format!("{branch}.z"), heads)?;
    let gr = gate_gat(graph, e_t, p, &format!("{branch}.r"), heads)?;
    let z = gz.out.sigmoid();
    let r = gr.out.sigmoid();
    let u = Var::concat(&[e_t, r.mul(h_prev)?])?;
    let gh = gate_gat(graph, u, p, &format!("{branch}.h"), heads)?;
    let candidate = gh.out.tanh();
    let h = z.one_minus().mul(h_prev)?.add(z.mul(candidate)?)?;
    Ok(CellOutput {
        h,
        z,
        r,
        candidate,
        attention: [gz.attention, gr.attention, gh.attention],
    })
}

/// Per-head convex mix at the target rows:
/// `α ⊙ h_flow + (1 − α) ⊙ h_catch` with `α = sigmoid(α_raw)` repeated over
/// each head's slice of the hidden width. Other rows keep `h_flow` as is.
pub fn fuse_branches<'t>(
    h_flow: Var<'t>,
    h_catch: Var<'t>,
    alpha_raw: Var<'t>,
    target_rows: Arc<Vec<usize>>,
) -> Result<Var<'t>> {
    let hidden = h_flow.with_value(|t| t.cols());
    let heads = alpha_raw.with_value(|t| t.numel());
    if heads == 0 || !hidden.is_multiple_of(heads) {
        return Err(Error::shape("fuse_branches", &h_flow.shape(), &alpha_raw.shape()));
    }
    let k = target_rows.len();
    let alpha = alpha_raw
        .reshape(vec![1, heads])?
        .sigmoid()
        .repeat_cols(hidden / heads)
        .broadcast_rows(k)?;
    let flow_at_targets = h_flow.gather_rows(target_rows.clone())?;
    let mixed = alpha.mul(flow_at_targets)?.add(alpha.one_minus().mul(h_catch)?)?;
    h_flow.scatter_rows(mixed, target_rows)
}
