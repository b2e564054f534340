use crate::error::{Error, Result};
use crate::model::{forward_batch, DropoutStream, ForwardOptions, ModelConfig, ModelGraphs, ModelState};
use crate::data::Dataset;
use crate::tensor::{ParamTable, Tape, Tensor, Var};

/// Mean squared error over the entries where `mask` is 1 (all entries when
/// no mask is given). Returns the loss and the number of entries averaged.
pub fn masked_loss<'t>(prediction: Var<'t>, labels: &Tensor, mask: Option<&Tensor>) -> Result<(Var<'t>, usize)> {
    let shape = prediction.shape();
    if shape != labels.shape() || mask.is_some_and(|m| m.shape() != labels.shape()) {
        return Err(Error::shape("masked_loss", &shape, labels.shape()));
    }
    let tape = prediction.tape();
    let diff = prediction.sub(tape.constant(labels.clone()))?;
    let (sq, count) = match mask {
        Some(m) => {
            let count = m.data().iter().filter(|&&v| v != 0.0).count();
            (diff.mul(diff)?.mul(tape.constant(m.clone()))?, count)
        }
        None => (diff.mul(diff)?, labels.numel()),
    };
    Ok((sq.sum().scale(1.0 / count.max(1) as f64), count))
}

/// One worker's contribution to a synchronized step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Gradient of the worker's mean loss, keyed like the model state.
    pub gradients: ParamTable,
    /// Labelled entries behind the mean; the all-reduce weight.
    pub sample_count: usize,
    /// Sum of squared errors over those entries.
    pub loss_sum: f64,
}

impl GradientBundle {
    pub fn empty(like: &ParamTable) -> Self {
        Self {
            gradients: like.zeros_like(),
            sample_count: 0,
            loss_sum: 0.0,
        }
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.sample_count.max(1) as f64
    }
}

/// Sample-weighted mean of the bundles, accumulated in the given order so
/// every caller obtains bit-identical results.
pub fn allreduce_average(bundles: &[GradientBundle]) -> Result<GradientBundle> {
    let first = bundles.first().ok_or_else(|| Error::invalid("all-reduce over zero bundles"))?;
    for b in &bundles[1..] {
        first.gradients.check_aligned(&b.gradients)?;
    }
    let total: usize = bundles.iter().map(|b| b.sample_count).sum();
    let mut out = first.gradients.zeros_like();
    if total > 0 {
        for b in bundles.iter().filter(|b| b.sample_count > 0) {
            let w = b.sample_count as f64 / total as f64;
            for ((_, acc), (_, g)) in out.iter_mut().zip(b.gradients.iter()) {
                for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += w * v;
                }
            }
        }
    }
    Ok(GradientBundle {
        gradients: out,
        sample_count: total,
        loss_sum: bundles.iter().map(|b| b.loss_sum).sum(),
    })
}

/// Forward and backward pass over the windows starting at `starts`.
pub fn compute_bundle(
    dataset: &Dataset,
    graphs: &ModelGraphs,
    state: &ModelState,
    config: &ModelConfig,
    starts: &[usize],
    dropout: Option<DropoutStream>,
) -> Result<GradientBundle> {
    if starts.is_empty() {
        return Ok(GradientBundle::empty(state));
    }
    let batch = dataset.batch(starts);
    let tape = Tape::new();
    let p = state.bind(&tape);
    let options = ForwardOptions {
        dropout,
        ..ForwardOptions::default()
    };
    let out = forward_batch(&tape, &p, graphs, config, &batch, &options)?;
    let (loss, count) = masked_loss(out.prediction, &batch.labels, Some(&batch.label_mask))?;
    let grads = tape.backward(loss)?;
    Ok(GradientBundle {
        gradients: p.gradients(&grads),
        sample_count: count,
        loss_sum: loss.item() * count as f64,
    })
}

/// Evaluation-mode masked MSE over `starts`, processed in chunks.
pub fn evaluate_loss(
    dataset: &Dataset,
    graphs: &ModelGraphs,
    state: &ModelState,
    config: &ModelConfig,
    starts: &[usize],
    chunk: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for part in starts.chunks(chunk.max(1)) {
        let batch = dataset.batch(part);
        let tape = Tape::new();
        let p = state.bind(&tape);
        let out = forward_batch(&tape, &p, graphs, config, &batch, &ForwardOptions::default())?;
        let (loss, n) = masked_loss(out.prediction, &batch.labels, Some(&batch.label_mask))?;
        sum += loss.item() * n as f64;
        count += n;
    }
    Ok(sum / count.max(1) as f64)
}
