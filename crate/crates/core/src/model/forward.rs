use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cell::{fuse_branches, gru_gat_step};
use super::config::ModelConfig;
use super::dropout::DropoutStream;
use super::encoder::encode;
use super::gat::MessageGraph;
use super::state::{branch_prefix, ModelState};
use crate::data::{Batch, WindowSample};
use crate::error::{Error, Result};
use crate::graph::{remap_edges, BasinGraph};
use crate::tensor::{Bound, Tape, Tensor, Var};

/// Gaussian perturbation of the normalized forecast rainfall, seeded per
/// window so results do not depend on batching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastNoise {
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Train-mode dropout; `None` is evaluation mode.
    pub dropout: Option<DropoutStream>,
    pub capture_attention: bool,
    pub forecast_noise: Option<ForecastNoise>,
}

/// Attention averaged over the samples of one or more forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    /// Per head, `[K, K]` catchment attention: row = receiving station,
    /// column = sending station, diagonal = self-loop. Averaged over the
    /// three gates and all input steps. Empty without a catchment branch.
    pub spatial: Vec<Tensor>,
    /// `[K, T_in]` attention of each station's last query over its past.
    pub temporal: Tensor,
    pub samples: usize,
}

impl AttentionRecord {
    /// Sample-weighted average of `self` and `other`.
    pub fn merge(&mut self, other: &AttentionRecord) -> Result<()> {
        if self.spatial.len() != other.spatial.len() || self.temporal.shape() != other.temporal.shape() {
            return Err(Error::invalid("attention records differ in layout"));
        }
        let (a, b) = (self.samples as f64, other.samples as f64);
        let total = a + b;
        let blend = |x: &mut Tensor, y: &Tensor| {
            for (u, v) in x.data_mut().iter_mut().zip(y.data()) {
                *u = (*u * a + v * b) / total;
            }
        };
        for (x, y) in self.spatial.iter_mut().zip(&other.spatial) {
            blend(x, y);
        }
        blend(&mut self.temporal, &other.temporal);
        self.samples += other.samples;
        Ok(())
    }
}

/// Message-passing structures derived once from a basin graph.
#[derive(Debug, Clone)]
pub struct ModelGraphs {
    pub num_nodes: usize,
    pub targets: Vec<usize>,
    pub flow: MessageGraph,
    /// Over station positions `0..K`.
    pub catchment: MessageGraph,
}

impl ModelGraphs {
    pub fn new(graph: &BasinGraph) -> Self {
        Self {
            num_nodes: graph.num_nodes,
            targets: graph.targets.clone(),
            flow: MessageGraph::new(graph.num_nodes, &graph.flow_edges),
            catchment: MessageGraph::new(graph.targets.len(), &remap_edges(&graph.targets, &graph.catchment_edges)),
        }
    }

    /// Row of each (sample, station) pair in a batch of `batch` samples.
    pub fn target_rows(&self, batch: usize) -> Arc<Vec<usize>> {
        let n = self.num_nodes;
        Arc::new((0..batch).flat_map(|b| self.targets.iter().map(move |&t| b * n + t)).collect())
    }
}

pub struct Forward<'t> {
    /// `[B·K, T_out]`, normalized discharge.
    pub prediction: Var<'t>,
    pub attention: Option<AttentionRecord>,
}

/// Discharge head: forecast rain at each target passes a kernel-3
/// convolution over lead time, is joined with the final hidden state and
/// mapped to one value per lead by two kernel-1 layers with a relu between.
pub fn predict<'t>(
    h_final: Var<'t>,
    forecast_rain: Var<'t>,
    target_rows: Arc<Vec<usize>>,
    p: &Bound<'t>,
) -> Result<Var<'t>> {
    predict_inner(h_final, forecast_rain, target_rows, p, None)
}

fn predict_inner<'t>(
    h_final: Var<'t>,
    forecast_rain: Var<'t>,
    target_rows: Arc<Vec<usize>>,
    p: &Bound<'t>,
    dropout: Option<(&DropoutStream, &[usize])>,
) -> Result<Var<'t>> {
    let t_out = forecast_rain.with_value(|t| t.cols());
    let rows = target_rows.len();
    let hidden = h_final.with_value(|t| t.cols());
    let rain = forecast_rain
        .gather_rows(target_rows.clone())?
        .reshape(vec![rows, t_out, 1])?
        .conv1d(p.get("pred.rain.w")?, p.get("pred.rain.b")?, 3, 1)?
        .reshape(vec![rows * t_out, hidden])?;
    let state = h_final.gather_rows(target_rows)?.repeat_rows(t_out);
    let mut z = Var::concat(&[rain, state])?
        .linear(p.get("pred.fuse1.w")?, Some(p.get("pred.fuse1.b")?))?
        .relu();
    if let Some((stream, starts)) = dropout {
        z = z.dropout(stream.mask("pred", starts, rows * t_out / starts.len(), hidden))?;
    }
    z.linear(p.get("pred.fuse2.w")?, Some(p.get("pred.fuse2.b")?))?
        .reshape(vec![rows, t_out])
}

fn noisy_rain(batch: &Batch, noise: &ForecastNoise, per_sample: usize) -> Result<Tensor> {
    let normal = Normal::new(0.0, noise.std).map_err(|e| Error::invalid(format!("noise std: {e}")))?;
    let mut rain = batch.forecast_rain.clone();
    for (b, chunk) in rain.data_mut().chunks_mut(per_sample).enumerate() {
        let mut h = DefaultHasher::new();
        (noise.seed, batch.t_starts[b]).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        for v in chunk {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(rain)
}

/// Full forward pass over a batch on `p.tape`.
pub fn forward_batch<'t>(
    tape: &'t Tape,
    p: &Bound<'t>,
    graphs: &ModelGraphs,
    config: &ModelConfig,
    batch: &Batch,
    options: &ForwardOptions,
) -> Result<Forward<'t>> {
    config.validate()?;
    let bsz = batch.len();
    let (n, k) = (graphs.num_nodes, graphs.targets.len());
    let s = bsz * n;
    if bsz == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if batch.inputs.shape()[0] != s || batch.forecast_rain.shape() != [s, config.t_out] {
        return Err(Error::shape("model_forward", batch.inputs.shape(), &[s, config.t_in]));
    }
    let t_in = config.t_in;
    let heads = config.num_heads;
    let dropout = options.dropout.as_ref().map(|d| (d, batch.t_starts.as_slice()));

    let x = tape.constant(batch.inputs.clone());
    let enc = encode(x, p, config, dropout, options.capture_attention)?;
    let time_major: Vec<usize> = (0..t_in).flat_map(|t| (0..s).map(move |r| r * t_in + t)).collect();
    let seq = enc.seq.gather_rows(Arc::new(time_major))?;

    let flow = graphs.flow.batched(bsz);
    let catch = graphs.catchment.batched(bsz);
    let target_rows = graphs.target_rows(bsz);
    let use_catch = config.uses_catchment();
    let alpha_raw = if use_catch { Some(p.get("fusion.alpha_raw")?) } else { None };

    let mut spatial = (options.capture_attention && use_catch).then(|| vec![vec![0.0; k * k]; heads]);
    let mut h = tape.constant(Tensor::zeros(vec![s, config.hidden]));
    for t in 0..t_in {
        let e_t = seq.slice_rows(t * s, (t + 1) * s)?;
        let hf = gru_gat_step(&flow, e_t, h, p, branch_prefix(false), heads)?;
        h = match alpha_raw {
            Some(alpha_raw) => {
                let e_c = e_t.gather_rows(target_rows.clone())?;
                let h_c = h.gather_rows(target_rows.clone())?;
                let hc = gru_gat_step(&catch, e_c, h_c, p, branch_prefix(true), heads)?;
                if let Some(acc) = spatial.as_mut() {
                    let base = &graphs.catchment;
                    let per_copy = base.num_edges();
                    for att in &hc.attention {
                        att.with_value(|a| {
                            for e in 0..a.rows() {
                                let local = e % per_copy;
                                let (u, v) = (base.src[local], base.dst[local]);
                                for (hd, m) in acc.iter_mut().enumerate() {
                                    m[v * k + u] += a.row(e)[hd];
                                }
                            }
                        });
                    }
                }
                fuse_branches(hf.h, hc.h, alpha_raw, target_rows.clone())?
            }
            None => hf.h,
        };
    }

    let rain = match &options.forecast_noise {
        Some(noise) => noisy_rain(batch, noise, n * config.t_out)?,
        None => batch.forecast_rain.clone(),
    };
    let prediction = predict_inner(h, tape.constant(rain), target_rows, p, dropout)?;

    let attention = if options.capture_attention {
        let norm = (3 * t_in * bsz) as f64;
        let spatial = spatial
            .unwrap_or_default()
            .into_iter()
            .map(|m| Tensor::new(vec![k, k], m.into_iter().map(|v| v / norm).collect()))
            .collect::<Result<Vec<_>>>()?;
        let last = enc.last_query.expect("captured");
        let mut temporal = vec![0.0; k * t_in];
        for b in 0..bsz {
            for (st, &node) in graphs.targets.iter().enumerate() {
                for (acc, v) in temporal[st * t_in..(st + 1) * t_in].iter_mut().zip(last.row(b * n + node)) {
                    *acc += v / bsz as f64;
                }
            }
        }
        Some(AttentionRecord {
            spatial,
            temporal: Tensor::new(vec![k, t_in], temporal)?,
            samples: bsz,
        })
    } else {
        None
    };
    Ok(Forward { prediction, attention })
}

/// Evaluation-mode predictions `[B·K, T_out]` for a batch.
pub fn predict_batch(
    graphs: &ModelGraphs,
    state: &ModelState,
    config: &ModelConfig,
    batch: &Batch,
    options: &ForwardOptions,
) -> Result<(Tensor, Option<AttentionRecord>)> {
    let tape = Tape::new();
    let p = state.bind(&tape);
    let out = forward_batch(&tape, &p, graphs, config, batch, options)?;
    Ok((out.prediction.value(), out.attention))
}

/// Forward pass for one window: normalized predictions `[K, T_out]`.
pub fn model_forward(
    sample: &WindowSample,
    graph: &BasinGraph,
    state: &ModelState,
    config: &ModelConfig,
    capture_attention: bool,
) -> Result<(Tensor, Option<AttentionRecord>)> {
    let batch = Batch {
        t_starts: vec![sample.t_start],
        inputs: sample.inputs.clone(),
        forecast_rain: sample.forecast_rain.clone(),
        labels: sample.labels.clone(),
        label_mask: sample.label_mask.clone(),
    };
    let options = ForwardOptions {
        capture_attention,
        ..ForwardOptions::default()
    };
    predict_batch(&ModelGraphs::new(graph), state, config, &batch, &options)
}
