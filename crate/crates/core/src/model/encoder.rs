use super::config::ModelConfig;
use super::dropout::DropoutStream;
use crate::data::NUM_FEATURES;
use crate::error::{Error, Result};
use crate::tensor::{causal_window_mask, Bound, Tensor, Var, LAYER_NORM_EPS};

/// Sinusoidal position table `[len, d]`: even columns hold
/// `sin(t / 10000^(2i/d))`, odd columns the matching cosine.
pub fn positional_encoding(len: usize, d: usize) -> Result<Tensor> {
    if !d.is_multiple_of(2) {
        return Err(Error::invalid(format!("positional encoding width {d} must be even")));
    }
    let mut data = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d / 2 {
            let angle = t as f64 / 10000f64.powf((2 * i) as f64 / d as f64);
            data[t * d + 2 * i] = angle.sin();
            data[t * d + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![len, d], data)
}

pub(crate) fn layer_norm_affine<'t>(x: Var<'t>, p: &Bound<'t>, name: &str) -> Result<Var<'t>> {
    let rows = x.with_value(Tensor::rows);
    let gain = p.get(&format!("{name}.gain"))?.broadcast_rows(rows)?;
    let bias = p.get(&format!("{name}.bias"))?.broadcast_rows(rows)?;
    x.layer_norm(LAYER_NORM_EPS).mul(gain)?.add(bias)
}

/// Encoder output: embeddings `[S·T, d]` (row `s·T + t`) and, on request,
/// the head-averaged attention of the last query `[S, T]`.
pub(crate) struct Encoded<'t> {
    pub seq: Var<'t>,
    pub last_query: Option<Tensor>,
}

pub(crate) fn encode<'t>(
    x: Var<'t>,
    p: &Bound<'t>,
    config: &ModelConfig,
    dropout: Option<(&DropoutStream, &[usize])>,
    capture: bool,
) -> Result<Encoded<'t>> {
    let shape = x.shape();
    let [s, t, f] = shape[..] else {
        return Err(Error::shape("temporal_encode", &shape, &[config.t_in, NUM_FEATURES]));
    };
    if t != config.t_in || f != NUM_FEATURES {
        return Err(Error::shape("temporal_encode", &shape, &[s, config.t_in, NUM_FEATURES]));
    }
    let tape = x.tape();
    let d = config.d_model;
    let heads = config.num_heads;
    let dh = d / heads;
    let rows = s * t;
    let per_sample = |n: usize| dropout.map(|(_, starts)| n / starts.len().max(1));

    let pe = positional_encoding(t, d)?;
    let pe = tape.constant(pe).tile_rows(s);
    let flat = x.reshape(vec![rows, f])?;
    let e = flat.linear(p.get("enc.w_in")?, Some(p.get("enc.b_in")?))?.add(pe)?;

    // attention sublayer
    let a = layer_norm_affine(e, p, "enc.ln1")?;
    let q = a.matmul(p.get("enc.wq")?)?;
    let k = a.matmul(p.get("enc.wk")?)?;
    let v = a.matmul(p.get("enc.wv")?)?;
    let mask = causal_window_mask(t, config.attn_window);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut last = capture.then(|| vec![0.0; s * t]);
    for hd in 0..heads {
        let split = |m: Var<'t>| -> Result<Var<'t>> { m.slice_cols(hd * dh, (hd + 1) * dh)?.reshape(vec![s, t, dh]) };
        let (qh, kh, vh) = (split(q)?, split(k)?, split(v)?);
        let weights = qh.matmul(kh.transpose()?)?.scale(scale).softmax_with_mask(&mask)?;
        if let Some(last) = last.as_mut() {
            weights.with_value(|w| {
                for si in 0..s {
                    let row = w.row(si * t + t - 1);
                    for (acc, &v) in last[si * t..(si + 1) * t].iter_mut().zip(row) {
                        *acc += v / heads as f64;
                    }
                }
            });
        }
        outs.push(weights.matmul(vh)?.reshape(vec![rows, dh])?);
    }
    let mut attn = Var::concat(&outs)?.linear(p.get("enc.wo")?, Some(p.get("enc.bo")?))?;
    if let (Some((stream, starts)), Some(n)) = (dropout, per_sample(rows)) {
        attn = attn.dropout(stream.mask("enc.attn", starts, n, d))?;
    }
    let e = e.add(attn)?;

    // feed-forward sublayer
    let b = layer_norm_affine(e, p, "enc.ln2")?;
    let hidden = b.linear(p.get("enc.ff1.w")?, Some(p.get("enc.ff1.b")?))?.relu();
    let mut ff = hidden.linear(p.get("enc.ff2.w")?, Some(p.get("enc.ff2.b")?))?;
    if let (Some((stream, starts)), Some(n)) = (dropout, per_sample(rows)) {
        ff = ff.dropout(stream.mask("enc.ff", starts, n, d))?;
    }
    let seq = e.add(ff)?;
    Ok(Encoded {
        seq,
        last_query: last.map(|l| Tensor::new(vec![s, t], l).expect("sized above")),
    })
}

/// Per-node causal windowed self-attention encoder, `[S, T_in, F]` to
/// `[S, T_in, d_model]`. Evaluation mode (no dropout).
pub fn temporal_encode<'t>(x: Var<'t>, p: &Bound<'t>, config: &ModelConfig) -> Result<Var<'t>> {
    let s = x.shape()[0];
    encode(x, p, config, None, false)?
        .seq
        .reshape(vec![s, config.t_in, config.d_model])
}
