//! Backward rules: accumulate `dL/d parent` given `dL/d node`.

use super::kernels::{gemm, Mat};
use super::tape::{Node, Op};

/// Gradient buffer for `id`, allocated on first use. `None` when the node
/// does not need a gradient.
fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()]))
}

fn add_into(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: usize, f: impl Fn(usize) -> f64) {
    if let Some(buf) = slot(nodes, grads, id) {
        for (i, v) in buf.iter_mut().enumerate() {
            *v += f(i);
        }
    }
}

pub(crate) fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    let y = out.data();
    match nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            add_into(nodes, grads, a, |i| g[i]);
            add_into(nodes, grads, b, |i| g[i]);
        }
        Op::Sub(a, b) => {
            add_into(nodes, grads, a, |i| g[i]);
            add_into(nodes, grads, b, |i| -g[i]);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            add_into(nodes, grads, a, |i| g[i] * bv[i]);
            add_into(nodes, grads, b, |i| g[i] * av[i]);
        }
        Op::Affine(a, scale) => add_into(nodes, grads, a, |i| scale * g[i]),
        Op::Sum(a) => add_into(nodes, grads, a, |_| g[0]),
        Op::Mean(a) => {
            let n = nodes[a].value.numel() as f64;
            add_into(nodes, grads, a, |_| g[0] / n);
        }
        Op::Sigmoid(a) => add_into(nodes, grads, a, |i| g[i] * y[i] * (1.0 - y[i])),
        Op::Tanh(a) => add_into(nodes, grads, a, |i| g[i] * (1.0 - y[i] * y[i])),
        Op::Relu(a) => {
            let x = nodes[a].value.data();
            add_into(nodes, grads, a, |i| if x[i] > 0.0 { g[i] } else { 0.0 });
        }
        Op::LeakyRelu(a, slope) => {
            let x = nodes[a].value.data();
            add_into(nodes, grads, a, |i| if x[i] > 0.0 { g[i] } else { slope * g[i] });
        }
        Op::Exp(a) => add_into(nodes, grads, a, |i| g[i] * y[i]),
        Op::Log(a) => {
            let x = nodes[a].value.data();
            add_into(nodes, grads, a, |i| g[i] / x[i]);
        }
        Op::Dropout(a, ref mask) => add_into(nodes, grads, a, |i| g[i] * mask[i]),
        Op::Reshape(a) => add_into(nodes, grads, a, |i| g[i]),
        Op::MatMul(a, b) => matmul_backward(nodes, grads, a, b, g),
        Op::Concat(ref parts) => {
            let rows = out.rows();
            let total = out.cols();
            let mut offset = 0;
            for &p in parts {
                let c = nodes[p].value.cols();
                if let Some(buf) = slot(nodes, grads, p) {
                    for r in 0..rows {
                        for j in 0..c {
                            buf[r * c + j] += g[r * total + offset + j];
                        }
                    }
                }
                offset += c;
            }
        }
        Op::SliceCols(a, start) => {
            let (w, c) = (out.cols(), nodes[a].value.cols());
            if let Some(buf) = slot(nodes, grads, a) {
                for r in 0..out.rows() {
                    for j in 0..w {
                        buf[r * c + start + j] += g[r * w + j];
                    }
                }
            }
        }
        Op::SliceRows(a, start) => {
            let c = out.cols();
            if let Some(buf) = slot(nodes, grads, a) {
                for (d, s) in buf[start * c..start * c + g.len()].iter_mut().zip(g) {
                    *d += s;
                }
            }
        }
        Op::MaskedSoftmax(a) | Op::SegmentSoftmax(a, ..) => softmax_backward(nodes, grads, id, a, g),
        Op::BroadcastRows(a) => {
            let c = out.cols();
            if let Some(buf) = slot(nodes, grads, a) {
                for row in g.chunks(c) {
                    for (d, s) in buf.iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
        }
        Op::TileRows(a) => {
            let n = nodes[a].value.numel();
            if let Some(buf) = slot(nodes, grads, a) {
                for block in g.chunks(n) {
                    for (d, s) in buf.iter_mut().zip(block) {
                        *d += s;
                    }
                }
            }
        }
        Op::RepeatRows(a, k) => {
            let c = out.cols();
            if let Some(buf) = slot(nodes, grads, a) {
                for (r, d) in buf.chunks_mut(c).enumerate() {
                    for rep in 0..k {
                        let src = &g[(r * k + rep) * c..(r * k + rep + 1) * c];
                        for (dv, sv) in d.iter_mut().zip(src) {
                            *dv += sv;
                        }
                    }
                }
            }
        }
        Op::RepeatCols(a, k) => {
            if let Some(buf) = slot(nodes, grads, a) {
                for (d, group) in buf.iter_mut().zip(g.chunks(k)) {
                    *d += group.iter().sum::<f64>();
                }
            }
        }
        Op::GroupSumCols(a, k) => add_into(nodes, grads, a, |i| g[i / k]),
        Op::Transpose(a) => {
            let s = out.shape();
            let n = s.len();
            // out is [.., r, c]; input was [.., c, r].
            let (r, c) = (s[n - 2], s[n - 1]);
            let batch = out.numel() / (r * c).max(1);
            if let Some(buf) = slot(nodes, grads, a) {
                for b in 0..batch {
                    let off = b * r * c;
                    for i in 0..r {
                        for j in 0..c {
                            buf[off + j * r + i] += g[off + i * c + j];
                        }
                    }
                }
            }
        }
        Op::GatherRows(a, ref index) => {
            let c = out.cols();
            if let Some(buf) = slot(nodes, grads, a) {
                for (k, &i) in index.iter().enumerate() {
                    for j in 0..c {
                        buf[i * c + j] += g[k * c + j];
                    }
                }
            }
        }
        Op::ScatterRows(base, rows, ref index) => {
            let c = out.cols();
            if let Some(buf) = slot(nodes, grads, base) {
                let mut replaced = vec![false; out.rows()];
                for &i in index.iter() {
                    replaced[i] = true;
                }
                for (r, d) in buf.chunks_mut(c).enumerate() {
                    if !replaced[r] {
                        for (dv, sv) in d.iter_mut().zip(&g[r * c..(r + 1) * c]) {
                            *dv += sv;
                        }
                    }
                }
            }
            if let Some(buf) = slot(nodes, grads, rows) {
                for (k, &i) in index.iter().enumerate() {
                    for j in 0..c {
                        buf[k * c + j] += g[i * c + j];
                    }
                }
            }
        }
        Op::ScatterAddRows(a, ref index) => {
            let c = out.cols();
            if let Some(buf) = slot(nodes, grads, a) {
                for (k, &i) in index.iter().enumerate() {
                    for j in 0..c {
                        buf[k * c + j] += g[i * c + j];
                    }
                }
            }
        }
        Op::Conv1d { x, w, b, kernel, pad } => conv1d_backward(nodes, grads, g, x, w, b, kernel, pad, out.shape()),
        Op::LayerNorm(a, eps) => {
            let c = out.cols();
            let x = nodes[a].value.data();
            if let Some(buf) = slot(nodes, grads, a) {
                for r in 0..out.rows() {
                    let xr = &x[r * c..(r + 1) * c];
                    let mean = xr.iter().sum::<f64>() / c as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let yr = &y[r * c..(r + 1) * c];
                    let gr = &g[r * c..(r + 1) * c];
                    let gmean = gr.iter().sum::<f64>() / c as f64;
                    let gymean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        buf[r * c + j] += inv * (gr[j] - gmean - yr[j] * gymean);
                    }
                }
            }
        }
    }
}

fn matmul_backward(nodes: &[Node], grads: &mut [Option<Vec<f64>>], a: usize, b: usize, g: &[f64]) {
    let (av, bv) = (&nodes[a].value, &nodes[b].value);
    let sb = bv.shape();
    if sb.len() == 2 {
        let (k, n) = (sb[0], sb[1]);
        let m = av.rows();
        let gm = Mat::new(g, m, n);
        if let Some(buf) = slot(nodes, grads, a) {
            gemm(gm, Mat::new(bv.data(), k, n).t(), 1.0, buf);
        }
        if let Some(buf) = slot(nodes, grads, b) {
            gemm(Mat::new(av.data(), m, k).t(), gm, 1.0, buf);
        }
        return;
    }
    let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
    let n = sb[2];
    if let Some(buf) = slot(nodes, grads, a) {
        for i in 0..batch {
            gemm(
                Mat::new(&g[i * m * n..(i + 1) * m * n], m, n),
                Mat::new(&bv.data()[i * k * n..(i + 1) * k * n], k, n).t(),
                1.0,
                &mut buf[i * m * k..(i + 1) * m * k],
            );
        }
    }
    if let Some(buf) = slot(nodes, grads, b) {
        for i in 0..batch {
            gemm(
                Mat::new(&av.data()[i * m * k..(i + 1) * m * k], m, k).t(),
                Mat::new(&g[i * m * n..(i + 1) * m * n], m, n),
                1.0,
                &mut buf[i * k * n..(i + 1) * k * n],
            );
        }
    }
}

/// Shared by both softmax flavours: `dx = y ⊙ (dy − Σ_group y·dy)`.
fn softmax_backward(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: usize, a: usize, g: &[f64]) {
    let out = &nodes[id].value;
    let y = out.data();
    let c = out.cols();
    let Some(buf) = slot(nodes, grads, a) else { return };
    match &nodes[id].op {
        Op::SegmentSoftmax(_, segments, num_segments) => {
            let mut dot = vec![0.0; num_segments * c];
            for (r, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    dot[s * c + j] += y[r * c + j] * g[r * c + j];
                }
            }
            for (r, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    let i = r * c + j;
                    buf[i] += y[i] * (g[i] - dot[s * c + j]);
                }
            }
        }
        _ => {
            for r in 0..out.rows() {
                let (yr, gr) = (&y[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..c {
                    buf[r * c + j] += yr[j] * (gr[j] - dot);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    g: &[f64],
    x: usize,
    w: usize,
    b: usize,
    kernel: usize,
    pad: usize,
    out_shape: &[usize],
) {
    let (s, tout, cout) = (out_shape[0], out_shape[1], out_shape[2]);
    let xs = nodes[x].value.shape();
    let (t, cin) = (xs[1], xs[2]);
    let xd = nodes[x].value.data();
    let wd = nodes[w].value.data();
    if let Some(buf) = slot(nodes, grads, b) {
        for row in g.chunks(cout) {
            for (d, v) in buf.iter_mut().zip(row) {
                *d += v;
            }
        }
    }
    let taps = |mut f: Box<dyn FnMut(usize, usize, usize) + '_>| {
        for si in 0..s {
            for to in 0..tout {
                for k in 0..kernel {
                    let ti = to + k;
                    if ti < pad || ti - pad >= t {
                        continue;
                    }
                    f(si, to, k);
                }
            }
        }
    };
    if let Some(buf) = slot(nodes, grads, w) {
        taps(Box::new(|si, to, k| {
            let grow = &g[(si * tout + to) * cout..(si * tout + to + 1) * cout];
            let xrow = &xd[(si * t + to + k - pad) * cin..(si * t + to + k - pad + 1) * cin];
            for (c, &xv) in xrow.iter().enumerate() {
                let wrow = &mut buf[(k * cin + c) * cout..(k * cin + c + 1) * cout];
                for (wv, gv) in wrow.iter_mut().zip(grow) {
                    *wv += xv * gv;
                }
            }
        }));
    }
    if let Some(buf) = slot(nodes, grads, x) {
        taps(Box::new(|si, to, k| {
            let grow = &g[(si * tout + to) * cout..(si * tout + to + 1) * cout];
            let xi = (si * t + to + k - pad) * cin;
            for c in 0..cin {
                let wrow = &wd[(k * cin + c) * cout..(k * cin + c + 1) * cout];
                buf[xi + c] += wrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
            }
        }));
    }
}
