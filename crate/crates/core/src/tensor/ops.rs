//! Forward rules for every primitive. Backward rules live in `backward.rs`.

use std::sync::Arc;

use super::kernels::{gemm, masked_softmax_row, sigmoid, Mat};
use super::tape::{Op, Var};
use super::value::Tensor;
use crate::error::{Error, Result};

impl<'t> Var<'t> {
    fn record(&self, value: Tensor, op: Op, parents: &[usize]) -> Var<'t> {
        let requires_grad = parents.iter().any(|&p| self.tape.requires_grad(p));
        self.tape.push(value, op, requires_grad)
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::invalid("operands recorded on different tapes"))
        }
    }

    fn map(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.with_value(|t| {
            Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
        });
        self.record(value, op, &[self.id])
    }

    fn zip(&self, other: &Var<'t>, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_tape(other)?;
        let nodes = self.tape.nodes.borrow();
        let a = &nodes[self.id].value;
        let b = &nodes[other.id].value;
        if a.shape() != b.shape() {
            return Err(Error::shape(name, a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(a.shape().to_vec(), data))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.zip(&other, "add", |a, b| a + b)?;
        Ok(self.record(v, Op::Add(self.id, other.id), &[self.id, other.id]))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.zip(&other, "sub", |a, b| a - b)?;
        Ok(self.record(v, Op::Sub(self.id, other.id), &[self.id, other.id]))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.zip(&other, "mul", |a, b| a * b)?;
        Ok(self.record(v, Op::Mul(self.id, other.id), &[self.id, other.id]))
    }

    /// `scale * x + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Var<'t> {
        self.map(Op::Affine(self.id, scale), |v| scale * v + shift)
    }

    pub fn scale(&self, scale: f64) -> Var<'t> {
        self.affine(scale, 0.0)
    }

    /// `1 - x`.
    pub fn one_minus(&self) -> Var<'t> {
        self.map(Op::Affine(self.id, -1.0), |v| 1.0 - v)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.map(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.map(Op::Tanh(self.id), f64::tanh)
    }

    pub fn relu(&self) -> Var<'t> {
        self.map(Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.map(Op::LeakyRelu(self.id, slope), move |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn exp(&self) -> Var<'t> {
        self.map(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(&self) -> Var<'t> {
        self.map(Op::Log(self.id), f64::ln)
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.with_value(Tensor::sum);
        self.record(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> Var<'t> {
        let s = self.with_value(|t| t.sum() / t.numel() as f64);
        self.record(Tensor::scalar(s), Op::Mean(self.id), &[self.id])
    }

    /// Matrix product over the trailing two axes.
    ///
    /// A rank-2 right operand acts on every row of `self`; two rank-3
    /// operands multiply batch by batch.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            matmul_forward(a, b)?
        };
        Ok(self.record(value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    /// Concatenation along the trailing axis. All inputs share leading shape.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        for p in parts {
            first.same_tape(p)?;
        }
        let value = {
            let nodes = first.tape.nodes.borrow();
            let lead = nodes[first.id].value.shape();
            let lead = &lead[..lead.len() - 1];
            let rows = nodes[first.id].value.rows();
            let mut total = 0;
            for p in parts {
                let s = nodes[p.id].value.shape();
                if &s[..s.len() - 1] != lead {
                    return Err(Error::shape("concat", nodes[first.id].value.shape(), s));
                }
                total += nodes[p.id].value.cols();
            }
            let mut data = vec![0.0; rows * total];
            let mut offset = 0;
            for p in parts {
                let t = &nodes[p.id].value;
                let c = t.cols();
                for r in 0..rows {
                    data[r * total + offset..r * total + offset + c].copy_from_slice(t.row(r));
                }
                offset += c;
            }
            let mut shape = lead.to_vec();
            shape.push(total);
            Tensor::from_parts(shape, data)
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.record(value, Op::Concat(ids.clone()), &ids))
    }

    /// Columns `[start, end)` of the trailing axis.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            let c = t.cols();
            if start > end || end > c {
                return Err(Error::shape("slice_cols", t.shape(), &[start, end]));
            }
            let w = end - start;
            let mut data = Vec::with_capacity(t.rows() * w);
            for r in 0..t.rows() {
                data.extend_from_slice(&t.row(r)[start..end]);
            }
            let mut shape = t.shape().to_vec();
            *shape.last_mut().unwrap() = w;
            Ok(Tensor::from_parts(shape, data))
        })?;
        Ok(self.record(value, Op::SliceCols(self.id, start), &[self.id]))
    }

    /// Rows `[start, end)` of the `[rows, cols]` view; the result is rank 2.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            if start > end || end > t.rows() {
                return Err(Error::shape("slice_rows", t.shape(), &[start, end]));
            }
            let c = t.cols();
            Ok(Tensor::from_parts(
                vec![end - start, c],
                t.data()[start * c..end * c].to_vec(),
            ))
        })?;
        Ok(self.record(value, Op::SliceRows(self.id, start), &[self.id]))
    }

    /// Softmax along the trailing axis after adding `mask`, whose shape is
    /// `[k, cols]` and which repeats over the leading rows (row `r` uses mask
    /// row `r % k`). Mask entries are `0` (kept) or `-inf` (excluded).
    pub fn softmax_with_mask(&self, mask: &Tensor) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            let c = t.cols();
            if mask.cols() != c || mask.numel() == 0 || t.rows() % mask.rows() != 0 {
                return Err(Error::shape("softmax_with_mask", t.shape(), mask.shape()));
            }
            let k = mask.rows();
            let mut data = t.data().to_vec();
            for (r, row) in data.chunks_mut(c).enumerate() {
                if !masked_softmax_row(row, mask.row(r % k)) {
                    return Err(Error::invalid(format!("softmax row {r} is fully masked")));
                }
            }
            Ok(Tensor::from_parts(t.shape().to_vec(), data))
        })?;
        Ok(self.record(value, Op::MaskedSoftmax(self.id), &[self.id]))
    }

    /// Softmax over groups of rows: for every column, rows sharing a
    /// segment id are normalized together. `segments[r] < num_segments`.
    pub fn segment_softmax(&self, segments: Arc<Vec<usize>>, num_segments: usize) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            if segments.len() != t.rows() || segments.iter().any(|&s| s >= num_segments) {
                return Err(Error::shape("segment_softmax", t.shape(), &[segments.len(), num_segments]));
            }
            let c = t.cols();
            let mut max = vec![f64::NEG_INFINITY; num_segments * c];
            for (r, &s) in segments.iter().enumerate() {
                for (m, &v) in max[s * c..(s + 1) * c].iter_mut().zip(t.row(r)) {
                    *m = m.max(v);
                }
            }
            let mut data = vec![0.0; t.numel()];
            let mut total = vec![0.0; num_segments * c];
            for (r, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    let e = (t.row(r)[j] - max[s * c + j]).exp();
                    data[r * c + j] = e;
                    total[s * c + j] += e;
                }
            }
            for (r, &s) in segments.iter().enumerate() {
                for j in 0..c {
                    data[r * c + j] /= total[s * c + j];
                }
            }
            Ok(Tensor::from_parts(t.shape().to_vec(), data))
        })?;
        Ok(self.record(value, Op::SegmentSoftmax(self.id, segments, num_segments), &[self.id]))
    }

    /// Repeats a single row `[1, c]` (or `[c]`) into `[rows, c]`.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            if t.rows() != 1 {
                return Err(Error::shape("broadcast_rows", t.shape(), &[rows, t.cols()]));
            }
            let c = t.cols();
            let mut data = Vec::with_capacity(rows * c);
            for _ in 0..rows {
                data.extend_from_slice(t.data());
            }
            Ok(Tensor::from_parts(vec![rows, c], data))
        })?;
        Ok(self.record(value, Op::BroadcastRows(self.id), &[self.id]))
    }

    /// Stacks `reps` copies of the whole `[rows, c]` block.
    pub fn tile_rows(&self, reps: usize) -> Var<'t> {
        let value = self.with_value(|t| {
            let mut data = Vec::with_capacity(reps * t.numel());
            for _ in 0..reps {
                data.extend_from_slice(t.data());
            }
            Tensor::from_parts(vec![reps * t.rows(), t.cols()], data)
        });
        self.record(value, Op::TileRows(self.id), &[self.id])
    }

    /// Repeats every row `k` times in place: `[r, c] -> [r * k, c]`.
    pub fn repeat_rows(&self, k: usize) -> Var<'t> {
        let value = self.with_value(|t| {
            let mut data = Vec::with_capacity(k * t.numel());
            for r in 0..t.rows() {
                for _ in 0..k {
                    data.extend_from_slice(t.row(r));
                }
            }
            Tensor::from_parts(vec![t.rows() * k, t.cols()], data)
        });
        self.record(value, Op::RepeatRows(self.id, k), &[self.id])
    }

    /// Repeats every column `k` times in place: `[r, h] -> [r, h * k]`.
    pub fn repeat_cols(&self, k: usize) -> Var<'t> {
        let value = self.with_value(|t| {
            let mut data = Vec::with_capacity(k * t.numel());
            for &v in t.data() {
                data.extend(std::iter::repeat_n(v, k));
            }
            let mut shape = t.shape().to_vec();
            *shape.last_mut().unwrap() *= k;
            Tensor::from_parts(shape, data)
        });
        self.record(value, Op::RepeatCols(self.id, k), &[self.id])
    }

    /// Sums consecutive groups of `k` columns: `[r, h * k] -> [r, h]`.
    pub fn group_sum_cols(&self, k: usize) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            if k == 0 || t.cols() % k != 0 {
                return Err(Error::shape("group_sum_cols", t.shape(), &[k]));
            }
            let data = t.data().chunks(k).map(|g| g.iter().sum()).collect();
            let mut shape = t.shape().to_vec();
            *shape.last_mut().unwrap() /= k;
            Ok(Tensor::from_parts(shape, data))
        })?;
        Ok(self.record(value, Op::GroupSumCols(self.id, k), &[self.id]))
    }

    /// Swaps the trailing two axes (rank 2 or 3).
    pub fn transpose(&self) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            let s = t.shape();
            let (batch, r, c) = match *s {
                [r, c] => (1, r, c),
                [b, r, c] => (b, r, c),
                _ => return Err(Error::shape("transpose", s, &[])),
            };
            let mut data = vec![0.0; t.numel()];
            let src = t.data();
            for b in 0..batch {
                let off = b * r * c;
                for i in 0..r {
                    for j in 0..c {
                        data[off + j * r + i] = src[off + i * c + j];
                    }
                }
            }
            let mut shape = s.to_vec();
            let n = shape.len();
            shape.swap(n - 1, n - 2);
            Ok(Tensor::from_parts(shape, data))
        })?;
        Ok(self.record(value, Op::Transpose(self.id), &[self.id]))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        Ok(self.record(value, Op::Reshape(self.id), &[self.id]))
    }

    /// Selects rows of the `[rows, cols]` view; indices may repeat.
    pub fn gather_rows(&self, index: Arc<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            let c = t.cols();
            let mut data = Vec::with_capacity(index.len() * c);
            for &i in index.iter() {
                if i >= t.rows() {
                    return Err(Error::shape("gather_rows", t.shape(), &[i]));
                }
                data.extend_from_slice(t.row(i));
            }
            Ok(Tensor::from_parts(vec![index.len(), c], data))
        })?;
        Ok(self.record(value, Op::GatherRows(self.id, index), &[self.id]))
    }

    /// Copy of `self` with rows `index[i]` overwritten by row `i` of `rows`.
    /// Indices must be distinct; all other rows pass through untouched.
    pub fn scatter_rows(&self, rows: Var<'t>, index: Arc<Vec<usize>>) -> Result<Var<'t>> {
        self.same_tape(&rows)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let base = &nodes[self.id].value;
            let src = &nodes[rows.id].value;
            let c = base.cols();
            if src.cols() != c || src.rows() != index.len() {
                return Err(Error::shape("scatter_rows", base.shape(), src.shape()));
            }
            let mut seen = vec![false; base.rows()];
            let mut data = base.data().to_vec();
            for (k, &i) in index.iter().enumerate() {
                if i >= base.rows() || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::invalid(format!("scatter_rows index {i} out of range or repeated")));
                }
                data[i * c..(i + 1) * c].copy_from_slice(src.row(k));
            }
            Tensor::from_parts(vec![base.rows(), c], data)
        };
        Ok(self.record(value, Op::ScatterRows(self.id, rows.id, index), &[self.id, rows.id]))
    }

    /// Sums row `i` into output row `index[i]`; output has `num_rows` rows.
    pub fn scatter_add_rows(&self, index: Arc<Vec<usize>>, num_rows: usize) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            let c = t.cols();
            if index.len() != t.rows() {
                return Err(Error::shape("scatter_add_rows", t.shape(), &[index.len()]));
            }
            let mut data = vec![0.0; num_rows * c];
            for (k, &i) in index.iter().enumerate() {
                if i >= num_rows {
                    return Err(Error::shape("scatter_add_rows", t.shape(), &[i, num_rows]));
                }
                for (d, s) in data[i * c..(i + 1) * c].iter_mut().zip(t.row(k)) {
                    *d += s;
                }
            }
            Ok(Tensor::from_parts(vec![num_rows, c], data))
        })?;
        Ok(self.record(value, Op::ScatterAddRows(self.id, index), &[self.id]))
    }

    /// 1-D convolution over the middle axis of `self: [S, T, C_in]` with
    /// weights `[kernel * C_in, C_out]` (kernel-major), bias `[C_out]` and
    /// symmetric zero padding. Output is `[S, T + 2 pad - kernel + 1, C_out]`.
    pub fn conv1d(&self, weight: Var<'t>, bias: Var<'t>, kernel: usize, pad: usize) -> Result<Var<'t>> {
        self.same_tape(&weight)?;
        self.same_tape(&bias)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let w = &nodes[weight.id].value;
            let b = &nodes[bias.id].value;
            let [s, t, cin] = *x.shape() else {
                return Err(Error::shape("conv1d", x.shape(), w.shape()));
            };
            let cout = w.cols();
            if kernel == 0 || w.shape() != [kernel * cin, cout] || b.numel() != cout || t + 2 * pad < kernel {
                return Err(Error::shape("conv1d", x.shape(), w.shape()));
            }
            let tout = t + 2 * pad - kernel + 1;
            let mut out = vec![0.0; s * tout * cout];
            let (xd, wd) = (x.data(), w.data());
            for si in 0..s {
                for to in 0..tout {
                    let o = &mut out[(si * tout + to) * cout..(si * tout + to + 1) * cout];
                    o.copy_from_slice(b.data());
                    for k in 0..kernel {
                        let ti = to + k;
                        if ti < pad || ti - pad >= t {
                            continue;
                        }
                        let xrow = &xd[(si * t + ti - pad) * cin..(si * t + ti - pad + 1) * cin];
                        for (c, &xv) in xrow.iter().enumerate() {
                            let wrow = &wd[(k * cin + c) * cout..(k * cin + c + 1) * cout];
                            for (ov, wv) in o.iter_mut().zip(wrow) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
            }
            Tensor::from_parts(vec![s, tout, cout], out)
        };
        Ok(self.record(
            value,
            Op::Conv1d {
                x: self.id,
                w: weight.id,
                b: bias.id,
                kernel,
                pad,
            },
            &[self.id, weight.id, bias.id],
        ))
    }

    /// Elementwise multiply by a fixed keep-mask (entries `0` or `1/(1-p)`).
    /// Evaluation mode simply skips this op.
    pub fn dropout(&self, mask: Arc<Vec<f64>>) -> Result<Var<'t>> {
        let value = self.with_value(|t| {
            if mask.len() != t.numel() {
                return Err(Error::shape("dropout", t.shape(), &[mask.len()]));
            }
            let data = t.data().iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
            Ok(Tensor::from_parts(t.shape().to_vec(), data))
        })?;
        Ok(self.record(value, Op::Dropout(self.id, mask), &[self.id]))
    }

    /// Normalizes each row of the trailing axis to zero mean, unit variance.
    pub fn layer_norm(&self, eps: f64) -> Var<'t> {
        let value = self.with_value(|t| {
            let c = t.cols();
            let mut data = t.data().to_vec();
            for row in data.chunks_mut(c) {
                let mean = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                let inv = 1.0 / (var + eps).sqrt();
                row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            }
            Tensor::from_parts(t.shape().to_vec(), data)
        });
        self.record(value, Op::LayerNorm(self.id, eps), &[self.id])
    }

    /// `x · w + b` for a rank-2 weight and a `[1, n]` / `[n]` bias.
    pub fn linear(&self, weight: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
        let y = self.matmul(weight)?;
        match bias {
            None => Ok(y),
            Some(b) => {
                let rows = y.with_value(Tensor::rows);
                let shape = y.shape();
                let y2 = if shape.len() == 2 { y } else { y.reshape(vec![rows, *shape.last().unwrap()])? };
                let out = y2.add(b.broadcast_rows(rows)?)?;
                if shape.len() == 2 {
                    Ok(out)
                } else {
                    out.reshape(shape)
                }
            }
        }
    }
}

pub(crate) fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || !(sb.len() == 2 || sb.len() == 3) {
        return Err(Error::shape("matmul", sa, sb));
    }
    if sb.len() == 2 {
        let (k, n) = (sb[0], sb[1]);
        if a.cols() != k {
            return Err(Error::shape("matmul", sa, sb));
        }
        let m = a.rows();
        let mut out = vec![0.0; m * n];
        gemm(Mat::new(a.data(), m, k), Mat::new(b.data(), k, n), 0.0, &mut out);
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        return Ok(Tensor::from_parts(shape, out));
    }
    let (batch, m, k) = match *sa {
        [bt, m, k] => (bt, m, k),
        _ => return Err(Error::shape("matmul", sa, sb)),
    };
    if sb[0] != batch || sb[1] != k {
        return Err(Error::shape("matmul", sa, sb));
    }
    let n = sb[2];
    let mut out = vec![0.0; batch * m * n];
    for i in 0..batch {
        gemm(
            Mat::new(&a.data()[i * m * k..(i + 1) * m * k], m, k),
            Mat::new(&b.data()[i * k * n..(i + 1) * k * n], k, n),
            0.0,
            &mut out[i * m * n..(i + 1) * m * n],
        );
    }
    Ok(Tensor::from_parts(vec![batch, m, n], out))
}
