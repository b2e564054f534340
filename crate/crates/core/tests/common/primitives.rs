//! Finite-difference sweep over every differentiable tensor op.

use std::sync::Arc;

use hydrogat::tensor::{causal_window_mask, ParamTable, Tape, Tensor, Var};

use super::fd::{contract, max_fd_error, random_tensor};

fn r(shape: &[usize], seed: u64) -> Tensor {
    random_tensor(shape, seed, 1.0)
}

/// Worst relative error of each primitive against central differences.
pub fn fd_primitives() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut check = |name: &'static str, inputs: Vec<Tensor>, f: &dyn for<'a> Fn(&'a Tape, &[Var<'a>]) -> Var<'a>| {
        let err = max_fd_error(&ParamTable::new(), &inputs, |tape, _, v| {
            let y = f(tape, v);
            contract(tape, y, 99)
        });
        out.push((name, err));
    };

    check("add", vec![r(&[3, 4], 1), r(&[3, 4], 2)], &|_, v| v[0].add(v[1]).unwrap());
    check("sub", vec![r(&[3, 4], 3), r(&[3, 4], 4)], &|_, v| v[0].sub(v[1]).unwrap());
    check("mul", vec![r(&[3, 4], 5), r(&[3, 4], 6)], &|_, v| v[0].mul(v[1]).unwrap());
    check("affine", vec![r(&[2, 3], 7)], &|_, v| v[0].affine(-1.5, 0.25));
    check("scale", vec![r(&[2, 3], 8)], &|_, v| v[0].scale(2.5));
    check("one_minus", vec![r(&[2, 3], 9)], &|_, v| v[0].one_minus());
    check("sigmoid", vec![r(&[2, 3], 10)], &|_, v| v[0].sigmoid());
    check("tanh", vec![r(&[2, 3], 11)], &|_, v| v[0].tanh());
    check("relu", vec![r(&[2, 5], 12)], &|_, v| v[0].relu());
    check("leaky_relu", vec![r(&[2, 5], 13)], &|_, v| v[0].leaky_relu(0.2));
    check("exp", vec![r(&[2, 3], 14)], &|_, v| v[0].exp());
    check("ln", vec![r(&[2, 3], 15)], &|_, v| v[0].mul(v[0]).unwrap().affine(1.0, 0.5).ln());
    check("sum", vec![r(&[2, 3], 16)], &|_, v| v[0].mul(v[0]).unwrap().sum());
    check("mean", vec![r(&[2, 3], 17)], &|_, v| v[0].mul(v[0]).unwrap().mean());
    check("matmul", vec![r(&[3, 4], 18), r(&[4, 2], 19)], &|_, v| v[0].matmul(v[1]).unwrap());
    check("matmul_batched", vec![r(&[2, 3, 4], 20), r(&[2, 4, 3], 21)], &|_, v| v[0].matmul(v[1]).unwrap());
    check("linear", vec![r(&[3, 4], 22), r(&[4, 2], 23), r(&[2], 24)], &|_, v| {
        v[0].linear(v[1], Some(v[2])).unwrap()
    });
    check("concat", vec![r(&[3, 2], 25), r(&[3, 3], 26)], &|_, v| Var::concat(&[v[0], v[1]]).unwrap());
    check("slice_cols", vec![r(&[3, 5], 27)], &|_, v| v[0].slice_cols(1, 4).unwrap());
    check("slice_rows", vec![r(&[5, 3], 28)], &|_, v| v[0].slice_rows(1, 3).unwrap());
    check("softmax_with_mask", vec![r(&[8, 4], 29)], &|_, v| {
        v[0].softmax_with_mask(&causal_window_mask(4, 2)).unwrap()
    });
    check("segment_softmax", vec![r(&[5, 2], 30)], &|_, v| {
        v[0].segment_softmax(Arc::new(vec![0, 1, 0, 2, 1]), 3).unwrap()
    });
    check("broadcast_rows", vec![r(&[1, 3], 31)], &|_, v| v[0].broadcast_rows(4).unwrap());
    check("tile_rows", vec![r(&[2, 3], 32)], &|_, v| v[0].tile_rows(3));
    check("repeat_rows", vec![r(&[2, 3], 33)], &|_, v| v[0].repeat_rows(2));
    check("repeat_cols", vec![r(&[2, 3], 34)], &|_, v| v[0].repeat_cols(2));
    check("group_sum_cols", vec![r(&[2, 6], 35)], &|_, v| v[0].group_sum_cols(3).unwrap());
    check("transpose", vec![r(&[2, 3], 36)], &|_, v| v[0].transpose().unwrap());
    check("reshape", vec![r(&[2, 6], 37)], &|_, v| v[0].reshape(vec![3, 4]).unwrap());
    check("gather_rows", vec![r(&[4, 2], 38)], &|_, v| v[0].gather_rows(Arc::new(vec![3, 0, 3, 1])).unwrap());
    check("scatter_rows", vec![r(&[4, 2], 39), r(&[2, 2], 40)], &|_, v| {
        v[0].scatter_rows(v[1], Arc::new(vec![2, 0])).unwrap()
    });
    check("scatter_add_rows", vec![r(&[5, 2], 41)], &|_, v| {
        v[0].scatter_add_rows(Arc::new(vec![1, 0, 1, 2, 1]), 3).unwrap()
    });
    check("conv1d", vec![r(&[2, 5, 3], 42), r(&[9, 2], 43), r(&[2], 44)], &|_, v| {
        v[0].conv1d(v[1], v[2], 3, 1).unwrap()
    });
    check("dropout", vec![r(&[2, 3], 45)], &|_, v| {
        v[0].dropout(Arc::new(vec![2.0, 0.0, 2.0, 2.0, 0.0, 2.0])).unwrap()
    });
    check("layer_norm", vec![r(&[3, 5], 46)], &|_, v| v[0].layer_norm(1e-5));
    out
}
