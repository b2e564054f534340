//! Measurements shared by the focused test targets and the acceptance run.

use std::sync::Arc;

use hydrogat::data::{synth_basin, Dataset, NormStates};
use hydrogat::graph::{build_graph, BasinGraph};
use hydrogat::model::{
    forward_batch, fuse_branches, gat_forward, gru_gat_step, init_state, predict, temporal_encode, DropoutStream,
    ForwardOptions, MessageGraph, ModelConfig, ModelGraphs,
};
use hydrogat::tensor::{ParamTable, Tensor};

use super::fd::{contract, max_fd_error, random_tensor};

pub fn small_config(t_in: usize, t_out: usize) -> ModelConfig {
    let mut c = ModelConfig::with_width(8, 2, t_in, t_out);
    c.attn_window = 4;
    c
}

/// 3x3 synthetic basin with windows of 6 in, 3 out.
pub fn tiny_basin() -> (BasinGraph, Dataset) {
    let s = synth_basin(5, 3, 3, 300).unwrap();
    let g = build_graph(&s.dem, &s.catchment, &s.targets).unwrap();
    let norm = NormStates::fit(&s.store, 0..300).unwrap();
    (g, Dataset::new(&s.store, 6, 3, norm).unwrap())
}

pub fn fd_gat_layer() -> f64 {
    let g = MessageGraph::new(4, &[(0, 1), (1, 2), (3, 2)]);
    let inputs = [
        random_tensor(&[4, 3], 1, 1.0),
        random_tensor(&[3, 4], 2, 1.0),
        random_tensor(&[4], 3, 1.0),
        random_tensor(&[4], 4, 1.0),
    ];
    max_fd_error(&ParamTable::new(), &inputs, |tape, _, v| {
        let out = gat_forward(&g, v[0], v[1], v[2], v[3], 2).unwrap();
        let a = contract(tape, out.out, 5);
        let b = contract(tape, out.attention, 6);
        a.add(b).unwrap()
    })
}

pub fn fd_gru_cell() -> f64 {
    let config = small_config(6, 3);
    let state = init_state(&config, 4).unwrap();
    let g = MessageGraph::new(5, &[(0, 1), (1, 2), (3, 2), (2, 4)]);
    let inputs = [random_tensor(&[5, 8], 7, 1.0), random_tensor(&[5, 8], 8, 0.9)];
    max_fd_error(&state, &inputs, |tape, p, v| {
        let out = gru_gat_step(&g, v[0], v[1], p, "flow", 2).unwrap();
        contract(tape, out.h, 9)
    })
}

pub fn fd_temporal_encoder() -> f64 {
    let config = small_config(6, 3);
    let state = init_state(&config, 6).unwrap();
    let inputs = [random_tensor(&[2, 6, 3], 10, 1.0)];
    max_fd_error(&state, &inputs, |tape, p, v| {
        let e = temporal_encode(v[0], p, &config).unwrap();
        contract(tape, e, 11)
    })
}

pub fn fd_fusion_and_predictor() -> f64 {
    let config = small_config(6, 3);
    let state = init_state(&config, 12).unwrap();
    let inputs = [
        random_tensor(&[5, 8], 13, 1.0),
        random_tensor(&[2, 8], 14, 1.0),
        random_tensor(&[2], 15, 1.0),
        random_tensor(&[5, 3], 16, 1.0),
    ];
    let rows = Arc::new(vec![4, 1]);
    max_fd_error(&state, &inputs, |tape, p, v| {
        let fused = fuse_branches(v[0], v[1], v[2], rows.clone()).unwrap();
        let y = predict(fused, v[3], rows.clone(), p).unwrap();
        contract(tape, y, 17)
    })
}

/// Whole model, train mode, squared error against the batch labels.
pub fn fd_full_model() -> f64 {
    let (g, ds) = tiny_basin();
    let config = small_config(6, 3);
    let state = init_state(&config, 18).unwrap();
    let graphs = ModelGraphs::new(&g);
    let batch = ds.batch(&[20, 57]);
    let options = ForwardOptions {
        dropout: Some(DropoutStream {
            seed: 3,
            epoch: 1,
            rate: 0.1,
        }),
        ..Default::default()
    };
    max_fd_error(&state, &[], |tape, p, _| {
        let out = forward_batch(tape, p, &graphs, &config, &batch, &options).unwrap();
        let diff = out.prediction.sub(tape.constant(batch.labels.clone())).unwrap();
        diff.mul(diff).unwrap().mean()
    })
}

pub fn perturb(t: &Tensor, index: usize, delta: f64) -> Tensor {
    let mut out = t.clone();
    out.data_mut()[index] += delta;
    out
}
