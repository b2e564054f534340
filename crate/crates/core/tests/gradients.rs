mod common;

use common::checks;

const CELL_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;

#[test]
fn gat_layer_matches_finite_differences() {
    let err = checks::fd_gat_layer();
    assert!(err < CELL_TOL, "{err:e}");
}

#[test]
fn gru_gat_cell_matches_finite_differences() {
    let err = checks::fd_gru_cell();
    assert!(err < CELL_TOL, "{err:e}");
}

#[test]
fn temporal_encoder_matches_finite_differences() {
    let err = checks::fd_temporal_encoder();
    assert!(err < CELL_TOL, "{err:e}");
}

#[test]
fn fusion_and_predictor_match_finite_differences() {
    let err = checks::fd_fusion_and_predictor();
    assert!(err < CELL_TOL, "{err:e}");
}

#[test]
fn full_model_matches_finite_differences() {
    let err = checks::fd_full_model();
    assert!(err < MODEL_TOL, "{err:e}");
}
