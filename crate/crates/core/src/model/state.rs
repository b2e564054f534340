use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::data::NUM_FEATURES;
use crate::error::Result;
use crate::tensor::{ParamTable, Tensor};

/// All learnable parameters, addressed by name.
pub type ModelState = ParamTable;

pub(crate) const GATES: [&str; 3] = ["z", "r", "h"];

pub(crate) fn branch_prefix(catchment: bool) -> &'static str {
    if catchment {
        "catch"
    } else {
        "flow"
    }
}

/// Fresh parameters. Weights are uniform in `±sqrt(1 / fan_in)`, biases and
/// the fusion logits start at zero, layer-norm gains at one.
pub fn init_state(config: &ModelConfig, seed: u64) -> Result<ModelState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = ParamTable::new();
    let (d, h) = (config.d_model, config.hidden);
    let mut weight = |table: &mut ParamTable, name: &str, fan_in: usize, shape: &[usize]| {
        let bound = (1.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        table.insert(name, Tensor::new(shape.to_vec(), data).expect("shape matches count"));
    };

    weight(&mut table, "enc.w_in", NUM_FEATURES, &[NUM_FEATURES, d]);
    for m in ["wq", "wk", "wv", "wo"] {
        weight(&mut table, &format!("enc.{m}"), d, &[d, d]);
    }
    weight(&mut table, "enc.ff1.w", d, &[d, 2 * d]);
    weight(&mut table, "enc.ff2.w", 2 * d, &[2 * d, d]);
    for catchment in [false, true] {
        if catchment && !config.uses_catchment() {
            continue;
        }
        let b = branch_prefix(catchment);
        for g in GATES {
            let din = if g == "h" { d + h } else { d };
            weight(&mut table, &format!("{b}.{g}.w"), din, &[din, h]);
            weight(&mut table, &format!("{b}.{g}.a_src"), config.head_dim(), &[h]);
            weight(&mut table, &format!("{b}.{g}.a_dst"), config.head_dim(), &[h]);
            weight(&mut table, &format!("{b}.{g}.mix.w"), h, &[h, h]);
        }
    }
    weight(&mut table, "pred.rain.w", 3, &[3, h]);
    weight(&mut table, "pred.fuse1.w", 2 * h, &[2 * h, h]);
    weight(&mut table, "pred.fuse2.w", h, &[h, 1]);

    let zeros = |table: &mut ParamTable, name: &str, n: usize| table.insert(name, Tensor::zeros(vec![n]));
    zeros(&mut table, "enc.b_in", d);
    zeros(&mut table, "enc.bo", d);
    zeros(&mut table, "enc.ff1.b", 2 * d);
    zeros(&mut table, "enc.ff2.b", d);
    for ln in ["enc.ln1", "enc.ln2"] {
        table.insert(format!("{ln}.gain"), Tensor::full(vec![d], 1.0));
        zeros(&mut table, &format!("{ln}.bias"), d);
    }
    for catchment in [false, true] {
        if catchment && !config.uses_catchment() {
            continue;
        }
        for g in GATES {
            zeros(&mut table, &format!("{}.{g}.mix.b", branch_prefix(catchment)), h);
        }
    }
    if config.uses_catchment() {
        zeros(&mut table, "fusion.alpha_raw", config.num_heads);
    }
    zeros(&mut table, "pred.rain.b", h);
    zeros(&mut table, "pred.fuse1.b", h);
    zeros(&mut table, "pred.fuse2.b", 1);
    Ok(table)
}
