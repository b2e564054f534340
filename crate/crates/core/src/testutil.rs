//! Central finite-difference oracle for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Tape, Tensor, Var};

pub(crate) const FD_EPS: f64 = 1e-6;

pub(crate) fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Largest relative error between the tape gradient and a central
/// difference of `f` with respect to every entry of every input.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub(crate) fn max_fd_error(inputs: &[Tensor], floor: f64, f: impl for<'a> Fn(&'a Tape, &[Var<'a>]) -> Var<'a> + Copy) -> f64 {
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vars);
        let grads = tape.backward(loss).unwrap();
        vars.iter().map(|v| grads.wrt(*v)).collect()
    };
    let eval = |inputs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars).item()
    };
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_EPS;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_EPS);
            let a = analytic[k].data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}
