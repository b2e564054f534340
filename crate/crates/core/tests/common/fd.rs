//! Central finite differences over parameter tables and free inputs.

use hydrogat::tensor::{Bound, ParamTable, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-6;
/// Gradients below this magnitude are compared absolutely; central
/// differences carry roundoff near 1e-10 even where the true gradient is 0.
pub const FD_FLOOR: f64 = 1e-4;

pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Worst relative disagreement `|a - n| / max(|a|, |n|, FD_FLOOR)` between
/// the tape gradient and a central difference, over every parameter entry
/// and every entry of `inputs`.
pub fn max_fd_error<F>(state: &ParamTable, inputs: &[Tensor], f: F) -> f64
where
    F: for<'a> Fn(&'a Tape, &Bound<'a>, &[Var<'a>]) -> Var<'a>,
{
    let tape = Tape::new();
    let bound = state.bind(&tape);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&tape, &bound, &vars);
    let grads = tape.backward(loss).unwrap();
    let param_grads = bound.gradients(&grads);
    let input_grads: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let eval = |state: &ParamTable, inputs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &bound, &vars).item()
    };
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR);

    let mut worst = 0.0f64;
    let names: Vec<String> = state.iter().map(|(k, _)| k.clone()).collect();
    for name in &names {
        let len = state.get(name).unwrap().numel();
        for i in 0..len {
            let mut plus = state.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += FD_EPS;
            let mut minus = state.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= FD_EPS;
            let numeric = (eval(&plus, inputs) - eval(&minus, inputs)) / (2.0 * FD_EPS);
            let a = param_grads.get(name).unwrap().data()[i];
            worst = worst.max(rel(a, numeric));
        }
    }
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_EPS;
            let numeric = (eval(state, &plus) - eval(state, &minus)) / (2.0 * FD_EPS);
            worst = worst.max(rel(input_grads[k].data()[i], numeric));
        }
    }
    worst
}

/// Sum of `out` against fixed random weights, so every entry matters.
pub fn contract<'t>(tape: &'t Tape, out: Var<'t>, seed: u64) -> Var<'t> {
    let w = tape.constant(random_tensor(&out.shape(), seed, 1.0));
    out.mul(w).unwrap().sum()
}
