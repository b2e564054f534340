//! Dense `f64` arrays with a reverse-mode gradient tape.
//!
//! Values are recorded on a [`Tape`] as the forward pass runs; every
//! primitive appends one node holding its output and parent links.
//! [`Tape::backward`] then sweeps the record once in reverse.
//!
//! ```
//! use hydrogat::tensor::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
//! let loss = x.mul(x).unwrap().sum().scale(0.5);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[1.0, 2.0, 3.0]);
//! ```

mod backward;
mod kernels;
mod ops;
mod optim;
mod params;
mod tape;
mod value;

pub use optim::{AdamW, AdamWConfig};
pub use params::{Bound, ParamTable, TableManifest, TensorEntry, TABLE_FORMAT, TABLE_VERSION};
pub use tape::{Gradients, Tape, Var};
pub use value::Tensor;

/// Default epsilon inside [`Var::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Additive causal mask for sliding-window attention: entry `(t, τ)` is 0
/// when `t - window < τ <= t` and `-inf` otherwise.
pub fn causal_window_mask(len: usize, window: usize) -> Tensor {
    let mut data = vec![f64::NEG_INFINITY; len * len];
    for t in 0..len {
        let lo = (t + 1).saturating_sub(window);
        for tau in lo..=t {
            data[t * len + tau] = 0.0;
        }
    }
    Tensor::from_parts(vec![len, len], data)
}
